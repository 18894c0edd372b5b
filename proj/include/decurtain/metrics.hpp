#pragma once

#include "decurtain/volume.hpp"

namespace decurtain {

struct MetricsReport {
  double psnr = 0.0;  // dB, +inf for identical inputs
  double mse = 0.0;
  double ssim = 0.0;
};

/// Mean squared difference over all voxels.
double mse(const Volume& ref, const Volume& x);

/// 10 log10(1 / mse), peak value 1. Identical inputs give +infinity.
double psnr(const Volume& ref, const Volume& x);

/// Mean over x-y slices of single-scale 2D SSIM with an 11x11 Gaussian window
/// (std 1.5), C1 = 0.01^2, C2 = 0.03^2. Near the slice border the window is
/// cropped to the image and its weights renormalized, so every pixel
/// contributes to the mean SSIM map.
double ssim(const Volume& ref, const Volume& x);

MetricsReport compare_volumes(const Volume& ref, const Volume& x);

}  // namespace decurtain
