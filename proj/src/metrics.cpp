#include "decurtain/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace decurtain {

namespace {

constexpr int kRadius = 5;  // 11-tap window
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

struct Kernel {
  double w[2 * kRadius + 1];
  Kernel() {
    for (int t = -kRadius; t <= kRadius; ++t) w[t + kRadius] = std::exp(-0.5 * t * t / (kSigma * kSigma));
  }
};

/// Cropped, renormalized separable Gaussian filter of an nx-by-ny image.
void gauss_filter(const std::vector<double>& in, std::vector<double>& out, Eigen::Index nx,
                  Eigen::Index ny, const Kernel& k) {
  std::vector<double> tmp(in.size());
  for (Eigen::Index j = 0; j < ny; ++j)
    for (Eigen::Index i = 0; i < nx; ++i) {
      double acc = 0, wsum = 0;
      for (int t = -kRadius; t <= kRadius; ++t) {
        const Eigen::Index ii = i + t;
        if (ii < 0 || ii >= nx) continue;
        acc += k.w[t + kRadius] * in[ii + nx * j];
        wsum += k.w[t + kRadius];
      }
      tmp[i + nx * j] = acc / wsum;
    }
  for (Eigen::Index j = 0; j < ny; ++j)
    for (Eigen::Index i = 0; i < nx; ++i) {
      double acc = 0, wsum = 0;
      for (int t = -kRadius; t <= kRadius; ++t) {
        const Eigen::Index jj = j + t;
        if (jj < 0 || jj >= ny) continue;
        acc += k.w[t + kRadius] * tmp[i + nx * jj];
        wsum += k.w[t + kRadius];
      }
      out[i + nx * j] = acc / wsum;
    }
}

double slice_ssim(const double* a, const double* b, Eigen::Index nx, Eigen::Index ny, const Kernel& k) {
  const auto n = static_cast<std::size_t>(nx * ny);
  std::vector<double> aa(n), bb(n), ab(n), mu_a(n), mu_b(n), e_aa(n), e_bb(n), e_ab(n);
  for (std::size_t p = 0; p < n; ++p) {
    aa[p] = a[p] * a[p];
    bb[p] = b[p] * b[p];
    ab[p] = a[p] * b[p];
  }
  gauss_filter(std::vector<double>(a, a + n), mu_a, nx, ny, k);
  gauss_filter(std::vector<double>(b, b + n), mu_b, nx, ny, k);
  gauss_filter(aa, e_aa, nx, ny, k);
  gauss_filter(bb, e_bb, nx, ny, k);
  gauss_filter(ab, e_ab, nx, ny, k);
  double total = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const double ma = mu_a[p], mb = mu_b[p];
    const double va = e_aa[p] - ma * ma, vb = e_bb[p] - mb * mb, cov = e_ab[p] - ma * mb;
    const double num = (2.0 * (ma * mb) + kC1) * (2.0 * cov + kC2);
    const double den = (ma * ma + mb * mb + kC1) * (va + vb + kC2);
    total += num / den;
  }
  return total / double(n);
}

}  // namespace

double mse(const Volume& ref, const Volume& x) {
  require_same_extents(ref.extents(), x.extents(), "mse");
  double acc = 0;
  for (Eigen::Index n = 0; n < ref.size(); ++n) {
    const double d = ref[n] - x[n];
    acc += d * d;
  }
  return acc / double(ref.size());
}

double psnr(const Volume& ref, const Volume& x) {
  const double m = mse(ref, x);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

double ssim(const Volume& ref, const Volume& x) {
  require_same_extents(ref.extents(), x.extents(), "ssim");
  const Extents e = ref.extents();
  const Eigen::Index plane = e.nx * e.ny;
  const Kernel k;
  std::vector<double> per_slice(static_cast<std::size_t>(e.nz));
#pragma omp parallel for schedule(static)
  for (Eigen::Index z = 0; z < e.nz; ++z) {
    per_slice[static_cast<std::size_t>(z)] =
        slice_ssim(ref.array().data() + plane * z, x.array().data() + plane * z, e.nx, e.ny, k);
  }
  double total = 0;
  for (double v : per_slice) total += v;
  return total / double(e.nz);
}

MetricsReport compare_volumes(const Volume& ref, const Volume& x) {
  return {psnr(ref, x), mse(ref, x), ssim(ref, x)};
}

}  // namespace decurtain
