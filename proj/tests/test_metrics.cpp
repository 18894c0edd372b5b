#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "decurtain/metrics.hpp"
#include "test_support.hpp"

#include <cmath>
#include <limits>

using namespace decurtain;
using decurtain::testing::Random;

namespace {

// Direct (non-separable) windowed SSIM of one x-y slice: 11x11 Gaussian
// weights restricted to the image and renormalized at every pixel.
double direct_slice_ssim(const Volume& a, const Volume& b, Eigen::Index k) {
  const Extents e = a.extents();
  double total = 0;
  for (Eigen::Index j = 0; j < e.ny; ++j)
    for (Eigen::Index i = 0; i < e.nx; ++i) {
      double wsum = 0, ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dj = -5; dj <= 5; ++dj)
        for (int di = -5; di <= 5; ++di) {
          const Eigen::Index ii = i + di, jj = j + dj;
          if (ii < 0 || jj < 0 || ii >= e.nx || jj >= e.ny) continue;
          const double w = std::exp(-(di * di + dj * dj) / (2 * 1.5 * 1.5));
          const double x = a(ii, jj, k), y = b(ii, jj, k);
          wsum += w;
          ma += w * x;
          mb += w * y;
          saa += w * x * x;
          sbb += w * y * y;
          sab += w * x * y;
        }
      ma /= wsum;
      mb /= wsum;
      const double va = saa / wsum - ma * ma, vb = sbb / wsum - mb * mb, cov = sab / wsum - ma * mb;
      const double c1 = 1e-4, c2 = 9e-4;
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  return total / double(e.nx * e.ny);
}

double direct_ssim(const Volume& a, const Volume& b) {
  double s = 0;
  for (Eigen::Index k = 0; k < a.extents().nz; ++k) s += direct_slice_ssim(a, b, k);
  return s / double(a.extents().nz);
}

}  // namespace

TEST_CASE("mse and psnr examples") {
  const Extents e{4, 5, 3};
  const Volume ref(e, 0.5);
  CHECK(mse(ref, Volume(e, 0.6)) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(psnr(ref, Volume(e, 0.6)) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(psnr(ref, Volume(e, 0.51)) == doctest::Approx(40.0).epsilon(1e-9));
  CHECK(psnr(ref, ref) == std::numeric_limits<double>::infinity());
  CHECK(mse(ref, ref) == 0.0);
  CHECK_THROWS_AS(mse(ref, Volume(Extents{4, 5, 2})), DimensionError);
}

TEST_CASE("ssim of identical inputs is one and ssim is symmetric") {
  Random rng(51);
  const Volume a = rng.volume(Extents{17, 13, 3}, 0, 1), b = rng.volume(Extents{17, 13, 3}, 0, 1);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(a, b) == ssim(b, a));
  CHECK(ssim(a, b) < 0.5);
  const Volume flat(Extents{8, 8, 2}, 0.25);
  CHECK(ssim(flat, flat) == 1.0);
}

TEST_CASE("a brightness shift lowers ssim") {
  Random rng(52);
  const Volume ref = rng.volume(Extents{12, 12, 2}, 0, 0.4);
  const Volume shifted(ref.extents(), (ref.array() + 0.5).eval());
  CHECK(ssim(ref, shifted) < 1.0);
  CHECK(ssim(ref, shifted) > 0.0);
}

TEST_CASE("ssim matches direct windowed evaluation") {
  Volume checker(Extents{16, 14, 2});
  for (Eigen::Index k = 0; k < 2; ++k)
    for (Eigen::Index j = 0; j < 14; ++j)
      for (Eigen::Index i = 0; i < 16; ++i) checker(i, j, k) = ((i / 3 + j / 2 + k) % 2) ? 0.8 : 0.2;
  Random rng(53);
  Volume noisy = checker;
  for (Eigen::Index n = 0; n < noisy.size(); ++n) noisy[n] = std::clamp(noisy[n] + rng.uniform(-0.2, 0.2), 0.0, 1.0);
  CHECK(std::abs(ssim(checker, noisy) - direct_ssim(checker, noisy)) <= 1e-9);

  // windows wider than the image are cropped on every side
  const Volume tiny_a = rng.volume(Extents{4, 3, 1}, 0, 1), tiny_b = rng.volume(Extents{4, 3, 1}, 0, 1);
  CHECK(std::abs(ssim(tiny_a, tiny_b) - direct_ssim(tiny_a, tiny_b)) <= 1e-9);
}

TEST_CASE("psnr falls as corruption grows") {
  Random rng(54);
  const Volume ref = rng.volume(Extents{10, 10, 4}, 0.2, 0.8);
  const Volume noise = rng.volume(ref.extents(), -1, 1);
  double prev = std::numeric_limits<double>::infinity();
  double prev_ssim = 1.0;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    const Volume x(ref.extents(), (ref.array() + amp * noise.array()).eval());
    const MetricsReport r = compare_volumes(ref, x);
    CHECK(r.psnr < prev);
    CHECK(r.ssim < prev_ssim);
    CHECK(r.psnr == doctest::Approx(10 * std::log10(1 / r.mse)).epsilon(1e-12));
    prev = r.psnr;
    prev_ssim = r.ssim;
  }
}
