#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "decurtain/prox.hpp"
#include "oracles/numeric.hpp"
#include "test_support.hpp"

#include <limits>

using namespace decurtain;
using decurtain::testing::Random;

namespace {

StackedField single(std::initializer_list<double> channel_values) {
  const int d = static_cast<int>(channel_values.size());
  StackedField w(Extents{1, 1, 1}, d);
  int j = 0;
  for (double v : channel_values) w[j++] = v;
  return w;
}

std::array<double, 3> project_one(double a, double b, double c, double f) {
  double u, s, l;
  project_voxel(a, b, c, f, u, s, l);
  return {u, s, l};
}

}  // namespace

TEST_CASE("soft_shrink examples") {
  CHECK(soft_shrink(single({0.5}), 1.0)[0] == 0.0);
  CHECK(soft_shrink(single({3.0}), 1.0)[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(soft_shrink(single({-3.0}), 1.0)[0] == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(soft_shrink(single({1.0}), 1.0)[0] == 0.0);

  Random rng(21);
  const StackedField w = rng.field(Extents{4, 3, 2}, 1);
  CHECK((soft_shrink(w, 0.0).array() == w.array()).all());
  CHECK_THROWS(soft_shrink(w, -0.1));
}

TEST_CASE("coupled_shrink examples") {
  const StackedField zero = coupled_shrink(single({3.0, 4.0}), 5.0);
  CHECK(zero[0] == 0.0);
  CHECK(zero[1] == 0.0);
  const StackedField half = coupled_shrink(single({3.0, 4.0}), 2.5);
  CHECK(half[0] == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(half[1] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("coupled_shrink equals the radial numeric minimizer") {
  Random rng(22);
  const Extents e{5, 4, 3};
  for (int d = 2; d <= 3; ++d) {
    const StackedField w = rng.field(e, d, -2.0, 2.0);
    const StackedField got = coupled_shrink(w, 0.7);
    const Eigen::Index n = e.size();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d == 2) {
        const auto ref = oracle::radial_prox<2>({w[i], w[i + n]}, 0.7);
        CHECK(std::abs(got[i] - ref[0]) < 1e-8);
        CHECK(std::abs(got[i + n] - ref[1]) < 1e-8);
      } else {
        const auto ref = oracle::radial_prox<3>({w[i], w[i + n], w[i + 2 * n]}, 0.7);
        for (int c = 0; c < 3; ++c) CHECK(std::abs(got[i + c * n] - ref[c]) < 1e-8);
      }
    }
  }
}

TEST_CASE("coupled_shrink with one channel is soft_shrink") {
  Random rng(23);
  const StackedField w = rng.field(Extents{7, 5, 3}, 1, -3, 3);
  for (double lambda : {0.0, 0.3, 1.0, 2.5}) {
    CHECK((coupled_shrink(w, lambda).array() == soft_shrink(w, lambda).array()).all());
  }
}

TEST_CASE("shrinkage is firmly nonexpansive") {
  Random rng(24);
  const Extents e{3, 3, 3};
  for (int trial = 0; trial < 200; ++trial) {
    const int d = rng.integer(1, 3);
    const double lambda = rng.uniform(0, 2);
    const StackedField x = rng.field(e, d, -3, 3), y = rng.field(e, d, -3, 3);
    const StackedField px = coupled_shrink(x, lambda), py = coupled_shrink(y, lambda);
    const double dp = (px.array() - py.array()).matrix().squaredNorm();
    const double inner = ((px.array() - py.array()) * (x.array() - y.array())).sum();
    CHECK(std::sqrt(dp) <= (x.array() - y.array()).matrix().norm() + 1e-12);
    CHECK(dp <= inner + 1e-12);
  }
}

TEST_CASE("prox of the separable dual term splits by block") {
  // mu1|y1|_2 + mu2|y2| + |y3| + mu3|y4|_2 + 1/2 |y - z|^2 for one voxel:
  // the objective is a sum over blocks, so its minimizer is the blockwise
  // numeric minimizer, which must match the blockwise shrinkage.
  Random rng(25);
  for (int trial = 0; trial < 50; ++trial) {
    const double w[4] = {rng.uniform(0, 1), rng.uniform(0, 1), 1.0, rng.uniform(0, 1)};
    const std::array<double, 2> z1{rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const double z2 = rng.uniform(-2, 2), z3 = rng.uniform(-2, 2);
    const std::array<double, 2> z4{rng.uniform(-2, 2), rng.uniform(-2, 2)};

    const auto y1 = oracle::radial_prox<2>(z1, w[0]);
    const double y2 = oracle::radial_prox<1>({z2}, w[1])[0];
    const double y3 = oracle::radial_prox<1>({z3}, w[2])[0];
    const auto y4 = oracle::radial_prox<2>(z4, w[3]);
    CHECK(std::abs(coupled_shrink(single({z1[0], z1[1]}), w[0])[0] - y1[0]) < 1e-8);
    CHECK(std::abs(coupled_shrink(single({z1[0], z1[1]}), w[0])[1] - y1[1]) < 1e-8);
    CHECK(std::abs(soft_shrink(single({z2}), w[1])[0] - y2) < 1e-8);
    CHECK(std::abs(soft_shrink(single({z3}), w[2])[0] - y3) < 1e-8);
    CHECK(std::abs(coupled_shrink(single({z4[0], z4[1]}), w[3])[0] - y4[0]) < 1e-8);
    CHECK(std::abs(coupled_shrink(single({z4[0], z4[1]}), w[3])[1] - y4[1]) < 1e-8);
  }
}

TEST_CASE("project_C examples") {
  auto feasible = project_one(0.5, 0.2, 0.3, 1.0);
  CHECK(feasible[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(feasible[1] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(feasible[2] == doctest::Approx(0.3).epsilon(1e-15));

  const auto clamp_high = project_one(2, 0, 0, 0);
  CHECK(clamp_high[0] == 1.0);
  CHECK(clamp_high[1] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(clamp_high[2] == doctest::Approx(-0.5).epsilon(1e-15));
  const auto ref_high = oracle::projection_by_search(2, 0, 0, 0);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(clamp_high[i] - ref_high[i]) < 1e-8);

  const auto clamp_low = project_one(-1, 0, 0, 0.5);
  CHECK(clamp_low[0] == 0.0);
  CHECK(clamp_low[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(clamp_low[2] == doctest::Approx(0.25).epsilon(1e-15));
  const auto ref_low = oracle::projection_by_search(-1, 0, 0, 0.5);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(clamp_low[i] - ref_low[i]) < 1e-8);
}

TEST_CASE("project_C on volumes: feasibility, idempotence, oracle") {
  Random rng(26);
  const Extents e{6, 5, 4};
  const Volume a = rng.volume(e, -2, 3), b = rng.volume(e, -2, 2), c = rng.volume(e, -2, 2);
  const Volume f = rng.volume(e, 0, 1);
  const SplitState p = project_C(a, b, c, f);
  CHECK((p.u.array() + p.s.array() + p.l.array() - f.array()).abs().maxCoeff() <= 1e-15);
  CHECK(p.u.array().minCoeff() >= 0.0);
  CHECK(p.u.array().maxCoeff() <= 1.0);

  const SplitState again = project_C(p.u, p.s, p.l, f);
  CHECK((again.u.array() - p.u.array()).abs().maxCoeff() <= 1e-14);
  CHECK((again.s.array() - p.s.array()).abs().maxCoeff() <= 1e-14);
  CHECK((again.l.array() - p.l.array()).abs().maxCoeff() <= 1e-14);

  for (Eigen::Index n = 0; n < f.size(); ++n) {
    const auto ref = oracle::projection_by_search(a[n], b[n], c[n], f[n]);
    CHECK(std::abs(p.u[n] - ref[0]) < 1e-8);
    CHECK(std::abs(p.s[n] - ref[1]) < 1e-8);
    CHECK(std::abs(p.l[n] - ref[2]) < 1e-8);
  }

  CHECK_THROWS_AS(project_C(a, b, c, Volume(Extents{1, 1, 1})), DimensionError);
}

TEST_CASE("projection optimality against random feasible points") {
  Random rng(27);
  for (int voxel = 0; voxel < 20; ++voxel) {
    const double a = rng.uniform(-2, 3), b = rng.uniform(-2, 2), c = rng.uniform(-2, 2), f = rng.uniform(0, 1);
    const auto p = project_one(a, b, c, f);
    const double best = (p[0] - a) * (p[0] - a) + (p[1] - b) * (p[1] - b) + (p[2] - c) * (p[2] - c);
    double nearest = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 10000; ++k) {
      const double u = rng.uniform(0, 1), s = rng.uniform(-4, 4), l = f - u - s;
      nearest = std::min(nearest, (u - a) * (u - a) + (s - b) * (s - b) + (l - c) * (l - c));
    }
    CHECK(best <= nearest + 1e-12);
  }
}
