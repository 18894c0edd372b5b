// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include "decurtain/cli.hpp"
#include "decurtain/prox.hpp"
#include "oracles/admm.hpp"
#include "oracles/numeric.hpp"
#include "test_support.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include <unistd.h>

using namespace decurtain;
using decurtain::testing::Random;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << title << ": " << o.detail << " ("
            << seconds_since(t0) << " s)" << std::endl;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

Outcome operators() {
  const auto t0 = Clock::now();
  Random rng(101);
  double worst = 0;
  for (Eigen::Index nx = 1; nx <= 4; ++nx)
    for (Eigen::Index ny = 1; ny <= 4; ++ny)
      for (Eigen::Index nz = 1; nz <= 4; ++nz) {
        const Extents e{nx, ny, nz};
        const Volume v = rng.volume(e);
        for (DiffOp op : kAllDiffOps) {
          const Eigen::MatrixXd dense = oracle::dense_operator(op, e);
          worst = std::max(worst, (apply(v, op).array().matrix() - dense * oracle::as_vector(v)).cwiseAbs().maxCoeff());
          const StackedField w = rng.field(e, channels(op));
          worst = std::max(
              worst, (apply_adjoint(w, op).array().matrix() - dense.transpose() * w.array().matrix()).cwiseAbs().maxCoeff());
        }
      }
  double worst_rel = 0;
  for (DiffOp op : kAllDiffOps) {
    for (int trial = 0; trial < 20; ++trial) {
      const Extents e{rng.integer(1, 9), rng.integer(1, 9), rng.integer(1, 9)};
      const Volume v = rng.volume(e);
      const StackedField w = rng.field(e, channels(op));
      const double lhs = (apply(v, op).array() * w.array()).sum();
      const double rhs = (v.array() * apply_adjoint(w, op).array()).sum();
      worst_rel = std::max(worst_rel, std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-300}));
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-13 && worst_rel <= 1e-10 && t < 10,
          "max dense diff " + fmt(worst) + ", max adjoint rel gap " + fmt(worst_rel) + ", " + fmt(t) + " s"};
}

Outcome norm_bound_check() {
  const auto t0 = Clock::now();
  const Extents e{16, 16, 16};
  const double ic = estimate_norm_K(Model::IC, e, 300);
  const double icrev = estimate_norm_K(Model::ICREV, e, 300);
  const double t = seconds_since(t0);
  return {ic > 0 && ic <= 24 + 1e-8 && icrev > 0 && icrev <= 12 + 1e-8 && t < 5,
          "IC " + fmt(ic) + ", ICREV " + fmt(icrev) + ", " + fmt(t) + " s"};
}

Outcome projection() {
  Random rng(103);
  const Extents e{100, 100, 10};
  const Volume a = rng.volume(e, -2, 3), b = rng.volume(e, -2, 2), c = rng.volume(e, -2, 2);
  const Volume f = rng.volume(e, 0, 1);
  const SplitState p = project_C(a, b, c, f);
  double worst = 0;
  for (Eigen::Index n = 0; n < f.size(); ++n) {
    const auto ref = oracle::projection_by_search(a[n], b[n], c[n], f[n]);
    worst = std::max({worst, std::abs(p.u[n] - ref[0]), std::abs(p.s[n] - ref[1]), std::abs(p.l[n] - ref[2])});
  }
  const SplitState q = project_C(p.u, p.s, p.l, f);
  const double idem = std::max({(q.u.array() - p.u.array()).abs().maxCoeff(), (q.s.array() - p.s.array()).abs().maxCoeff(),
                                (q.l.array() - p.l.array()).abs().maxCoeff()});
  return {worst <= 1e-8 && idem <= 1e-14,
          std::to_string(f.size()) + " voxels, oracle diff " + fmt(worst) + ", idempotence " + fmt(idem)};
}

Outcome shrinkage() {
  Random rng(104);
  double worst = 0;
  const Extents e{100, 100, 1};
  for (int d = 2; d <= 3; ++d) {
    for (double lambda : {0.05, 0.7, 1.9}) {
      const StackedField w = rng.field(e, d, -2, 2);
      const StackedField got = coupled_shrink(w, lambda);
      const Eigen::Index n = e.size();
      for (Eigen::Index i = 0; i < n; ++i) {
        if (d == 2) {
          const auto ref = oracle::radial_prox<2>({w[i], w[i + n]}, lambda);
          for (int c = 0; c < 2; ++c) worst = std::max(worst, std::abs(got[i + c * n] - ref[c]));
        } else {
          const auto ref = oracle::radial_prox<3>({w[i], w[i + n], w[i + 2 * n]}, lambda);
          for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(got[i + c * n] - ref[c]));
        }
      }
    }
  }
  return {worst <= 1e-8, "3 x 10^4 vectors for each of d = 2, 3, max diff " + fmt(worst)};
}

Outcome solver_vs_admm() {
  const auto t0 = Clock::now();
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Random rng(seed);
    const Volume f = rng.volume(Extents{4, 4, 4}, 0, 1);
    for (Method m : {Method::IC, Method::ICREV}) {
      ModelParams p;
      p.method = m;
      p.mu1 = 0.2;
      p.mu2 = 0.3;
      p.mu3 = 0.5;
      p.max_iters = 5000;
      p.rel_tol = 0;
      p.energy_stride = 0;
      const double got = solve_pdhg(f, p).report.final_energy;
      const auto ref = oracle::admm_decompose(m == Method::IC ? Model::IC : Model::ICREV, f, p.mu1, p.mu2, p.mu3, 5000);
      worst = std::max(worst, std::abs(got - ref.energy));
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-4 && t < 60, "max |E_pdhg - E_admm| " + fmt(worst) + ", " + fmt(t) + " s"};
}

Outcome feasibility() {
  const Phantom ph = generate_phantom(phantom_preset("hard-edge", 1));
  const Volume& f = ph.corrupted;
  ModelParams p;
  p.max_iters = 500;
  p.rel_tol = 0;
  p.energy_stride = 0;
  double worst = 0, lo = 1, hi = 0;
  int calls = 0;
  solve_pdhg(f, p, [&](int, const SplitState& x) {
    ++calls;
    worst = std::max(worst, feasibility_error(x, f));
    lo = std::min(lo, x.u.array().minCoeff());
    hi = std::max(hi, x.u.array().maxCoeff());
  });
  return {calls == 500 && worst <= 1e-12 && lo >= -1e-12 && hi <= 1 + 1e-12,
          to_string(f.extents()) + ", " + std::to_string(calls) + " iterations, max residual " + fmt(worst) +
              ", u in [" + fmt(lo) + ", " + fmt(hi) + "]"};
}

Outcome gauge() {
  Random rng(107);
  const Extents e{16, 16, 16};
  // dyadic values keep every sum exact
  auto dyadic = [&](double lo, double hi) {
    Volume v(e);
    for (Eigen::Index n = 0; n < v.size(); ++n) v[n] = std::ldexp(std::floor(rng.uniform(lo, hi) * 1024), -10);
    return v;
  };
  const SplitState x{dyadic(0, 1), dyadic(-1, 1), dyadic(-1, 1)};
  const Volume f(e, (x.u.array() + x.s.array() + x.l.array()).eval());
  const ModelParams p;
  const double e0 = energy_ic(x, f, p.mu1, p.mu2, p.mu3);
  double worst = 0;
  bool exact = true;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> m(static_cast<std::size_t>(e.nz));
    for (double& v : m) v = std::ldexp(std::floor(rng.uniform(-2, 2) * 256), -8);
    const SplitState y = gauge_shift(x, m);
    worst = std::max(worst, std::abs(energy_ic(y, f, p.mu1, p.mu2, p.mu3) - e0));
    exact = exact && ((y.u.array() + y.s.array() + y.l.array()) == f.array()).all();
  }
  return {worst <= 1e-12 && exact, "max energy change " + fmt(worst) + (exact ? ", sum exact" : ", sum changed")};
}

Outcome ordering() {
  const auto t0 = Clock::now();
  const CompareParams params = compare_defaults();
  bool ok = true;
  std::string detail;
  for (const char* preset : {"hard-edge", "smooth-laminar"}) {
    const Phantom ph = generate_phantom(phantom_preset(preset, 1));
    const auto rows = compare_methods(ph.clean, ph.corrupted, params);
    const MetricsReport &cor = rows[0].metrics, &ic = rows[1].metrics, &rev = rows[2].metrics, &m1 = rows[3].metrics;
    const bool here = ic.psnr > rev.psnr && rev.psnr > m1.psnr && ic.ssim >= rev.ssim && rev.ssim >= m1.ssim &&
                      ic.psnr >= cor.psnr + 6;
    ok = ok && here;
    detail += std::string(detail.empty() ? "" : "; ") + preset + " PSNR " + fmt(cor.psnr) + "/" + fmt(ic.psnr) + "/" +
              fmt(rev.psnr) + "/" + fmt(m1.psnr) + " SSIM " + fmt(cor.ssim) + "/" + fmt(ic.ssim) + "/" +
              fmt(rev.ssim) + "/" + fmt(m1.ssim);
  }
  const double t = seconds_since(t0);
  return {ok && t < 600, "corrupted/IC/ICREV/M1: " + detail + ", " + fmt(t) + " s"};
}

Outcome stripes_only() {
  const Phantom ph = generate_phantom(phantom_preset("stripes-only", 1));
  ModelParams p;
  p.mu2 = 0.0;
  p.max_iters = 1500;
  p.rel_tol = 0;
  p.energy_stride = 0;
  const SplitState x = solve_pdhg(ph.corrupted, p).x;
  const Extents e = x.s.extents();
  const double ratio = apply(x.s, DiffOp::GradY).array().abs().sum() / x.s.array().abs().sum();
  // remove the per-slice mean of both fields before correlating
  const Eigen::Index plane = e.nx * e.ny;
  double sab = 0, saa = 0, sbb = 0;
  for (Eigen::Index k = 0; k < e.nz; ++k) {
    const auto a = x.s.array().segment(k * plane, plane), b = ph.stripes.array().segment(k * plane, plane);
    const Eigen::ArrayXd da = a - a.mean(), db = b - b.mean();
    sab += (da * db).sum();
    saa += da.square().sum();
    sbb += db.square().sum();
  }
  const double corr = sab / std::sqrt(saa * sbb);
  return {ratio <= 0.01 && corr >= 0.95, "|grad_y s|_1 / |s|_1 = " + fmt(ratio) + ", corr " + fmt(corr)};
}

Outcome single_slice() {
  PhantomSpec spec = phantom_preset("stripes-only", 1);
  spec.dims = {96, 80, 1};
  spec.stripes.min_width = 1;
  spec.stripes.max_width = 1;
  const Phantom ph = generate_phantom(spec);
  ModelParams p = ModelParams::modis_preset();
  p.max_iters = 500;
  p.energy_stride = 0;
  const SolveResult r = solve_pdhg(ph.corrupted, p);
  const double resid = feasibility_error(r.x, ph.corrupted);
  const double lapz = apply(r.x.u, DiffOp::LapZ).array().abs().maxCoeff();
  const double with = energy_ic(r.x, ph.corrupted, 0.5, 1.0, 4.0), without = energy_ic(r.x, ph.corrupted, 0.5, 0.0, 4.0);
  const bool in_box = r.x.u.array().minCoeff() >= 0 && r.x.u.array().maxCoeff() <= 1;
  return {resid <= 1e-12 && in_box && lapz == 0.0 && with == without,
          "residual " + fmt(resid) + ", max |LapZ u| " + fmt(lapz) + ", energy with/without LapZ term " + fmt(with) +
              "/" + fmt(without)};
}

Outcome file_formats() {
  const fs::path dir = fs::temp_directory_path() / ("decurtain_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  Random rng(111);
  Volume v = rng.volume(Extents{33, 17, 9}, 0, 1);
  v[0] = 0.0;
  v[1] = 1.0;
  v[2] = std::nextafter(0.0, 1.0);
  v[3] = std::nextafter(1.0, 0.0);
  save_volume(v, dir / "v.npy");
  const Volume back = load_volume(dir / "v.npy");
  const bool exact = back.extents() == v.extents() &&
                     std::memcmp(back.array().data(), v.array().data(), sizeof(double) * v.size()) == 0;
  double worst = 0;
  for (SlicePlane plane : {SlicePlane::XY, SlicePlane::XZ, SlicePlane::YZ}) {
    const auto paths = export_slices(v, plane, {0, 4}, (dir / "s").string());
    for (std::size_t n = 0; n < paths.size(); ++n) {
      const GrayImage16 img = read_png16(paths[n]);
      const Eigen::Index idx = n == 0 ? 0 : 4;
      for (std::uint32_t r = 0; r < img.height; ++r)
        for (std::uint32_t c = 0; c < img.width; ++c) {
          double truth = 0;
          if (plane == SlicePlane::XY) truth = v(c, r, idx);
          if (plane == SlicePlane::XZ) truth = v(c, idx, r);
          if (plane == SlicePlane::YZ) truth = v(idx, c, r);
          worst = std::max(worst, std::abs(img.pixels[r * img.width + c] / 65535.0 - truth));
        }
    }
  }
  fs::remove_all(dir);
  return {exact && worst <= 1.0 / 65535, std::string(exact ? "NPY bit-exact" : "NPY mismatch") +
                                             ", max PNG error " + fmt(worst * 65535) + "/65535"};
}

}  // namespace

int main() {
  criterion(1, "difference operators vs dense matrices and adjoints", operators);
  criterion(2, "operator norm bound", norm_bound_check);
  criterion(3, "projection onto the constraint set", projection);
  criterion(4, "coupled shrinkage vs radial minimization", shrinkage);
  criterion(5, "PDHG vs ADMM reference energies", solver_vs_admm);
  criterion(6, "feasibility at every iteration", feasibility);
  criterion(7, "gauge invariance", gauge);
  criterion(8, "method ordering on both phantom presets", ordering);
  criterion(9, "stripe recovery on a stripes-only phantom", stripes_only);
  criterion(10, "single slice input with the MODIS weights", single_slice);
  criterion(11, "file format fidelity", file_formats);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
