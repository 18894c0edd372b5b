#include "decurtain/solver.hpp"

#include "decurtain/prox.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace decurtain {

namespace {

constexpr double kFeasibilityTol = 1e-10;

Model to_model(Method m) {
  switch (m) {
    case Method::IC: return Model::IC;
    case Method::ICREV: return Model::ICREV;
    case Method::M1: break;
  }
  throw std::invalid_argument("method m1 has no IC stacked operator");
}

/// Weight of each K block in h, in k_blocks() order.
std::vector<double> block_weights(const ModelParams& p) {
  if (p.method == Method::IC) return {p.mu1, p.mu2, 1.0, p.mu3};
  return {p.mu1, 1.0, p.mu3};
}

double weighted_norms(const KImage<double>& y, const std::vector<double>& w) {
  double e = 0.0;
  for (std::size_t b = 0; b < y.size(); ++b) {
    if (w[b] == 0.0) continue;
    e += w[b] * grouped_norm_21(y[b]);
  }
  return e;
}

double objective(const SplitState& x, const ModelParams& p) {
  return weighted_norms(apply_K(x, to_model(p.method)), block_weights(p));
}

void check_feasible(const SplitState& x, const Volume& f) {
  require_same_extents(x.u.extents(), f.extents(), "energy");
  require_same_extents(x.s.extents(), f.extents(), "energy");
  require_same_extents(x.l.extents(), f.extents(), "energy");
  const double err = feasibility_error(x, f);
  if (err > kFeasibilityTol) {
    throw InfeasibleError("u + s + l differs from f by " + std::to_string(err));
  }
  const double lo = x.u.array().minCoeff(), hi = x.u.array().maxCoeff();
  if (lo < -kFeasibilityTol || hi > 1.0 + kFeasibilityTol) {
    throw InfeasibleError("u leaves [0, 1]: range [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "]");
  }
}

void require_unit_range(const Volume& f, const char* what) {
  if (!f.all_finite()) throw std::domain_error(std::string(what) + ": input contains non-finite values");
  const double lo = f.array().minCoeff(), hi = f.array().maxCoeff();
  if (lo < 0.0 || hi > 1.0) {
    throw std::domain_error(std::string(what) + ": input must lie in [0, 1], got [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

// With z = b + K x and y = shrink(z, lambda), the new scaled dual b = z - y
// is the projection of z onto the ball of radius lambda, voxel by voxel.
void dual_step(StackedField& b, StackedField& b_bar, const StackedField& kx, double lambda, double theta) {
  const Eigen::Index n = b.extents().size();
  const int d = b.channels();
  double* pb = b.array().data();
  double* pbar = b_bar.array().data();
  const double* pk = kx.array().data();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    double z[3];
    double sq = 0.0;
    for (int c = 0; c < d; ++c) {
      z[c] = pb[i + c * n] + pk[i + c * n];
      sq += z[c] * z[c];
    }
    const double r = std::sqrt(sq);
    const double scale = r <= lambda ? 1.0 : lambda / r;
    for (int c = 0; c < d; ++c) {
      const double bn = z[c] * scale;
      pbar[i + c * n] = bn + theta * (bn - pb[i + c * n]);
      pb[i + c * n] = bn;
    }
  }
}

struct StepStats {
  double prev_sq = 0, diff_sq = 0, feas = 0, min_u = 0, max_u = 0;
};

StepStats step_stats(const SplitState& prev, const SplitState& x, const Volume& f) {
  StepStats st;
  st.min_u = std::numeric_limits<double>::infinity();
  st.max_u = -st.min_u;
  const Eigen::Index n = f.size();
  const double *pu = prev.u.array().data(), *ps = prev.s.array().data(), *pl = prev.l.array().data();
  const double *u = x.u.array().data(), *s = x.s.array().data(), *l = x.l.array().data();
  const double* pf = f.array().data();
  for (Eigen::Index i = 0; i < n; ++i) {
    st.prev_sq += pu[i] * pu[i] + ps[i] * ps[i] + pl[i] * pl[i];
    const double du = u[i] - pu[i], ds = s[i] - ps[i], dl = l[i] - pl[i];
    st.diff_sq += du * du + ds * ds + dl * dl;
    st.feas = std::max(st.feas, std::abs(u[i] + s[i] + l[i] - pf[i]));
    st.min_u = std::min(st.min_u, u[i]);
    st.max_u = std::max(st.max_u, u[i]);
  }
  return st;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string_view name(Method m) {
  switch (m) {
    case Method::IC: return "ic";
    case Method::ICREV: return "icrev";
    case Method::M1: return "m1";
  }
  return "?";
}

double norm_bound(Method m) {
  // IC u-block: |Dx|^2 + |Dz|^2 + |Dzz|^2 <= 4 + 4 + 16.
  // ICREV u-block: 4 + 4 + 4. M1: |Dy|^2 + |Dx|^2 + |Dz|^2 <= 12.
  return m == Method::IC ? 24.0 : 12.0;
}

void validate(const ModelParams& p) {
  auto bad = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (!(p.mu1 >= 0 && p.mu2 >= 0 && p.mu3 >= 0)) bad("mu weights must be >= 0");
  if (!(p.nu1 >= 0 && p.nu2 >= 0)) bad("nu weights must be >= 0");
  if (!(p.tau > 0 && p.sigma > 0)) bad("tau and sigma must be > 0");
  if (!(p.theta > 0 && p.theta <= 1)) bad("theta must lie in (0, 1]");
  if (p.max_iters < 1) bad("max_iters must be >= 1");
  if (!(p.rel_tol >= 0)) bad("rel_tol must be >= 0");
  if (p.energy_stride < 0) bad("energy_stride must be >= 0");
  if (p.median_len < 1 || p.median_len % 2 == 0) bad("median_len must be odd and >= 1");
  const double bound = norm_bound(p.method);
  if (!(p.tau * p.sigma < 1.0 / bound)) {
    throw StepSizeError("step sizes violate tau*sigma < 1/" + std::to_string(int(bound)) +
                        " for model " + std::string(name(p.method)) + ": tau*sigma = " +
                        std::to_string(p.tau * p.sigma));
  }
}

double feasibility_error(const SplitState& x, const Volume& f) {
  return (x.u.array() + x.s.array() + x.l.array() - f.array()).abs().maxCoeff();
}

double energy_ic(const SplitState& x, const Volume& f, double mu1, double mu2, double mu3) {
  check_feasible(x, f);
  ModelParams p;
  p.method = Method::IC;
  p.mu1 = mu1;
  p.mu2 = mu2;
  p.mu3 = mu3;
  return objective(x, p);
}

double energy_icrev(const SplitState& x, const Volume& f, double mu1, double mu3) {
  check_feasible(x, f);
  ModelParams p;
  p.method = Method::ICREV;
  p.mu1 = mu1;
  p.mu3 = mu3;
  return objective(x, p);
}

double energy(const SplitState& x, const Volume& f, const ModelParams& params) {
  if (params.method == Method::IC) return energy_ic(x, f, params.mu1, params.mu2, params.mu3);
  if (params.method == Method::ICREV) return energy_icrev(x, f, params.mu1, params.mu3);
  throw std::invalid_argument("energy: use energy_m1 for method m1");
}

double energy_m1(const Volume& u, const Volume& g, double nu1, double nu2) {
  require_same_extents(u.extents(), g.extents(), "energy_m1");
  const Volume r = linear_combine(1.0, g, -1.0, u);
  double e = 0.5 * r.array().square().sum();
  if (nu1 != 0.0) e += nu1 * norm_l1(apply(r, DiffOp::GradY));
  if (nu2 != 0.0) e += nu2 * grouped_norm_21(apply(u, DiffOp::GradXZ));
  return e;
}

SolveResult solve_pdhg(const Volume& f, const ModelParams& params, const IterationObserver& observer) {
  validate(params);
  const Model model = to_model(params.method);
  require_unit_range(f, "solve_pdhg");
  const auto t0 = std::chrono::steady_clock::now();

  const Extents ext = f.extents();
  const std::vector<double> weights = block_weights(params);
  const double step = params.tau * params.sigma;

  SplitState x{f, Volume(ext), Volume(ext)};
  SplitState trial = x;
  SplitState next = x;
  KImage<double> b = make_k_image<double>(model, ext);
  KImage<double> b_bar = b;
  KImage<double> kx = b;

  SolveReport rep;
  rep.min_u = x.u.array().minCoeff();
  rep.max_u = x.u.array().maxCoeff();

  for (int it = 1; it <= params.max_iters; ++it) {
    // x <- P_C(x - tau sigma K^T b_bar)
    trial.u.array() = x.u.array();
    trial.s.array() = x.s.array();
    trial.l.array() = x.l.array();
    apply_K_adjoint_add(b_bar, model, trial, -step);
    project_C_into(trial.u, trial.s, trial.l, f, next);

    const StepStats st = step_stats(x, next, f);
    std::swap(x, next);

    // z = b + K x;  y = shrink(z, w / sigma);  b <- z - y;  b_bar <- b + theta (b - b_old)
    apply_K_into(x, model, kx);
    for (std::size_t blk = 0; blk < kx.size(); ++blk) {
      dual_step(b[blk], b_bar[blk], kx[blk], weights[blk] / params.sigma, params.theta);
    }

    rep.iterations = it;
    rep.max_feasibility_error = std::max(rep.max_feasibility_error, st.feas);
    rep.min_u = std::min(rep.min_u, st.min_u);
    rep.max_u = std::max(rep.max_u, st.max_u);
    const double prev_norm = std::sqrt(st.prev_sq);
    rep.final_primal_change = prev_norm > 0 ? std::sqrt(st.diff_sq) / prev_norm : std::sqrt(st.diff_sq);

    if (params.energy_stride > 0 && (it % params.energy_stride == 0 || it == params.max_iters)) {
      rep.energy_trace.push_back(objective(x, params));
      rep.energy_iterations.push_back(it);
    }
    if (observer) observer(it, x);

    // The first step cannot move x (all duals start at zero), so the
    // stopping test starts with the second iterate.
    if (it >= 2 && rep.final_primal_change < params.rel_tol) {
      rep.converged = true;
      break;
    }
  }

  if (rep.energy_iterations.empty() || rep.energy_iterations.back() != rep.iterations) {
    rep.final_energy = objective(x, params);
    if (params.energy_stride > 0) {
      rep.energy_trace.push_back(rep.final_energy);
      rep.energy_iterations.push_back(rep.iterations);
    }
  } else {
    rep.final_energy = rep.energy_trace.back();
  }
  if (params.canonical_gauge) {
    GaugeChoice g = canonical_gauge(x);
    x = std::move(g.x);
    rep.gauge_offset = g.offset;
    rep.max_feasibility_error = std::max(rep.max_feasibility_error, feasibility_error(x, f));
  }
  rep.wall_seconds = elapsed(t0);
  return {std::move(x), std::move(rep)};
}

Volume median_filter_z(const Volume& v, int len) {
  if (len < 1 || len % 2 == 0) {
    throw std::invalid_argument("median_filter_z: window length must be odd and >= 1, got " +
                                std::to_string(len));
  }
  if (len == 1) return v;
  const Extents e = v.extents();
  const Eigen::Index half = len / 2;
  const Eigen::Index plane = e.nx * e.ny;
  Volume out(e);
#pragma omp parallel for schedule(static)
  for (Eigen::Index p = 0; p < plane; ++p) {
    std::vector<double> window(static_cast<std::size_t>(len));
    for (Eigen::Index k = 0; k < e.nz; ++k) {
      for (Eigen::Index w = -half; w <= half; ++w) {
        const Eigen::Index kk = std::clamp<Eigen::Index>(k + w, 0, e.nz - 1);
        window[static_cast<std::size_t>(w + half)] = v[p + plane * kk];
      }
      std::nth_element(window.begin(), window.begin() + half, window.end());
      out[p + plane * k] = window[static_cast<std::size_t>(half)];
    }
  }
  return out;
}

M1Result solve_m1(const Volume& f, const ModelParams& params) {
  ModelParams p = params;
  p.method = Method::M1;
  validate(p);
  require_unit_range(f, "solve_m1");
  const auto t0 = std::chrono::steady_clock::now();

  const Extents ext = f.extents();
  Volume g = median_filter_z(f, p.median_len);
  const StackedField grad_y_g = apply(g, DiffOp::GradY);
  const double step = p.tau * p.sigma;
  const double relax = p.tau / (1.0 + p.tau);

  Volume u = g;
  Volume trial(ext);
  StackedField b1(ext, 1), b2(ext, 2);
  StackedField bb1 = b1, bb2 = b2;
  StackedField z1(ext, 1), z2(ext, 2);

  SolveReport rep;
  for (int it = 1; it <= p.max_iters; ++it) {
    // u <- prox_{tau G}(u - tau sigma K^T b_bar), G = 1/2 ||g - .||^2
    trial.array() = u.array();
    apply_adjoint_add(bb1, DiffOp::GradY, trial, -step);
    apply_adjoint_add(bb2, DiffOp::GradXZ, trial, -step);
    trial.array() += relax * (g.array() - trial.array());

    const double prev_norm = std::sqrt(u.array().square().sum());
    const double diff = std::sqrt((trial.array() - u.array()).square().sum());
    std::swap(u, trial);

    // Stripe term: prox of (nu1/sigma) ||grad_y g - .||_1.
    apply_into(u, DiffOp::GradY, z1);
    z1.array() += b1.array();
    StackedField r = grad_y_g;
    r.array() -= z1.array();
    soft_shrink_inplace(r, p.nu1 / p.sigma);
    // y1 = grad_y g - r, b1_new = z1 - y1
    {
      auto b_new = (z1.array() - grad_y_g.array() + r.array()).eval();
      bb1.array() = b_new * (1.0 + p.theta) - p.theta * b1.array();
      b1.array() = b_new;
    }

    apply_into(u, DiffOp::GradXZ, z2);
    z2.array() += b2.array();
    StackedField y2 = z2;
    coupled_shrink_inplace(y2, p.nu2 / p.sigma);
    {
      auto b_new = (z2.array() - y2.array()).eval();
      bb2.array() = b_new * (1.0 + p.theta) - p.theta * b2.array();
      b2.array() = b_new;
    }

    rep.iterations = it;
    rep.final_primal_change = prev_norm > 0 ? diff / prev_norm : diff;
    if (p.energy_stride > 0 && (it % p.energy_stride == 0 || it == p.max_iters)) {
      rep.energy_trace.push_back(energy_m1(u, g, p.nu1, p.nu2));
      rep.energy_iterations.push_back(it);
    }
    if (it >= 2 && rep.final_primal_change < p.rel_tol) {
      rep.converged = true;
      break;
    }
  }
  rep.final_energy = energy_m1(u, g, p.nu1, p.nu2);
  if (p.energy_stride > 0 && (rep.energy_iterations.empty() || rep.energy_iterations.back() != rep.iterations)) {
    rep.energy_trace.push_back(rep.final_energy);
    rep.energy_iterations.push_back(rep.iterations);
  }
  rep.min_u = u.array().minCoeff();
  rep.max_u = u.array().maxCoeff();
  rep.wall_seconds = elapsed(t0);
  return {std::move(u), std::move(g), std::move(rep)};
}

SplitState gauge_shift(const SplitState& x, std::span<const double> shifts) {
  const Extents e = x.extents();
  if (static_cast<Eigen::Index>(shifts.size()) != e.nz) {
    throw DimensionError("gauge_shift: expected " + std::to_string(e.nz) + " shifts, got " +
                         std::to_string(shifts.size()));
  }
  SplitState out = x;
  const Eigen::Index plane = e.nx * e.ny;
  for (Eigen::Index k = 0; k < e.nz; ++k) {
    const double m = shifts[static_cast<std::size_t>(k)];
    out.s.array().segment(k * plane, plane) += m;
    out.l.array().segment(k * plane, plane) -= m;
  }
  return out;
}

namespace {

double upper_median(const double* first, Eigen::Index n) {
  std::vector<double> v(first, first + n);
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

GaugeChoice canonical_gauge(const SplitState& x) {
  const Extents e = x.extents();
  const Eigen::Index plane = e.nx * e.ny;
  std::vector<double> shifts(static_cast<std::size_t>(e.nz));
  for (Eigen::Index k = 0; k < e.nz; ++k) {
    shifts[static_cast<std::size_t>(k)] = upper_median(x.l.array().data() + k * plane, plane);
  }
  GaugeChoice out{gauge_shift(x, shifts), 0.0};
  double c = upper_median(out.x.s.array().data(), out.x.s.size());
  c = std::clamp(c, -out.x.u.array().minCoeff(), 1.0 - out.x.u.array().maxCoeff());
  if (c != 0.0) {
    out.x.u.array() += c;
    out.x.s.array() -= c;
    out.x.u.array() = out.x.u.array().cwiseMax(0.0).cwiseMin(1.0);
  }
  out.offset = c;
  return out;
}

}  // namespace decurtain
