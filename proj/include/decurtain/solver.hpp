#pragma once

#include "decurtain/diffops.hpp"
#include "decurtain/volume.hpp"

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace decurtain {

enum class Method { IC, ICREV, M1 };

std::string_view name(Method m);

/// Thrown when the step sizes violate tau * sigma < 1 / ||K||^2.
class StepSizeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when an energy is requested for a point outside the constraint set.
class InfeasibleError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct ModelParams {
  Method method = Method::IC;
  // IC / ICREV weights. mu2 is unused by ICREV.
  double mu1 = 1.0 / 300;
  double mu2 = 2.0 / 300;
  double mu3 = 6.0 / 300;
  // M1 weights.
  double nu1 = 0.9;
  double nu2 = 0.5;
  double tau = 0.2;
  double sigma = 0.2;
  double theta = 1.0;
  int max_iters = 1000;
  double rel_tol = 1e-6;
  int energy_stride = 1;  // 0 disables the energy trace
  int median_len = 3;     // M1 z-median prefilter window
  bool canonical_gauge = true;  // apply canonical_gauge() to the IC / ICREV result

  static ModelParams fib_preset() { return {}; }
  static ModelParams modis_preset() {
    ModelParams p;
    p.mu1 = 0.5;
    p.mu2 = 1.0;
    p.mu3 = 4.0;
    return p;
  }
};

/// Upper bound on ||K||_2^2 for the operator a method uses.
double norm_bound(Method m);

/// Throws StepSizeError / std::invalid_argument if `p` is unusable.
void validate(const ModelParams& p);

struct SolveReport {
  int iterations = 0;
  std::vector<double> energy_trace;     // one entry per evaluated iteration
  std::vector<int> energy_iterations;   // 1-based iteration of each trace entry
  double final_energy = 0.0;
  double final_primal_change = 0.0;
  double max_feasibility_error = 0.0;   // max over iterations of max |u + s + l - f|
  double min_u = 0.0;                   // extrema of u over all iterations
  double max_u = 0.0;
  double wall_seconds = 0.0;
  double gauge_offset = 0.0;            // constant moved from s into u by canonical_gauge
  bool converged = false;
};

struct SolveResult {
  SplitState x;
  SolveReport report;
};

/// Called after every iteration with the 1-based iteration number.
using IterationObserver = std::function<void(int, const SplitState&)>;

/// mu1 ||GradXZ u||_21 + mu2 ||LapZ u||_1 + ||GradY s||_1 + mu3 ||GradXY l||_21.
/// Throws InfeasibleError if u + s + l != f or u leaves [0, 1] (tolerance 1e-10).
double energy_ic(const SplitState& x, const Volume& f, double mu1, double mu2, double mu3);

/// mu1 ||GradXYZ u||_21 + ||GradY s||_1 + mu3 ||GradXY l||_21, same feasibility check.
double energy_icrev(const SplitState& x, const Volume& f, double mu1, double mu3);

/// Dispatches on params.method (IC or ICREV).
double energy(const SplitState& x, const Volume& f, const ModelParams& params);

/// 1/2 ||g - u||^2 + nu1 ||GradY (g - u)||_1 + nu2 ||GradXZ u||_21.
double energy_m1(const Volume& u, const Volume& g, double nu1, double nu2);

/// Primal-dual hybrid gradient with dual extrapolation for the IC / ICREV
/// decomposition f = u + s + l. Starts from (f, 0, 0) with zero duals.
SolveResult solve_pdhg(const Volume& f, const ModelParams& params,
                       const IterationObserver& observer = {});

struct M1Result {
  Volume u;
  Volume prefiltered;
  SolveReport report;
};

/// Destriping baseline: z-median prefilter, then PDHG on
/// 1/2 ||g - u||^2 + nu1 ||GradY (g - u)||_1 + nu2 ||GradXZ u||_21.
M1Result solve_m1(const Volume& f, const ModelParams& params);

/// Sliding median along z with replicated ends. `len` must be odd.
Volume median_filter_z(const Volume& v, int len);

/// Moves per-slice constants from l to s: s + m_k, l - m_k on slice k.
SplitState gauge_shift(const SplitState& x, std::span<const double> shifts);

struct GaugeChoice {
  SplitState x;
  double offset = 0.0;  // constant added to u
};

/// Picks one representative of the zero-cost directions of IC / ICREV:
/// per slice, the median of l is moved into s; then the median of s is moved
/// into u, clamped so u stays in [0, 1]. Medians are upper medians.
GaugeChoice canonical_gauge(const SplitState& x);

/// max |u + s + l - f|.
double feasibility_error(const SplitState& x, const Volume& f);

}  // namespace decurtain
