#pragma once

#include "decurtain/io.hpp"
#include "decurtain/metrics.hpp"
#include "decurtain/phantom.hpp"
#include "decurtain/solver.hpp"

#include "json.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace decurtain {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitNumerical = 4 };

/// Configuration for one CLI invocation.
struct RunConfig {
  std::string subcommand;
  std::string input;
  std::string output_prefix;
  std::string reference;
  std::string report;
  std::string phantom_spec;  // JSON file with a phantom description
  std::string preset;        // fib | modis | hard-edge | smooth-laminar | stripes-only
  std::string slices;        // "xy:3,10"
  std::string model = "ic";
  std::optional<double> mu1, mu2, mu3, nu1, nu2, tau, sigma, theta, tol;
  std::optional<double> icrev_mu1, icrev_mu3;
  std::optional<int> iters;
  std::optional<int> median_len;
  std::optional<int> energy_stride;
  std::optional<std::uint64_t> seed;
  int threads = 0;  // 0: DECURTAIN_THREADS, else hardware
};

/// Parameters `compare` uses per method when no flag overrides them.
struct CompareParams {
  ModelParams ic;
  ModelParams icrev;
  ModelParams m1;
};
CompareParams compare_defaults();

struct MethodScore {
  std::string method;
  MetricsReport metrics;
};

/// Runs IC, ICREV and M1 on `corrupted` and scores each against `clean`.
/// The first row scores the corrupted input itself.
std::vector<MethodScore> compare_methods(const Volume& clean, const Volume& corrupted, const CompareParams& params);

/// JSON number, or the string "inf" / "-inf" / "nan" for non-finite values.
nlohmann::json json_number(double v);

/// "xy:1,2,3" -> plane and indices.
std::pair<SlicePlane, std::vector<Eigen::Index>> parse_slices(const std::string& spec);

int run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Parses argv and runs; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace decurtain
