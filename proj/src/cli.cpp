#include "decurtain/cli.hpp"

#include "decurtain/io.hpp"

#include "CLI11.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace decurtain {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

bool is_phantom_preset(const std::string& p) {
  for (const auto& n : phantom_preset_names())
    if (n == p) return true;
  return false;
}

void set_threads(int requested) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("DECURTAIN_THREADS")) {
      try {
        n = std::stoi(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("DECURTAIN_THREADS is not an integer: '") + env + "'");
      }
      if (n <= 0) throw ConfigError("DECURTAIN_THREADS must be positive");
    }
  }
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

Method parse_method(const std::string& m) {
  if (m == "ic") return Method::IC;
  if (m == "icrev") return Method::ICREV;
  throw ConfigError("unknown model '" + m + "' (use ic or icrev)");
}

ModelParams base_params(const RunConfig& cfg) {
  ModelParams p = cfg.preset == "modis" ? ModelParams::modis_preset() : ModelParams::fib_preset();
  p.method = parse_method(cfg.model);
  if (cfg.mu1) p.mu1 = *cfg.mu1;
  if (cfg.mu2) p.mu2 = *cfg.mu2;
  if (cfg.mu3) p.mu3 = *cfg.mu3;
  if (cfg.nu1) p.nu1 = *cfg.nu1;
  if (cfg.nu2) p.nu2 = *cfg.nu2;
  if (cfg.tau) p.tau = *cfg.tau;
  if (cfg.sigma) p.sigma = *cfg.sigma;
  if (cfg.theta) p.theta = *cfg.theta;
  if (cfg.tol) p.rel_tol = *cfg.tol;
  if (cfg.iters) p.max_iters = *cfg.iters;
  if (cfg.median_len) p.median_len = *cfg.median_len;
  if (cfg.energy_stride) p.energy_stride = *cfg.energy_stride;
  return p;
}

json params_json(const ModelParams& p) {
  json j{{"method", std::string(name(p.method))},
         {"tau", p.tau},
         {"sigma", p.sigma},
         {"theta", p.theta},
         {"max_iters", p.max_iters},
         {"rel_tol", p.rel_tol}};
  if (p.method == Method::M1) {
    j["nu1"] = p.nu1;
    j["nu2"] = p.nu2;
    j["median_len"] = p.median_len;
  } else {
    j["mu1"] = p.mu1;
    if (p.method == Method::IC) j["mu2"] = p.mu2;
    j["mu3"] = p.mu3;
  }
  return j;
}

json metrics_json(const MetricsReport& m) {
  return {{"psnr", json_number(m.psnr)}, {"mse", json_number(m.mse)}, {"ssim", json_number(m.ssim)}};
}

json report_json(const SolveReport& r) {
  json tail = json::array();
  const std::size_t n = r.energy_trace.size();
  for (std::size_t i = n > 10 ? n - 10 : 0; i < n; ++i) tail.push_back(json_number(r.energy_trace[i]));
  return {{"iterations", r.iterations},
          {"converged", r.converged},
          {"final_energy", json_number(r.final_energy)},
          {"final_primal_change", json_number(r.final_primal_change)},
          {"gauge_offset", r.gauge_offset},
          {"energy_trace_tail", tail},
          {"runtime_seconds", r.wall_seconds}};
}

struct Inputs {
  Volume f;
  std::optional<Volume> reference;
  std::optional<Phantom> phantom;
  std::string source;
};

PhantomSpec resolve_phantom_spec(const RunConfig& cfg) {
  PhantomSpec spec;
  if (!cfg.phantom_spec.empty()) {
    std::ifstream in(cfg.phantom_spec);
    if (!in) throw DataError("cannot open phantom spec '" + cfg.phantom_spec + "'");
    try {
      spec = json::parse(in).get<PhantomSpec>();
    } catch (const json::exception& e) {
      throw DataError(cfg.phantom_spec + ": " + e.what());
    }
  } else if (is_phantom_preset(cfg.preset)) {
    spec = phantom_preset(cfg.preset);
  } else {
    throw ConfigError("need --input, --phantom-spec, or a phantom --preset (hard-edge, smooth-laminar, stripes-only)");
  }
  if (cfg.seed) spec.seed = *cfg.seed;
  return spec;
}

Inputs resolve_inputs(const RunConfig& cfg) {
  Inputs in;
  if (!cfg.input.empty()) {
    in.f = load_volume(cfg.input);
    in.source = cfg.input;
  } else {
    const PhantomSpec spec = resolve_phantom_spec(cfg);
    in.phantom = generate_phantom(spec);
    in.f = in.phantom->corrupted;
    in.reference = in.phantom->clean;
    in.source = cfg.phantom_spec.empty() ? "phantom:" + cfg.preset : cfg.phantom_spec;
  }
  if (!cfg.reference.empty()) {
    in.reference = load_volume(cfg.reference);
    require_same_extents(in.reference->extents(), in.f.extents(), "reference");
  }
  return in;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

/// Output files collected in memory, written only once everything succeeded.
class PendingWrites {
 public:
  void volume(const std::string& path, const Volume& v) { files_.emplace_back(path, encode_npy(v)); }
  void text(const std::string& path, std::string body) { files_.emplace_back(path, std::move(body)); }
  void commit() const {
    for (const auto& [path, bytes] : files_) write_file_atomic(path, bytes);
  }
  std::vector<std::string> paths() const {
    std::vector<std::string> p;
    for (const auto& f : files_) p.push_back(f.first);
    return p;
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

std::string report_path(const RunConfig& cfg) {
  return cfg.report.empty() ? cfg.output_prefix + "_report.json" : cfg.report;
}

int run_decurtain(const RunConfig& cfg, std::ostream& out) {
  require(!cfg.output_prefix.empty(), "decurtain needs --output-prefix");
  const ModelParams params = base_params(cfg);
  validate(params);
  std::optional<std::pair<SlicePlane, std::vector<Eigen::Index>>> slices;
  if (!cfg.slices.empty()) slices = parse_slices(cfg.slices);
  const Inputs in = resolve_inputs(cfg);

  SolveResult res = solve_pdhg(in.f, params);
  const double residual = feasibility_error(res.x, in.f);

  json rep{{"schema", 1}, {"command", "decurtain"}, {"input", in.source}, {"dims", {in.f.nx(), in.f.ny(), in.f.nz()}}};
  rep["params"] = params_json(params);
  rep["solve"] = report_json(res.report);
  rep["feasibility"] = {{"max_abs_residual", res.report.max_feasibility_error},
                        {"final_abs_residual", residual},
                        {"u_min", res.report.min_u},
                        {"u_max", res.report.max_u},
                        {"ok", residual <= 1e-12 && res.report.min_u >= -1e-12 && res.report.max_u <= 1 + 1e-12}};
  if (in.f.nz() <= 2) rep["lapz_inactive"] = true;
  if (in.reference) {
    rep["metrics"] = metrics_json(compare_volumes(*in.reference, res.x.u));
    rep["metrics_input"] = metrics_json(compare_volumes(*in.reference, in.f));
  }

  PendingWrites w;
  w.volume(cfg.output_prefix + "_u.npy", res.x.u);
  w.volume(cfg.output_prefix + "_s.npy", res.x.s);
  w.volume(cfg.output_prefix + "_l.npy", res.x.l);
  w.text(report_path(cfg), rep.dump(2) + "\n");
  if (slices) {
    // Validate indices now; PNGs are written after the volumes.
    for (auto idx : slices->second) slice_image(res.x.u, slices->first, idx);
  }
  w.commit();
  if (slices) export_slices(res.x.u, slices->first, slices->second, cfg.output_prefix + "_u");
  out << rep.dump(2) << "\n";
  return kExitOk;
}

int run_destripe_m1(const RunConfig& cfg, std::ostream& out) {
  require(!cfg.output_prefix.empty(), "destripe-m1 needs --output-prefix");
  ModelParams params = base_params(cfg);
  params.method = Method::M1;
  validate(params);
  const Inputs in = resolve_inputs(cfg);
  M1Result res = solve_m1(in.f, params);

  json rep{{"schema", 1}, {"command", "destripe-m1"}, {"input", in.source}, {"dims", {in.f.nx(), in.f.ny(), in.f.nz()}}};
  rep["params"] = params_json(params);
  rep["solve"] = report_json(res.report);
  if (in.reference) rep["metrics"] = metrics_json(compare_volumes(*in.reference, res.u));

  PendingWrites w;
  w.volume(cfg.output_prefix + "_u.npy", res.u);
  w.text(report_path(cfg), rep.dump(2) + "\n");
  w.commit();
  if (!cfg.slices.empty()) {
    const auto [plane, idx] = parse_slices(cfg.slices);
    export_slices(res.u, plane, idx, cfg.output_prefix + "_u");
  }
  out << rep.dump(2) << "\n";
  return kExitOk;
}

int run_phantom(const RunConfig& cfg, std::ostream& out) {
  require(!cfg.output_prefix.empty(), "phantom needs --output-prefix");
  const PhantomSpec spec = resolve_phantom_spec(cfg);
  const Phantom ph = generate_phantom(spec);
  PendingWrites w;
  w.volume(cfg.output_prefix + "_clean.npy", ph.clean);
  w.volume(cfg.output_prefix + "_stripes.npy", ph.stripes);
  w.volume(cfg.output_prefix + "_laminar.npy", ph.laminar);
  w.volume(cfg.output_prefix + "_corrupted.npy", ph.corrupted);
  w.text(cfg.output_prefix + "_spec.json", json(spec).dump(2) + "\n");
  w.commit();
  if (!cfg.slices.empty()) {
    const auto [plane, idx] = parse_slices(cfg.slices);
    export_slices(ph.corrupted, plane, idx, cfg.output_prefix + "_corrupted");
  }
  json rep{{"schema", 1}, {"command", "phantom"}, {"files", w.paths()},
           {"metrics_corrupted", metrics_json(compare_volumes(ph.clean, ph.corrupted))}};
  out << rep.dump(2) << "\n";
  return kExitOk;
}

CompareParams resolve_compare(const RunConfig& cfg) {
  CompareParams p = compare_defaults();
  for (ModelParams* m : {&p.ic, &p.icrev, &p.m1}) {
    if (cfg.tau) m->tau = *cfg.tau;
    if (cfg.sigma) m->sigma = *cfg.sigma;
    if (cfg.theta) m->theta = *cfg.theta;
    if (cfg.iters) m->max_iters = *cfg.iters;
    if (cfg.tol) m->rel_tol = *cfg.tol;
    if (cfg.energy_stride) m->energy_stride = *cfg.energy_stride;
  }
  if (cfg.mu1) p.ic.mu1 = *cfg.mu1;
  if (cfg.mu2) p.ic.mu2 = *cfg.mu2;
  if (cfg.mu3) p.ic.mu3 = *cfg.mu3;
  if (cfg.icrev_mu1) p.icrev.mu1 = *cfg.icrev_mu1;
  if (cfg.icrev_mu3) p.icrev.mu3 = *cfg.icrev_mu3;
  if (cfg.nu1) p.m1.nu1 = *cfg.nu1;
  if (cfg.nu2) p.m1.nu2 = *cfg.nu2;
  if (cfg.median_len) p.m1.median_len = *cfg.median_len;
  validate(p.ic);
  validate(p.icrev);
  validate(p.m1);
  return p;
}

int run_compare(const RunConfig& cfg, std::ostream& out) {
  const CompareParams params = resolve_compare(cfg);
  const Inputs in = resolve_inputs(cfg);
  if (!in.reference) throw ConfigError("compare needs --reference (or a phantom preset / --phantom-spec)");

  const auto rows = compare_methods(*in.reference, in.f, params);
  json table = json::array();
  std::ostringstream csv;
  csv.precision(17);
  csv << "method,psnr,mse,ssim\n";
  for (const auto& r : rows) {
    json row = metrics_json(r.metrics);
    row["method"] = r.method;
    table.push_back(row);
    csv << r.method << "," << r.metrics.psnr << "," << r.metrics.mse << "," << r.metrics.ssim << "\n";
  }
  json rep{{"schema", 1}, {"command", "compare"}, {"input", in.source}, {"dims", {in.f.nx(), in.f.ny(), in.f.nz()}}};
  rep["params"] = {{"ic", params_json(params.ic)}, {"icrev", params_json(params.icrev)}, {"m1", params_json(params.m1)}};
  rep["table"] = table;

  PendingWrites w;
  if (!cfg.report.empty()) w.text(cfg.report, rep.dump(2) + "\n");
  if (!cfg.output_prefix.empty()) w.text(cfg.output_prefix + "_table.csv", csv.str());
  w.commit();
  out << rep.dump(2) << "\n";
  return kExitOk;
}

int run_metrics(const RunConfig& cfg, std::ostream& out) {
  require(!cfg.input.empty() && !cfg.reference.empty(), "metrics needs --input and --reference");
  const Volume x = load_volume(cfg.input);
  const Volume ref = load_volume(cfg.reference);
  require_same_extents(ref.extents(), x.extents(), "metrics");
  json rep = metrics_json(compare_volumes(ref, x));
  rep["schema"] = 1;
  rep["command"] = "metrics";
  if (!cfg.report.empty()) write_file_atomic(cfg.report, rep.dump(2) + "\n");
  out << rep.dump(2) << "\n";
  return kExitOk;
}

int run_export_slices(const RunConfig& cfg, std::ostream& out) {
  require(!cfg.input.empty(), "export-slices needs --input");
  require(!cfg.slices.empty(), "export-slices needs --slices axis:idx[,idx...]");
  require(!cfg.output_prefix.empty(), "export-slices needs --output-prefix");
  const auto [plane, idx] = parse_slices(cfg.slices);
  LoadOptions opts;
  opts.require_unit_range = false;  // values are clamped on export
  const Volume v = load_volume(cfg.input, opts);
  const auto paths = export_slices(v, plane, idx, cfg.output_prefix);
  for (const auto& p : paths) out << p.string() << "\n";
  return kExitOk;
}

}  // namespace

json json_number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

std::pair<SlicePlane, std::vector<Eigen::Index>> parse_slices(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw ConfigError("--slices must look like axis:idx[,idx...], got '" + spec + "'");
  SlicePlane plane;
  try {
    plane = parse_plane(spec.substr(0, colon));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  std::vector<Eigen::Index> idx;
  std::stringstream ss(spec.substr(colon + 1));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      idx.push_back(std::stoll(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("bad slice index '" + tok + "'");
    }
  }
  if (idx.empty()) throw ConfigError("--slices lists no indices");
  return {plane, idx};
}

CompareParams compare_defaults() {
  // Weights picked per method by grid search on the phantom presets. The
  // small primal step suits the scale of the problem: duals live in balls
  // of radius mu ~ 1e-2 while u, s, l are O(1).
  CompareParams p;
  p.ic.method = Method::IC;
  p.ic.mu1 = 0.003;
  p.ic.mu2 = 0.01;
  p.ic.mu3 = 0.01;
  p.icrev.method = Method::ICREV;
  p.icrev.mu1 = 0.02;
  p.icrev.mu3 = 0.03;
  p.m1.method = Method::M1;
  p.m1.nu1 = 0.9;
  p.m1.nu2 = 0.5;
  for (ModelParams* m : {&p.ic, &p.icrev}) {
    m->tau = 0.04;
    m->sigma = 1.0;
    m->max_iters = 4000;
  }
  p.m1.max_iters = 1000;
  for (ModelParams* m : {&p.ic, &p.icrev, &p.m1}) {
    m->rel_tol = 0.0;
    m->energy_stride = 0;
  }
  return p;
}

std::vector<MethodScore> compare_methods(const Volume& clean, const Volume& corrupted, const CompareParams& params) {
  require_same_extents(clean.extents(), corrupted.extents(), "compare_methods");
  std::vector<MethodScore> rows;
  rows.push_back({"corrupted", compare_volumes(clean, corrupted)});
  rows.push_back({"ic", compare_volumes(clean, solve_pdhg(corrupted, params.ic).x.u)});
  rows.push_back({"icrev", compare_volumes(clean, solve_pdhg(corrupted, params.icrev).x.u)});
  rows.push_back({"m1", compare_volumes(clean, solve_m1(corrupted, params.m1).u)});
  return rows;
}

int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    set_threads(cfg.threads);
    if (cfg.subcommand == "decurtain") return run_decurtain(cfg, out);
    if (cfg.subcommand == "destripe-m1") return run_destripe_m1(cfg, out);
    if (cfg.subcommand == "phantom") return run_phantom(cfg, out);
    if (cfg.subcommand == "compare") return run_compare(cfg, out);
    if (cfg.subcommand == "metrics") return run_metrics(cfg, out);
    if (cfg.subcommand == "export-slices") return run_export_slices(cfg, out);
    throw ConfigError("unknown subcommand '" + cfg.subcommand + "'");
  } catch (const StepSizeError& e) {
    err << "error: numerical guard: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "error: data: " << e.what() << "\n";
    return kExitData;
  } catch (const DimensionError& e) {
    err << "error: data: " << e.what() << "\n";
    return kExitData;
  } catch (const std::domain_error& e) {
    err << "error: data: " << e.what() << "\n";
    return kExitData;
  } catch (const std::out_of_range& e) {
    err << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    err << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Removes curtaining (stripes and laminar corruption) from volumetric images"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_common = [&cfg](CLI::App* sub) {
    sub->add_option("--threads", cfg.threads, "Worker threads (default: DECURTAIN_THREADS or all cores)");
    sub->add_option("--report", cfg.report, "Path of the JSON report");
  };
  auto add_input = [&cfg](CLI::App* sub) {
    sub->add_option("--input", cfg.input, "Input volume (.npy, or raw with a JSON sidecar)");
    sub->add_option("--reference", cfg.reference, "Clean reference volume for metrics");
    sub->add_option("--phantom-spec", cfg.phantom_spec, "Generate the input from this phantom JSON");
    sub->add_option("--seed", cfg.seed, "Phantom seed");
  };
  auto add_solver = [&cfg](CLI::App* sub) {
    sub->add_option("--tau", cfg.tau, "Primal step size");
    sub->add_option("--sigma", cfg.sigma, "Dual step size");
    sub->add_option("--theta", cfg.theta, "Extrapolation parameter in (0, 1]");
    sub->add_option("--iters", cfg.iters, "Maximum iterations");
    sub->add_option("--tol", cfg.tol, "Relative primal change stopping tolerance");
    sub->add_option("--energy-stride", cfg.energy_stride, "Evaluate the energy every n iterations (0: never)");
  };

  auto* dec = app.add_subcommand("decurtain", "Split a volume into clean, stripe and laminar parts");
  add_common(dec);
  add_input(dec);
  add_solver(dec);
  dec->add_option("--output-prefix", cfg.output_prefix, "Writes <prefix>_u.npy, _s.npy, _l.npy");
  dec->add_option("--model", cfg.model, "ic or icrev")->check(CLI::IsMember({"ic", "icrev"}));
  dec->add_option("--preset", cfg.preset, "Parameters fib|modis, or a phantom preset as input")
      ->check(CLI::IsMember({"fib", "modis", "hard-edge", "smooth-laminar", "stripes-only"}));
  dec->add_option("--mu1", cfg.mu1);
  dec->add_option("--mu2", cfg.mu2);
  dec->add_option("--mu3", cfg.mu3);
  dec->add_option("--slices", cfg.slices, "Export slices of u, e.g. xy:0,10");

  auto* m1 = app.add_subcommand("destripe-m1", "Median prefilter plus 3D destriping baseline");
  add_common(m1);
  add_input(m1);
  add_solver(m1);
  m1->add_option("--output-prefix", cfg.output_prefix);
  m1->add_option("--preset", cfg.preset)->check(CLI::IsMember({"hard-edge", "smooth-laminar", "stripes-only"}));
  m1->add_option("--nu1", cfg.nu1);
  m1->add_option("--nu2", cfg.nu2);
  m1->add_option("--median-len", cfg.median_len, "Odd z-median window");
  m1->add_option("--slices", cfg.slices);

  auto* ph = app.add_subcommand("phantom", "Generate a synthetic curtaining phantom");
  add_common(ph);
  ph->add_option("--preset", cfg.preset)->check(CLI::IsMember({"hard-edge", "smooth-laminar", "stripes-only"}));
  ph->add_option("--phantom-spec", cfg.phantom_spec);
  ph->add_option("--seed", cfg.seed);
  ph->add_option("--output-prefix", cfg.output_prefix);
  ph->add_option("--slices", cfg.slices);

  auto* cmp = app.add_subcommand("compare", "Score IC, ICREV and M1 against a clean reference");
  add_common(cmp);
  add_input(cmp);
  add_solver(cmp);
  cmp->add_option("--preset", cfg.preset)->check(CLI::IsMember({"hard-edge", "smooth-laminar", "stripes-only"}));
  cmp->add_option("--output-prefix", cfg.output_prefix, "Writes <prefix>_table.csv");
  cmp->add_option("--mu1", cfg.mu1);
  cmp->add_option("--mu2", cfg.mu2);
  cmp->add_option("--mu3", cfg.mu3);
  cmp->add_option("--icrev-mu1", cfg.icrev_mu1);
  cmp->add_option("--icrev-mu3", cfg.icrev_mu3);
  cmp->add_option("--nu1", cfg.nu1);
  cmp->add_option("--nu2", cfg.nu2);
  cmp->add_option("--median-len", cfg.median_len);

  auto* met = app.add_subcommand("metrics", "PSNR, MSE and SSIM of --input against --reference");
  add_common(met);
  met->add_option("--input", cfg.input);
  met->add_option("--reference", cfg.reference);

  auto* exp = app.add_subcommand("export-slices", "Write 16-bit PNG slices of a volume");
  add_common(exp);
  exp->add_option("--input", cfg.input);
  exp->add_option("--slices", cfg.slices);
  exp->add_option("--output-prefix", cfg.output_prefix);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: config: " << e.what() << "\n";
    return kExitConfig;
  }
  for (auto* sub : app.get_subcommands()) cfg.subcommand = sub->get_name();
  return run(cfg, out, err);
}

}  // namespace decurtain
