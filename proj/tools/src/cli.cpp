#include "glmmd/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "glmmd/csv.hpp"
#include "glmmd/error.hpp"
#include "glmmd/expfam.hpp"
#include "glmmd/fit.hpp"
#include "glmmd/inference.hpp"
#include "glmmd/model.hpp"
#include "glmmd/sim.hpp"

namespace glmmd::cli {
namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr int kSchemaVersion = 1;

// Flag-level fit settings shared by every command that fits models.
struct FitFlags {
  int nodes = QuadratureSpec{}.nodes_per_dim;
  bool no_adaptive = false;
  int max_iters = FitOptions{}.max_iters;
  double tol_f = FitOptions{}.tol_f;
  double tol_x = FitOptions{}.tol_x;
  int restarts = FitOptions{}.restarts;

  [[nodiscard]] FitOptions options(std::uint64_t seed) const {
    FitOptions o;
    o.max_iters = max_iters;
    o.tol_f = tol_f;
    o.tol_x = tol_x;
    o.restarts = restarts;
    o.quadrature.nodes_per_dim = nodes;
    o.quadrature.adaptive = !no_adaptive;
    o.seed = seed;
    o.validate();
    return o;
  }
};

// Custom simulation setting.
struct CustomFlags {
  double beta0 = 0.0;
  std::vector<double> beta_b;
  double sigma2 = 1.0;
  double phi = 1.0;
  std::string family = "gamma";
};

struct FitCommand {
  std::string data;
  std::string family;
  std::string group_col;
  std::string y_col;
  std::vector<std::string> xa_cols;
  std::vector<std::string> xb_cols;
  bool xa_intercept = false;
  bool xb_intercept = false;
  std::string delimiter = ",";
  double alpha = 0.05;
  std::string sd_method = "endpoint";
  std::uint64_t seed = FitOptions{}.seed;
  std::string out_json = "fit.json";
  std::string out_ci = "fit_ci.csv";
  FitFlags fit;
};

struct SimulateCommand {
  std::string setting = "A";
  CustomFlags custom;
  int m = 50;
  int n = 0;
  std::uint64_t seed = 1;
  std::string out = "simulated.csv";
  std::string truth_out;
};

struct CoverageCommand {
  std::vector<std::string> settings = {"A", "B", "C", "D"};
  CustomFlags custom;
  std::vector<int> m_grid = {50, 100, 150, 200};
  int reps = 200;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out = "coverage.csv";
  std::string meta;
  FitFlags fit;
};

struct ValidateCommand {
  std::string setting = "A";
  CustomFlags custom;
  int m = 200;
  int n = 0;
  int reps = 300;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out = "validate.json";
  FitFlags fit;
};

void add_fit_flags(CLI::App* app, FitFlags& f) {
  app->add_option("--nodes", f.nodes, "Gauss-Hermite nodes per random-effect dimension (odd, >= 3)");
  app->add_flag("--no-adaptive", f.no_adaptive, "Center quadrature at zero instead of the posterior mode");
  app->add_option("--max-iters", f.max_iters, "Nelder-Mead iteration limit");
  app->add_option("--tol-f", f.tol_f, "Nelder-Mead function-value spread tolerance");
  app->add_option("--tol-x", f.tol_x, "Nelder-Mead simplex size tolerance");
  app->add_option("--restarts", f.restarts, "Extra Nelder-Mead runs from perturbed optima");
}

void add_custom_flags(CLI::App* app, CustomFlags& c) {
  app->add_option("--beta0", c.beta0, "custom setting: intercept");
  app->add_option("--beta-b", c.beta_b, "custom setting: fixed-only coefficients")->delimiter(',');
  app->add_option("--sigma2", c.sigma2, "custom setting: random-intercept variance");
  app->add_option("--phi", c.phi, "custom setting: dispersion");
  app->add_option("--family", c.family, "custom setting: gaussian, gamma or inverse_gaussian");
}

SimSetting resolve_setting(const std::string& label, const CustomFlags& c) {
  if (label.size() == 1 && std::string("ABCDabcd").find(label[0]) != std::string::npos) {
    return SimSetting::preset(label[0]);
  }
  if (label != "custom") {
    throw PreconditionError("unknown setting '" + label + "' (expected A, B, C, D or custom)");
  }
  if (c.beta_b.empty()) throw PreconditionError("custom setting needs --beta-b");
  SimSetting s;
  s.label = SettingLabel::Custom;
  s.name = "custom";
  s.beta0 = c.beta0;
  s.beta_b = Eigen::Map<const Eigen::VectorXd>(c.beta_b.data(), static_cast<Eigen::Index>(c.beta_b.size()));
  s.sigma2 = c.sigma2;
  s.phi = c.phi;
  s.family = parse_family(c.family);
  if (!(s.sigma2 > 0.0) || !(s.phi > 0.0)) throw DomainError("custom setting needs sigma2 > 0 and phi > 0");
  return s;
}

int default_group_size(int m, int n) {
  if (n > 0) return n;
  if (m < 5 || m % 5 != 0) {
    throw PreconditionError("m = " + std::to_string(m) + " is not a positive multiple of 5; pass --n explicitly");
  }
  return m / 5;
}

json matrix_json(const Eigen::MatrixXd& a) {
  json data = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) data.push_back(a(i, j));
  }
  return {{"rows", a.rows()}, {"cols", a.cols()}, {"data", data}};
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (double x : v) out.push_back(x);
  return out;
}

json params_json(const Parameters& p, const Dataset& ds) {
  json beta_a = json::object();
  for (int k = 0; k < p.dim_a(); ++k) beta_a[ds.xa_names()[static_cast<std::size_t>(k)]] = p.beta_a(k);
  json beta_b = json::object();
  for (int k = 0; k < p.dim_b(); ++k) beta_b[ds.xb_names()[static_cast<std::size_t>(k)]] = p.beta_b(k);
  return {{"beta_a", beta_a}, {"beta_b", beta_b}, {"sigma", matrix_json(p.sigma)}, {"phi", p.phi}};
}

json options_json(const FitOptions& o) {
  return {{"max_iters", o.max_iters},
          {"tol_f", o.tol_f},
          {"tol_x", o.tol_x},
          {"restarts", o.restarts},
          {"nodes_per_dim", o.quadrature.nodes_per_dim},
          {"adaptive", o.quadrature.adaptive}};
}

json setting_json(const SimSetting& s) {
  return {{"name", s.name},
          {"family", std::string(s.family.name())},
          {"beta0", s.beta0},
          {"beta_b", vector_json(s.beta_b)},
          {"sigma2", s.sigma2},
          {"phi", s.phi}};
}

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  return f;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream f = open_output(path);
  f << j.dump(2) << '\n';
  if (!f) throw IoError("failed writing '" + path + "'");
}

std::string sidecar_path(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  p.replace_extension();
  return p.string() + suffix;
}

// Feeds values from the --config object into options absent from the
// command line. Keys are long option names; '_' and '-' are equivalent.
void merge_config(CLI::App* sub, const std::string& config_path) {
  std::ifstream f(config_path);
  if (!f) throw IoError("cannot open config file '" + config_path + "'");
  json cfg;
  try {
    cfg = json::parse(f);
  } catch (const json::parse_error& e) {
    throw SchemaError("config file '" + config_path + "': " + e.what());
  }
  if (!cfg.is_object()) throw SchemaError("config file '" + config_path + "' must hold a JSON object");

  for (const auto& [raw_key, value] : cfg.items()) {
    std::string key = raw_key;
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config" || key == "command") continue;
    CLI::Option* opt = nullptr;
    try {
      opt = sub->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw PreconditionError("config key '" + raw_key + "' is not an option of '" + sub->get_name() + "'");
    }
    if (opt->count() > 0) continue;  // command line wins
    auto as_text = [&](const json& v) -> std::string {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
      if (v.is_number()) return v.dump();
      throw SchemaError("config key '" + raw_key + "' has an unsupported value");
    };
    if (value.is_array()) {
      for (const json& v : value) opt->add_result(as_text(v));
    } else {
      opt->add_result(as_text(value));
    }
    opt->run_callback();
  }
}

int cmd_fit(const FitCommand& c, std::ostream& out, std::ostream& err) {
  if (c.data.empty()) throw PreconditionError("fit needs --data");
  if (c.family.empty()) throw PreconditionError("fit needs --family");
  if (c.group_col.empty() || c.y_col.empty()) throw PreconditionError("fit needs --group-col and --y-col");
  if (c.delimiter.size() != 1) throw PreconditionError("--delimiter must be a single character");
  const Family family = parse_family(c.family);
  SdScaleMethod sd_method = SdScaleMethod::Endpoint;
  if (c.sd_method == "delta") sd_method = SdScaleMethod::Delta;
  else if (c.sd_method != "endpoint") throw PreconditionError("--sd-method must be endpoint or delta");
  const FitOptions opts = c.fit.options(c.seed);

  CsvSchema schema;
  schema.group_col = c.group_col;
  schema.y_col = c.y_col;
  schema.xa_cols = c.xa_cols;
  schema.xb_cols = c.xb_cols;
  schema.xa_intercept = c.xa_intercept;
  schema.xb_intercept = c.xb_intercept;
  schema.delimiter = c.delimiter[0];
  const Dataset ds = load_csv(c.data, schema);

  FitResult fit = fit_mle(ds, family, opts);
  attach_asymptotic_covariance(fit, ds, family);

  // Intervals for a non-converged fit are reported at the last iterate.
  FitResult for_ci = fit;
  for_ci.converged = true;
  const CiTable table = ci_all(for_ci, ds, family, c.alpha, sd_method);

  json j;
  j["schema_version"] = kSchemaVersion;
  j["family"] = std::string(family.name());
  j["data"] = {{"path", c.data}, {"groups", ds.num_groups()}, {"observations", ds.total_obs()},
               {"mean_group_size", ds.mean_group_size()}};
  j["estimates"] = params_json(fit.params, ds);
  j["loglik"] = fit.loglik;
  j["converged"] = fit.converged;
  j["iters"] = fit.iters;
  j["evaluations"] = fit.evaluations;
  j["start"] = params_json(fit.start, ds);
  j["start_loglik"] = fit.start_loglik;
  j["warning"] = fit.warning ? json(*fit.warning) : json(nullptr);
  const AsymCov& ac = *fit.asym_cov;
  j["asym_cov"] = {{"beta_a", matrix_json(ac.beta_a)},
                   {"beta_b", matrix_json(ac.beta_b)},
                   {"vech_sigma", matrix_json(ac.vech_sigma)},
                   {"phi", ac.phi},
                   {"lambda_b", matrix_json(ac.lambda_b)},
                   {"m", ac.m},
                   {"n", ac.n}};
  j["alpha"] = c.alpha;
  j["sd_method"] = c.sd_method;
  j["options"] = options_json(opts);
  j["seed"] = c.seed;
  write_json(c.out_json, j);
  {
    std::ofstream f = open_output(c.out_ci);
    write_ci_csv(f, table);
    if (!f) throw IoError("failed writing '" + c.out_ci + "'");
  }

  out << family.name() << " GLMM, " << ds.num_groups() << " groups, " << ds.total_obs() << " observations\n";
  out << "log-likelihood " << std::setprecision(10) << fit.loglik << ", " << fit.iters << " iterations, "
      << (fit.converged ? "converged" : "NOT converged") << "\n\n";
  out << format_ci_table(table, c.alpha);
  if (fit.warning) err << "warning: " << *fit.warning << '\n';
  if (!fit.converged) {
    err << "error: optimizer did not converge; outputs hold the last iterate\n";
    return kNotConverged;
  }
  return kOk;
}

int cmd_simulate(const SimulateCommand& c, std::ostream& out) {
  const SimSetting s = resolve_setting(c.setting, c.custom);
  const int n = default_group_size(c.m, c.n);
  const SimDataset sim = generate_dataset(s, c.m, n, c.seed);
  {
    std::ofstream f = open_output(c.out);
    write_csv(f, sim.data);
    if (!f) throw IoError("failed writing '" + c.out + "'");
  }
  const std::vector<double> tv = s.true_vector();
  json j;
  j["schema_version"] = kSchemaVersion;
  j["setting"] = setting_json(s);
  j["true_vector"] = tv;
  j["true_vector_names"] = json::array();
  j["true_vector_names"].push_back("beta0");
  for (std::size_t k = 0; k < sim.data.xb_names().size(); ++k) j["true_vector_names"].push_back(sim.data.xb_names()[k]);
  j["true_vector_names"].push_back("sigma2");
  j["true_vector_names"].push_back("phi");
  j["m"] = c.m;
  j["n"] = n;
  j["seed"] = c.seed;
  j["redrawn_effects"] = sim.redrawn_effects;
  const std::string truth = c.truth_out.empty() ? sidecar_path(c.out, ".truth.json") : c.truth_out;
  write_json(truth, j);
  out << "wrote " << sim.data.total_obs() << " rows to " << c.out << " and truth to " << truth << '\n';
  return kOk;
}

int cmd_coverage(const CoverageCommand& c, std::ostream& out) {
  std::vector<SimSetting> settings;
  for (const std::string& label : c.settings) settings.push_back(resolve_setting(label, c.custom));
  const FitOptions opts = c.fit.options(FitOptions{}.seed);
  // Open outputs first so an unwritable path fails before the long run.
  std::ofstream csv = open_output(c.out);
  const std::string meta_path = c.meta.empty() ? sidecar_path(c.out, ".meta.json") : c.meta;
  std::ofstream meta = open_output(meta_path);

  const CoverageReport report = run_coverage(settings, c.m_grid, c.reps, c.alpha, c.seed, opts, c.threads);
  write_coverage_csv(csv, report);
  if (!csv) throw IoError("failed writing '" + c.out + "'");

  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = c.seed;
  j["replications"] = c.reps;
  j["alpha"] = c.alpha;
  j["m_grid"] = c.m_grid;
  j["group_size_rule"] = "n = m / 5";
  j["settings"] = json::array();
  for (const SimSetting& s : settings) j["settings"].push_back(setting_json(s));
  j["options"] = options_json(opts);
  j["columns"] = {"setting", "m", "n", "replications", "covered", "coverage", "mc_se", "fit_failures"};
  j["cells"] = json::array();
  int failures = 0;
  for (const CoverageRow& r : report.rows) {
    failures += r.fit_failures;
    j["cells"].push_back({{"setting", r.setting},
                          {"m", r.m},
                          {"fit_failures", r.fit_failures},
                          {"redrawn_effects", r.redrawn_effects}});
  }
  j["total_fit_failures"] = failures;
  meta << j.dump(2) << '\n';
  if (!meta) throw IoError("failed writing '" + meta_path + "'");

  out << "setting      m    n  coverage  mc_se   failures\n";
  for (const CoverageRow& r : report.rows) {
    out << std::left << std::setw(8) << r.setting << std::right << std::setw(6) << r.m << std::setw(5) << r.n
        << std::fixed << std::setprecision(3) << std::setw(10) << r.coverage << std::setw(8) << r.mc_se
        << std::setw(10) << r.fit_failures << '\n';
  }
  out.unsetf(std::ios::floatfield);
  return kOk;
}

int cmd_validate(const ValidateCommand& c, std::ostream& out) {
  const SimSetting s = resolve_setting(c.setting, c.custom);
  const int n = default_group_size(c.m, c.n);
  const FitOptions opts = c.fit.options(FitOptions{}.seed);
  std::ofstream f = open_output(c.out);
  const Theorem1Report rep = theorem1_validation(s, c.m, n, c.reps, c.seed, opts, c.threads);

  json j;
  j["schema_version"] = kSchemaVersion;
  j["setting"] = setting_json(s);
  j["m"] = rep.m;
  j["n"] = rep.n;
  j["replications"] = rep.replications;
  j["successes"] = rep.successes;
  j["seed"] = c.seed;
  j["options"] = options_json(opts);
  j["names"] = rep.names;
  j["empirical_cov"] = matrix_json(rep.empirical_cov);
  j["predicted_cov"] = matrix_json(rep.predicted_cov);
  j["relative_deviation"] = vector_json(rep.relative_deviation);
  j["variance_se"] = vector_json(rep.variance_se);
  j["cross_names"] = rep.cross_names;
  j["cross_z"] = vector_json(rep.cross_z);
  f << j.dump(2) << '\n';
  if (!f) throw IoError("failed writing '" + c.out + "'");

  out << "coordinate      empirical   predicted   rel.dev\n";
  for (std::size_t k = 0; k < rep.names.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    out << std::left << std::setw(14) << rep.names[k] << std::right << std::setprecision(5) << std::setw(12)
        << rep.empirical_cov(i, i) << std::setw(12) << rep.predicted_cov(i, i) << std::setw(10)
        << rep.relative_deviation(i) << '\n';
  }
  for (std::size_t k = 0; k < rep.cross_names.size(); ++k) {
    out << "z[" << rep.cross_names[k] << "] = " << rep.cross_z(static_cast<Eigen::Index>(k)) << '\n';
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional maximum likelihood for GLMMs over reproductive exponential families", "glmmd"};
  app.require_subcommand(1);

  FitCommand fit_cmd;
  SimulateCommand sim_cmd;
  CoverageCommand cov_cmd;
  ValidateCommand val_cmd;
  std::string config;

  CLI::App* fit = app.add_subcommand("fit", "Fit a dataset and report estimates with confidence intervals");
  fit->add_option("--config", config, "JSON file of option values; command-line flags take precedence");
  fit->add_option("--data", fit_cmd.data, "Input CSV with a header row");
  fit->add_option("--family", fit_cmd.family, "gaussian, gamma or inverse_gaussian");
  fit->add_option("--group-col", fit_cmd.group_col, "Grouping column");
  fit->add_option("--y-col", fit_cmd.y_col, "Response column");
  fit->add_option("--xa-cols", fit_cmd.xa_cols, "Predictors with random effects")->delimiter(',');
  fit->add_option("--xb-cols", fit_cmd.xb_cols, "Predictors with fixed effects only")->delimiter(',');
  fit->add_flag("--xa-intercept", fit_cmd.xa_intercept, "Prepend a random intercept");
  fit->add_flag("--xb-intercept", fit_cmd.xb_intercept, "Prepend a fixed-only intercept");
  fit->add_option("--delimiter", fit_cmd.delimiter, "Field separator");
  fit->add_option("--alpha", fit_cmd.alpha, "Interval level is 1 - alpha");
  fit->add_option("--sd-method", fit_cmd.sd_method, "sd-scale intervals: endpoint or delta");
  fit->add_option("--seed", fit_cmd.seed, "Seed for restart perturbations");
  fit->add_option("--out-json", fit_cmd.out_json, "Fit result JSON path");
  fit->add_option("--out-ci", fit_cmd.out_ci, "Confidence interval CSV path");
  add_fit_flags(fit, fit_cmd.fit);

  CLI::App* sim = app.add_subcommand("simulate", "Generate a dataset from a simulation setting");
  sim->add_option("--config", config, "JSON file of option values; command-line flags take precedence");
  sim->add_option("--setting", sim_cmd.setting, "A, B, C, D or custom");
  add_custom_flags(sim, sim_cmd.custom);
  sim->add_option("--m", sim_cmd.m, "Number of groups");
  sim->add_option("--n", sim_cmd.n, "Observations per group (default m/5)");
  sim->add_option("--seed", sim_cmd.seed, "Random seed");
  sim->add_option("--out", sim_cmd.out, "Dataset CSV path");
  sim->add_option("--truth-out", sim_cmd.truth_out, "True-parameter JSON path (default <out>.truth.json)");

  CLI::App* cov = app.add_subcommand("coverage", "Monte Carlo coverage of the dispersion interval");
  cov->add_option("--config", config, "JSON file of option values; command-line flags take precedence");
  cov->add_option("--setting,--settings", cov_cmd.settings, "Settings to run")->delimiter(',');
  add_custom_flags(cov, cov_cmd.custom);
  cov->add_option("--m,--m-grid", cov_cmd.m_grid, "Group counts (multiples of 5; n = m/5)")->delimiter(',');
  cov->add_option("--reps", cov_cmd.reps, "Replications per cell");
  cov->add_option("--alpha", cov_cmd.alpha, "Interval level is 1 - alpha");
  cov->add_option("--seed", cov_cmd.seed, "Root seed");
  cov->add_option("--threads", cov_cmd.threads, "Worker threads (default $GLMMD_THREADS or all cores)");
  cov->add_option("--out", cov_cmd.out, "Coverage CSV path");
  cov->add_option("--meta", cov_cmd.meta, "Metadata JSON path (default <out>.meta.json)");
  add_fit_flags(cov, cov_cmd.fit);

  CLI::App* val = app.add_subcommand("validate", "Compare the estimator's empirical covariance with its large-sample form");
  val->add_option("--config", config, "JSON file of option values; command-line flags take precedence");
  val->add_option("--setting", val_cmd.setting, "A, B, C, D or custom");
  add_custom_flags(val, val_cmd.custom);
  val->add_option("--m", val_cmd.m, "Number of groups");
  val->add_option("--n", val_cmd.n, "Observations per group (default m/5)");
  val->add_option("--reps", val_cmd.reps, "Replications (>= 50)");
  val->add_option("--seed", val_cmd.seed, "Root seed");
  val->add_option("--threads", val_cmd.threads, "Worker threads (default $GLMMD_THREADS or all cores)");
  val->add_option("--out", val_cmd.out, "Report JSON path");
  add_fit_flags(val, val_cmd.fit);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kDomainOrPrecondition;
  }

  try {
    CLI::App* chosen = app.get_subcommands().front();
    if (!config.empty()) merge_config(chosen, config);
    if (chosen == fit) return cmd_fit(fit_cmd, out, err);
    if (chosen == sim) return cmd_simulate(sim_cmd, out);
    if (chosen == cov) return cmd_coverage(cov_cmd, out);
    return cmd_validate(val_cmd, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoOrSchema;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << '\n';
    return kIoOrSchema;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kDomainOrPrecondition;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << '\n';
    return kDomainOrPrecondition;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kNotConverged;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kDomainOrPrecondition;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoOrSchema;
  }
}

}  // namespace glmmd::cli
