// qhbm: batch front end for quadratic harmonic-balance continuation.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "qhbm/anm.hpp"
#include "qhbm/branch_io.hpp"
#include "qhbm/hbm.hpp"
#include "qhbm/models.hpp"
#include "qhbm/oracle.hpp"
#include "qhbm/quadsys.hpp"
#include "qhbm/start.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qhbm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNumerical = 1;
constexpr int kExitConfig = 2;

struct Window {
  double lo = 0.0;
  double hi = 0.0;
};

Window parse_window(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("window '" + text + "' must look like lo:hi");
  try {
    Window w;
    w.lo = std::stod(text.substr(0, colon));
    w.hi = std::stod(text.substr(colon + 1));
    if (!(w.lo < w.hi)) throw ConfigError("window '" + text + "' must have lo < hi");
    return w;
  } catch (const std::logic_error&) {
    throw ConfigError("window '" + text + "' is not numeric");
  }
}

// ---------------------------------------------------------------------------
// Run configuration: defaults, then TOML files, then command-line flags.

struct RunConfig {
  std::string model = "vdp";
  json params = json::object();
  /// Inline system for models loaded from JSON (restored from branch headers).
  std::optional<json> system;

  std::vector<double> initial_state;
  std::optional<double> settle_time;
  std::optional<std::size_t> section_var;
  std::optional<double> section_level;

  std::optional<int> harmonics;
  std::optional<int> subharmonic;
  std::optional<int> forcing_multiple;
  std::optional<std::size_t> phase_var;
  int phase_harmonic = 0;

  AnmSettings anm;
  std::string start = "auto";
  std::optional<double> lambda0;
  std::optional<double> omega0;
  double amplitude = 1e-3;
  std::optional<Window> window;
  std::optional<Window> omega_window;
  double direction = 1.0;

  std::string restart;
  std::optional<int> restart_point;
  std::optional<double> restart_lambda;
  double perturb = 0.0;

  std::string out_dir = ".";
  std::string prefix = "branch";
  bool series = false;
  std::size_t collapse_window = 5;
  double collapse_fraction = 0.2;
};

json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (const auto* a = node.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  if (const auto* v = node.as_string()) return v->get();
  throw ConfigError("unsupported value type in config file");
}

class TableReader {
 public:
  TableReader(const json& table, std::string section) : table_(table), section_(std::move(section)) {}

  bool has(const char* key) const { return table_.contains(key); }

  template <class T>
  void get(const char* key, T& out) const {
    if (!has(key)) return;
    try {
      out = table_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("[" + section_ + "] " + key + ": wrong type");
    }
  }

  template <class T>
  void get(const char* key, std::optional<T>& out) const {
    if (!has(key)) return;
    T v{};
    get(key, v);
    out = v;
  }

  std::optional<Window> window(const char* key) const {
    if (!has(key)) return std::nullopt;
    const auto& v = table_.at(key);
    if (v.is_string()) return parse_window(v.get<std::string>());
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
      const Window w{v[0].get<double>(), v[1].get<double>()};
      if (!(w.lo < w.hi)) throw ConfigError("[" + section_ + "] " + key + ": lo must be below hi");
      return w;
    }
    throw ConfigError("[" + section_ + "] " + key + ": expected \"lo:hi\" or [lo, hi]");
  }

  void reject_unknown(std::initializer_list<const char*> known) const {
    for (const auto& [k, v] : table_.items()) {
      if (std::none_of(known.begin(), known.end(), [&](const char* n) { return k == n; })) {
        throw ConfigError("[" + section_ + "]: unknown key '" + k + "'");
      }
    }
  }

 private:
  const json& table_;
  std::string section_;
};

void apply_config_file(RunConfig& cfg, const std::string& path) {
  toml::table tbl;
  try {
    tbl = toml::parse_file(path);
  } catch (const toml::parse_error& ex) {
    throw ConfigError(path + ": " + std::string(ex.description()));
  }
  const json doc = toml_to_json(tbl);
  for (const auto& [k, v] : doc.items()) {
    if (k != "model" && k != "basis" && k != "anm" && k != "output") throw ConfigError(path + ": unknown section [" + k + "]");
    if (!v.is_object()) throw ConfigError(path + ": [" + k + "] must be a table");
  }
  if (doc.contains("model")) {
    TableReader r(doc["model"], "model");
    r.reject_unknown({"name", "params", "start", "lambda0", "omega0", "amplitude", "initial_state", "settle_time",
                      "section_var", "section_level", "restart", "restart_point", "restart_lambda"});
    r.get("name", cfg.model);
    if (r.has("params")) {
      if (!doc["model"]["params"].is_object()) throw ConfigError("[model] params must be a table");
      cfg.params.update(doc["model"]["params"]);
    }
    r.get("start", cfg.start);
    r.get("lambda0", cfg.lambda0);
    r.get("omega0", cfg.omega0);
    r.get("amplitude", cfg.amplitude);
    r.get("initial_state", cfg.initial_state);
    r.get("settle_time", cfg.settle_time);
    r.get("section_var", cfg.section_var);
    r.get("section_level", cfg.section_level);
    r.get("restart", cfg.restart);
    r.get("restart_point", cfg.restart_point);
    r.get("restart_lambda", cfg.restart_lambda);
  }
  if (doc.contains("basis")) {
    TableReader r(doc["basis"], "basis");
    r.reject_unknown({"H", "K", "p", "phase_var", "phase_harmonic"});
    r.get("H", cfg.harmonics);
    r.get("K", cfg.subharmonic);
    r.get("p", cfg.forcing_multiple);
    r.get("phase_var", cfg.phase_var);
    r.get("phase_harmonic", cfg.phase_harmonic);
  }
  if (doc.contains("anm")) {
    TableReader r(doc["anm"], "anm");
    r.reject_unknown({"order", "tolerance", "max_sections", "seed", "perturbation", "window", "omega_window",
                      "direction", "min_step"});
    r.get("order", cfg.anm.order);
    r.get("tolerance", cfg.anm.tolerance);
    r.get("max_sections", cfg.anm.max_sections);
    r.get("seed", cfg.anm.seed);
    r.get("perturbation", cfg.perturb);
    r.get("direction", cfg.direction);
    r.get("min_step", cfg.anm.min_step);
    if (auto w = r.window("window")) cfg.window = w;
    if (auto w = r.window("omega_window")) cfg.omega_window = w;
  }
  if (doc.contains("output")) {
    TableReader r(doc["output"], "output");
    r.reject_unknown({"dir", "prefix", "series", "collapse_window", "collapse_fraction"});
    r.get("dir", cfg.out_dir);
    r.get("prefix", cfg.prefix);
    r.get("series", cfg.series);
    r.get("collapse_window", cfg.collapse_window);
    r.get("collapse_fraction", cfg.collapse_fraction);
  }
}

/// Command-line flags shared by `continue` and `sweep`. Each flag only
/// overrides the configuration when it was given.
struct RunFlags {
  std::vector<std::string> configs;
  std::string model;
  std::vector<std::string> params;
  int H = 0, K = 0, p = 0;
  std::size_t phase_var = 0;
  int phase_harmonic = 0;
  int order = 0, max_sections = 0;
  double tolerance = 0.0;
  std::uint64_t seed = 0;
  std::string start;
  double lambda0 = 0.0, omega0 = 0.0, amplitude = 0.0, direction = 0.0, perturb = 0.0;
  std::string window, omega_window;
  std::string restart;
  int restart_point = 0;
  double restart_lambda = 0.0;
  std::string out_dir, prefix;
  bool series = false;
  std::size_t collapse_window = 0;
  std::map<std::string, CLI::Option*> opt;

  void attach(CLI::App* app) {
    opt["config"] = app->add_option("-c,--config", configs, "TOML config file(s), applied in order");
    opt["model"] = app->add_option("-m,--model", model, "Built-in model name, 'biochem', or a system JSON file");
    opt["param"] = app->add_option("--param", params, "Model parameter override key=value (repeatable)");
    opt["H"] = app->add_option("--H", H, "Number of harmonics")->check(CLI::PositiveNumber);
    opt["K"] = app->add_option("--K", K, "Subharmonic exponent (fundamental omega/2^K)")->check(CLI::NonNegativeNumber);
    opt["p"] = app->add_option("--p", p, "Forcing multiple: lambda = p omega")->check(CLI::PositiveNumber);
    opt["phase_var"] = app->add_option("--phase-var", phase_var, "Variable carrying the phase condition");
    opt["phase_harmonic"] = app->add_option("--phase-harmonic", phase_harmonic, "Grid slot of the phase condition");
    opt["order"] = app->add_option("--order", order, "Series truncation order")->check(CLI::Range(2, 200));
    opt["tolerance"] = app->add_option("--tol", tolerance, "Residual tolerance defining the range of utility");
    opt["max_sections"] = app->add_option("--max-sections", max_sections, "Section budget");
    opt["seed"] = app->add_option("--seed", seed, "Seed of the perturbation vector (QHBM_SEED overrides)");
    opt["start"] = app->add_option("--start", start, "Start mode")
                       ->check(CLI::IsMember({"auto", "oracle", "rest", "hopf", "newton", "restart"}));
    opt["lambda0"] = app->add_option("--lambda0", lambda0, "Start value of lambda");
    opt["omega0"] = app->add_option("--omega0", omega0, "Start value of omega (forced models)");
    opt["amplitude"] = app->add_option("--amplitude", amplitude, "Seed amplitude for Hopf starts");
    opt["window"] = app->add_option("--window", window, "lambda window lo:hi");
    opt["omega_window"] = app->add_option("--omega-window", omega_window, "omega window lo:hi");
    opt["direction"] = app->add_option("--direction", direction, "+1 or -1 along the continuation coordinate");
    opt["restart"] = app->add_option("--restart", restart, "Branch JSONL file to restart from");
    opt["restart_point"] = app->add_option("--restart-point", restart_point, "Point index in the restart file");
    opt["restart_lambda"] = app->add_option("--restart-lambda", restart_lambda, "Restart at the point nearest lambda");
    opt["perturb"] = app->add_option("--perturb", perturb, "Magnitude of the branch-switching perturbation");
    opt["out_dir"] = app->add_option("-o,--out-dir", out_dir, "Output directory");
    opt["prefix"] = app->add_option("--prefix", prefix, "Output file prefix");
    opt["series"] = app->add_flag("--series", series, "Store series coefficients in the JSONL file");
    opt["collapse_window"] = app->add_option("--collapse-window", collapse_window, "Window of the step-collapse test");
  }

  bool given(const char* name) const { return opt.at(name)->count() > 0; }

  void apply(RunConfig& cfg) const {
    if (given("model")) cfg.model = model;
    for (const auto& kv : params) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--param expects key=value, got '" + kv + "'");
      const std::string key = kv.substr(0, eq);
      const std::string value = kv.substr(eq + 1);
      try {
        cfg.params[key] = json::parse(value.find(',') != std::string::npos ? "[" + value + "]" : value);
      } catch (const json::exception&) {
        throw ConfigError("--param " + key + ": value '" + value + "' is not numeric");
      }
    }
    if (given("H")) cfg.harmonics = H;
    if (given("K")) cfg.subharmonic = K;
    if (given("p")) cfg.forcing_multiple = p;
    if (given("phase_var")) cfg.phase_var = phase_var;
    if (given("phase_harmonic")) cfg.phase_harmonic = phase_harmonic;
    if (given("order")) cfg.anm.order = order;
    if (given("tolerance")) cfg.anm.tolerance = tolerance;
    if (given("max_sections")) cfg.anm.max_sections = max_sections;
    if (given("seed")) cfg.anm.seed = seed;
    if (given("start")) cfg.start = start;
    if (given("lambda0")) cfg.lambda0 = lambda0;
    if (given("omega0")) cfg.omega0 = omega0;
    if (given("amplitude")) cfg.amplitude = amplitude;
    if (given("window")) cfg.window = parse_window(window);
    if (given("omega_window")) cfg.omega_window = parse_window(omega_window);
    if (given("direction")) cfg.direction = direction;
    if (given("restart")) cfg.restart = restart;
    if (given("restart_point")) cfg.restart_point = restart_point;
    if (given("restart_lambda")) cfg.restart_lambda = restart_lambda;
    if (given("perturb")) cfg.perturb = perturb;
    if (given("out_dir")) cfg.out_dir = out_dir;
    if (given("prefix")) cfg.prefix = prefix;
    if (given("series")) cfg.series = series;
    if (given("collapse_window")) cfg.collapse_window = collapse_window;
  }
};

void apply_seed_env(RunConfig& cfg) {
  if (const char* env = std::getenv("QHBM_SEED"); env && *env) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ConfigError("QHBM_SEED must be a non-negative integer");
    cfg.anm.seed = v;
  }
}

RunConfig build_config(const RunFlags& flags, const std::vector<std::string>& extra_configs = {}) {
  RunConfig cfg;
  for (const auto& path : flags.configs) apply_config_file(cfg, path);
  for (const auto& path : extra_configs) apply_config_file(cfg, path);
  flags.apply(cfg);
  apply_seed_env(cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// Model resolution.

struct Problem {
  std::string name;
  bool algebraic = false;
  Model model;
  std::optional<BiochemModel> bio;
  HarmonicBasis basis;
  std::optional<PhaseSpec> phase;
  LiftedSystem ls;
  std::vector<std::string> var_names;
  /// Everything needed to rebuild this problem from a branch header.
  json description;
};

bool looks_like_file(const std::string& model) {
  return model.size() > 5 && model.substr(model.size() - 5) == ".json";
}

Model model_from_system(const RunConfig& cfg, QuadraticSystem sys, const std::string& name) {
  const auto problems = validate(sys);
  if (!problems.empty()) {
    std::string msg = "system '" + name + "' is invalid:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  Model m;
  m.name = name;
  m.system = std::move(sys);
  const bool forced = m.system.forced();
  m.basis = HarmonicBasis{5, m.system.n_eq, 0, forced ? std::optional<int>(1) : std::nullopt};
  if (!forced) m.phase = default_phase(m.system);
  m.window_on_omega = forced;
  m.window_lo = -HUGE_VAL;
  m.window_hi = HUGE_VAL;
  try {
    m.original = make_recast_ode(m.system);
  } catch (const ConfigError&) {
    // Leaves the model without time-domain dynamics; oracle starts and
    // validation then fail with a configuration error.
  }
  m.start.initial_state = cfg.initial_state;
  if (m.start.initial_state.empty() && m.original.rhs) {
    // A unit kick on the first state variable.
    m.start.initial_state.assign(m.original.dim, 0.0);
    m.start.initial_state.front() = 1.0;
  }
  return m;
}

Problem resolve(const RunConfig& cfg) {
  Problem pb;
  json desc = json::object();
  if (cfg.model == "biochem") {
    const double mu = cfg.params.value("mu", 0.05);
    for (const auto& [k, v] : cfg.params.items()) {
      if (k != "mu") throw ConfigError("biochem: unknown parameter '" + k + "'");
    }
    pb.name = "biochem";
    pb.algebraic = true;
    pb.bio = biochem(mu);
    pb.ls = pb.bio->system;
    pb.var_names = {"u1", "u2", "v1", "v2", "v3", "v4"};
    desc["model"] = "biochem";
    desc["params"] = cfg.params;
    pb.description = desc;
    return pb;
  }

  if (cfg.system) {
    pb.model = model_from_system(cfg, system_from_json(*cfg.system), cfg.model);
    desc["system"] = *cfg.system;
  } else if (looks_like_file(cfg.model)) {
    if (!fs::exists(cfg.model)) throw ConfigError("model file '" + cfg.model + "' not found");
    auto sys = load_system(cfg.model);
    desc["system"] = to_json(sys);
    pb.model = model_from_system(cfg, std::move(sys), fs::path(cfg.model).stem().string());
  } else {
    pb.model = model_from_config(cfg.model, cfg.params);
  }
  pb.name = pb.model.name;

  auto& st = pb.model.start;
  if (!cfg.initial_state.empty()) st.initial_state = cfg.initial_state;
  if (cfg.settle_time) st.settle_time = *cfg.settle_time;
  if (cfg.section_var) st.section_var = *cfg.section_var;
  if (cfg.section_level) st.section_level = *cfg.section_level;

  pb.basis = pb.model.basis;
  if (cfg.harmonics) pb.basis.harmonics = *cfg.harmonics;
  if (cfg.subharmonic) pb.basis.subharmonic_exponent = *cfg.subharmonic;
  if (cfg.forcing_multiple) {
    if (!pb.basis.forcing_multiple) throw ConfigError("--p applies to forced models only");
    pb.basis.forcing_multiple = *cfg.forcing_multiple;
  }
  pb.phase = pb.model.phase;
  if (cfg.phase_var || cfg.phase_harmonic != 0) {
    if (pb.basis.forcing_multiple) throw ConfigError("forced models take no phase condition");
    PhaseSpec ph = pb.phase.value_or(PhaseSpec{});
    if (cfg.phase_var) ph.variable = *cfg.phase_var;
    ph.harmonic = cfg.phase_harmonic;
    pb.phase = ph;
  }
  pb.model.phase = pb.phase;
  pb.ls = assemble(pb.model.system, pb.basis, pb.phase);
  pb.var_names = pb.model.system.var_names;
  if (pb.var_names.size() != pb.basis.n_eq) {
    pb.var_names.clear();
    for (std::size_t i = 0; i < pb.basis.n_eq; ++i) pb.var_names.push_back("z" + std::to_string(i));
  }

  desc["model"] = cfg.model;
  desc["params"] = cfg.params;
  desc["basis"] = {{"H", pb.basis.harmonics},
                   {"K", pb.basis.subharmonic_exponent},
                   {"n_eq", pb.basis.n_eq},
                   {"p", pb.basis.forcing_multiple ? json(*pb.basis.forcing_multiple) : json(nullptr)}};
  desc["phase"] = pb.phase ? json{{"variable", pb.phase->variable}, {"harmonic", pb.phase->harmonic}} : json(nullptr);
  pb.description = desc;
  return pb;
}

/// Rebuilds the problem a branch file was computed on.
Problem problem_from_header(const json& header) {
  RunConfig cfg;
  try {
    cfg.model = header.at("model").get<std::string>();
    cfg.params = header.value("params", json::object());
    if (header.contains("system")) cfg.system = header["system"];
    if (cfg.model != "biochem") {
      const auto& b = header.at("basis");
      cfg.harmonics = b.at("H").get<int>();
      cfg.subharmonic = b.at("K").get<int>();
      if (!b.at("p").is_null()) cfg.forcing_multiple = b["p"].get<int>();
      if (!header.at("phase").is_null()) {
        cfg.phase_var = header["phase"].at("variable").get<std::size_t>();
        cfg.phase_harmonic = header["phase"].at("harmonic").get<int>();
      }
    }
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("branch header: ") + ex.what());
  }
  return resolve(cfg);
}

BranchFile load_branch(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open branch file '" + path + "'");
  return read_branch_jsonl(in);
}

// ---------------------------------------------------------------------------
// continue

struct Started {
  Eigen::VectorXd u;
  std::size_t pinned = 0;
  std::string mode;
  int iterations = 0;
  double residual = 0.0;
};

std::size_t parameter_pin(const LiftedSystem& ls) {
  return ls.forced() ? *ls.omega_index : *ls.lambda_index;
}

Started start_restart(const RunConfig& cfg, const Problem& pb) {
  const auto file = load_branch(cfg.restart);
  const auto source = problem_from_header(file.header);
  if (source.name != pb.name) throw ConfigError("restart file holds model '" + source.name + "', not '" + pb.name + "'");
  std::size_t index = file.records.size() - 1;
  if (cfg.restart_point) {
    if (*cfg.restart_point < 0 || static_cast<std::size_t>(*cfg.restart_point) >= file.records.size()) {
      throw ConfigError("restart point " + std::to_string(*cfg.restart_point) + " out of range");
    }
    index = static_cast<std::size_t>(*cfg.restart_point);
  } else if (cfg.restart_lambda) {
    double best = HUGE_VAL;
    for (std::size_t i = 0; i < file.records.size(); ++i) {
      const auto& u = file.records[i].u;
      const double d = std::abs(source.ls.lambda_of({u.data(), static_cast<std::size_t>(u.size())}) - *cfg.restart_lambda);
      if (d < best) {
        best = d;
        index = i;
      }
    }
  }
  const auto& rec = file.records[index];
  if (rec.u.size() != static_cast<Eigen::Index>(source.ls.n_unknown())) throw ConfigError("restart point has the wrong length");

  Eigen::VectorXd guess;
  const std::span<const double> us(rec.u.data(), static_cast<std::size_t>(rec.u.size()));
  if (pb.algebraic) {
    guess = rec.u;
  } else {
    const auto hv = embed(harmonic_part(source.ls, source.basis, us), pb.basis);
    const auto x = extended_point(pb.ls, hv, source.ls.lambda_of(us), source.ls.omega_of(us));
    guess = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  }
  Started s;
  s.mode = "restart";
  s.pinned = parameter_pin(pb.ls);
  const auto nc = newton_correct(pb.ls, guess, s.pinned, 1e-10);
  s.u = nc.u;
  s.iterations = nc.iterations;
  s.residual = nc.residual_norm;
  return s;
}

Started make_start(const RunConfig& cfg, const Problem& pb) {
  std::string mode = cfg.start;
  if (mode == "auto") {
    if (!cfg.restart.empty()) mode = "restart";
    else if (pb.algebraic) mode = "newton";
    else if (pb.basis.forcing_multiple) mode = "rest";
    else if (pb.model.hopf && !cfg.lambda0) mode = "hopf";
    else mode = "oracle";
  }
  if (mode == "restart") {
    if (cfg.restart.empty()) throw ConfigError("start mode 'restart' needs --restart FILE");
    return start_restart(cfg, pb);
  }
  Started s;
  s.mode = mode;
  if (pb.algebraic) {
    if (mode != "newton") throw ConfigError("biochem supports the 'newton' and 'restart' start modes");
    s.pinned = *pb.ls.lambda_index;
    const auto nc = newton_correct(pb.ls, pb.bio->lift(0.0, 0.0, cfg.lambda0.value_or(0.0)), s.pinned, 1e-12);
    s.u = nc.u;
    s.iterations = nc.iterations;
    s.residual = nc.residual_norm;
    return s;
  }

  StartPoint sp;
  const bool forced = pb.basis.forcing_multiple.has_value();
  const double p = forced ? *pb.basis.forcing_multiple : 1.0;
  if (mode == "oracle") {
    double parameter = pb.model.start.parameter;
    if (forced && cfg.omega0) parameter = p * *cfg.omega0;
    if (!forced && cfg.lambda0) parameter = *cfg.lambda0;
    if (forced && !cfg.omega0 && cfg.lambda0) parameter = *cfg.lambda0;
    sp = start_from_oracle(pb.model, pb.ls, pb.basis, parameter);
    s.pinned = parameter_pin(pb.ls);
  } else if (mode == "rest") {
    if (!forced) throw ConfigError("start mode 'rest' needs a forced model");
    double omega = cfg.omega0 ? *cfg.omega0 : pb.model.window_lo;
    if (!cfg.omega0 && cfg.lambda0) omega = *cfg.lambda0 / p;
    if (!std::isfinite(omega)) throw ConfigError("start mode 'rest' needs --omega0");
    sp = start_from_rest(pb.model, pb.ls, pb.basis, omega);
    s.pinned = parameter_pin(pb.ls);
  } else if (mode == "hopf") {
    if (forced) throw ConfigError("start mode 'hopf' needs an autonomous model");
    if (!pb.model.hopf) throw ConfigError("model '" + pb.name + "' has no Hopf search range");
    const auto h = locate_hopf(pb.model, *pb.model.hopf);
    sp = start_from_hopf(pb.model, pb.ls, pb.basis, h, cfg.amplitude);
    s.pinned = pb.basis.offset(pb.basis.fundamental_slot(), Phase::Cos) + pb.phase.value_or(PhaseSpec{}).variable;
  } else {
    throw ConfigError("start mode '" + mode + "' does not apply to model '" + pb.name + "'");
  }
  s.u = sp.u;
  s.iterations = sp.newton_iterations;
  s.residual = sp.residual_norm;
  return s;
}

int run_continue(const RunConfig& cfg, std::ostream& log) {
  const auto wall_start = std::chrono::steady_clock::now();
  if (cfg.window && cfg.omega_window) throw ConfigError("give either a lambda window or an omega window, not both");
  if (!(cfg.perturb >= 0.0)) throw ConfigError("perturbation magnitude must be non-negative");
  if (cfg.direction == 0.0) throw ConfigError("direction must be nonzero");

  const Problem pb = resolve(cfg);
  const LiftedSystem& ls = pb.ls;

  // Continuation window.
  std::optional<ParameterWindow> window;
  if (pb.algebraic) {
    const Window w = cfg.window.value_or(Window{-10.0, 150.0});
    window = ParameterWindow{*ls.lambda_index, w.lo, w.hi};
  } else if (cfg.omega_window) {
    window = ParameterWindow{*ls.omega_index, cfg.omega_window->lo, cfg.omega_window->hi};
  } else if (cfg.window) {
    if (ls.forced()) {
      const double p = ls.forcing_multiple;
      window = ParameterWindow{*ls.omega_index, cfg.window->lo / p, cfg.window->hi / p};
    } else {
      window = ParameterWindow{*ls.lambda_index, cfg.window->lo, cfg.window->hi};
    }
  } else if (std::isfinite(pb.model.window_lo) || std::isfinite(pb.model.window_hi)) {
    const std::size_t idx = pb.model.window_on_omega ? *ls.omega_index : *ls.lambda_index;
    window = ParameterWindow{idx, pb.model.window_lo, pb.model.window_hi};
  }

  Started start = make_start(cfg, pb);
  log << "model " << pb.name;
  if (!pb.algebraic) {
    log << "  H=" << pb.basis.harmonics << " K=" << pb.basis.subharmonic_exponent << " unknowns=" << ls.n_unknown();
  }
  log << "\nstart " << start.mode << ": " << start.iterations << " Newton iterations, residual "
      << format_double(start.residual) << "\n";

  LiftedSystem run_ls = ls;
  if (cfg.perturb > 0.0) {
    run_ls = perturb_and_switch(ls, cfg.perturb, cfg.anm.seed);
    const auto nc = newton_correct(run_ls, start.u, start.pinned, 1e-10);
    start.u = nc.u;
    log << "perturbed system (magnitude " << format_double(cfg.perturb) << ", seed " << cfg.anm.seed << "): "
        << nc.iterations << " Newton iterations\n";
  }

  const std::size_t coord =
      start.mode == "hopf" && !cfg.window && !cfg.omega_window ? start.pinned : (window ? window->index : start.pinned);
  const Eigen::VectorXd direction = axis_direction(run_ls, coord, cfg.direction);
  StopPredicate stop;
  if (!pb.algebraic && !pb.model.positive_vars.empty()) stop = positivity_stop(run_ls, pb.basis, pb.model.positive_vars);

  const Branch branch = continue_branch(run_ls, start.u, direction, cfg.anm, window, stop);
  const auto flags = detect_step_collapse(branch.amax_history(), cfg.collapse_window, cfg.collapse_fraction);
  const std::size_t fold_index = window ? window->index : (pb.algebraic ? *ls.lambda_index : parameter_pin(ls));
  const auto folds = fold_points(branch, fold_index);

  fs::create_directories(cfg.out_dir);
  const fs::path base = fs::path(cfg.out_dir) / cfg.prefix;
  const std::string csv_path = base.string() + ".csv";
  const std::string jsonl_path = base.string() + ".jsonl";
  const std::string summary_path = base.string() + "_summary.json";

  json header = pb.description;
  header["format"] = "qhbm-branch";
  header["version"] = 1;
  header["anm"] = {{"order", cfg.anm.order}, {"tolerance", cfg.anm.tolerance}, {"max_sections", cfg.anm.max_sections}};
  header["seed"] = cfg.anm.seed;
  header["perturbation"] = cfg.perturb;
  header["start"] = start.mode;
  header["var_names"] = pb.var_names;
  {
    std::ofstream out(csv_path);
    write_branch_csv(out, run_ls, pb.algebraic ? std::nullopt : std::optional<HarmonicBasis>(pb.basis), pb.var_names,
                     branch);
  }
  {
    std::ofstream out(jsonl_path);
    write_branch_jsonl(out, header, branch, cfg.series);
  }

  json summary = header;
  summary.erase("system");
  summary["format"] = "qhbm-summary";
  summary["start_newton_iterations"] = start.iterations;
  summary["start_residual"] = start.residual;
  summary["sections"] = branch.sections.size();
  summary["stop"] = to_string(branch.stop);
  summary["message"] = branch.message;
  int max_fact = 0;
  for (const auto& s : branch.sections) max_fact = std::max(max_fact, s.factorizations);
  summary["max_factorizations_per_section"] = max_fact;
  if (window) summary["window"] = {{"index", window->index}, {"lo", window->lo}, {"hi", window->hi}};
  json collapse = json::array();
  for (const auto& f : flags) collapse.push_back({{"section", f.section}, {"arclength", f.arclength}});
  summary["step_collapse"] = collapse;
  json fold_list = json::array();
  for (const auto& f : folds) {
    const std::span<const double> u(f.u.data(), static_cast<std::size_t>(f.u.size()));
    json item = {{"section", f.section + 1}, {"a", f.a}, {"lambda", run_ls.lambda_of(u)}};
    if (run_ls.omega_index) item["omega"] = run_ls.omega_of(u);
    fold_list.push_back(item);
  }
  summary["folds"] = fold_list;
  if (!branch.sections.empty()) {
    double lmin = HUGE_VAL, lmax = -HUGE_VAL, wmin = HUGE_VAL, wmax = -HUGE_VAL;
    for (const auto& u : branch.points()) {
      const std::span<const double> x(u.data(), static_cast<std::size_t>(u.size()));
      lmin = std::min(lmin, run_ls.lambda_of(x));
      lmax = std::max(lmax, run_ls.lambda_of(x));
      if (run_ls.omega_index) {
        wmin = std::min(wmin, run_ls.omega_of(x));
        wmax = std::max(wmax, run_ls.omega_of(x));
      }
    }
    summary["lambda_range"] = {lmin, lmax};
    if (run_ls.omega_index) summary["omega_range"] = {wmin, wmax};
  }
  summary["files"] = {{"csv", fs::path(csv_path).filename().string()},
                      {"jsonl", fs::path(jsonl_path).filename().string()}};
  {
    std::ofstream out(summary_path);
    out << summary.dump(2) << "\n";
  }

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  log << "sections " << branch.sections.size() << ", stop " << to_string(branch.stop);
  if (!branch.message.empty()) log << " (" << branch.message << ")";
  log << "\nfolds " << folds.size() << ", step-collapse flags " << flags.size() << "\n";
  log << "wrote " << csv_path << ", " << jsonl_path << ", " << summary_path << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "wall time %.3f s\n", wall);
  log << buf;
  return branch.sections.empty() ? kExitNumerical : kExitOk;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& ex) {
    err << "configuration error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& ex) {
    err << "configuration error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& ex) {
    err << "configuration error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const std::out_of_range& ex) {
    err << "configuration error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const json::exception& ex) {
    err << "configuration error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& ex) {
    err << "numerical failure: " << ex.what() << "\n";
    return kExitNumerical;
  }
}

// ---------------------------------------------------------------------------
// validate / orbit

std::vector<std::size_t> pick_points(std::size_t count, std::size_t samples) {
  std::vector<std::size_t> out;
  if (samples == 0 || samples >= count) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(i);
    return out;
  }
  if (samples == 1) return {0};
  for (std::size_t j = 0; j < samples; ++j) {
    const std::size_t i = j * (count - 1) / (samples - 1);
    if (out.empty() || out.back() != i) out.push_back(i);
  }
  return out;
}

/// Largest amplitude of the state variables on even multiples of the fundamental.
double even_harmonic_max(const HarmonicVector& hv, const std::vector<std::size_t>& vars) {
  const auto& b = hv.basis();
  double worst = 0.0;
  for (int k = 2 * b.fundamental_slot(); k <= b.harmonics; k += 2 * b.fundamental_slot()) {
    for (auto v : vars) worst = std::max(worst, hv.amplitude(v, k));
  }
  return worst;
}

int run_validate(const std::string& branch_path, std::size_t samples, const std::string& out_path,
                 std::optional<double> max_error, std::ostream& log) {
  const auto file = load_branch(branch_path);
  const auto pb = problem_from_header(file.header);
  std::ostringstream table;
  double worst = 0.0;
  double worst_even = 0.0;
  if (pb.algebraic) {
    table << "point,section,lambda,original_residual\n";
    for (auto i : pick_points(file.records.size(), samples)) {
      const auto& u = file.records[i].u;
      const auto r = pb.bio->original_residual(u[0], u[1], u[6]);
      const double e = std::hypot(r[0], r[1]);
      worst = std::max(worst, e);
      table << i << "," << file.records[i].section << "," << format_double(u[6]) << "," << format_double(e) << "\n";
    }
    log << "points " << file.records.size() << ", max original residual " << format_double(worst) << "\n";
  } else {
    if (!pb.model.original.rhs) throw ConfigError("model '" + pb.name + "' has no time-domain dynamics to validate against");
    std::vector<std::size_t> state_vars = pb.model.original.state_indices;
    if (state_vars.empty()) {
      for (std::size_t i = 0; i < pb.basis.n_eq; ++i) state_vars.push_back(i);
    }
    table << "point,section,lambda,omega,periodicity_error,even_harmonic_max\n";
    for (auto i : pick_points(file.records.size(), samples)) {
      const auto& u = file.records[i].u;
      if (u.size() != static_cast<Eigen::Index>(pb.ls.n_unknown())) throw ConfigError("branch point has the wrong length");
      const std::span<const double> x(u.data(), static_cast<std::size_t>(u.size()));
      const auto hv = harmonic_part(pb.ls, pb.basis, x);
      const double omega = pb.ls.omega_of(x);
      const double lambda = pb.ls.lambda_of(x);
      const double e = periodicity_error(pb.model.original, hv, omega, lambda);
      const double even = even_harmonic_max(hv, state_vars);
      worst = std::max(worst, e);
      worst_even = std::max(worst_even, even);
      table << i << "," << file.records[i].section << "," << format_double(lambda) << "," << format_double(omega) << ","
            << format_double(e) << "," << format_double(even) << "\n";
    }
    log << "points " << file.records.size() << ", max periodicity error " << format_double(worst)
        << ", max even-harmonic amplitude " << format_double(worst_even) << "\n";
  }
  if (out_path.empty()) {
    std::cout << table.str();
  } else {
    std::ofstream out(out_path);
    out << table.str();
  }
  if (max_error && worst > *max_error) {
    log << "error exceeds " << format_double(*max_error) << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int run_orbit(const std::string& branch_path, int point, int samples, const std::string& out_path) {
  if (samples < 1) throw ConfigError("orbit needs at least one sample");
  const auto file = load_branch(branch_path);
  const auto pb = problem_from_header(file.header);
  if (pb.algebraic) throw ConfigError("model '" + pb.name + "' has no periodic orbit");
  if (point < 0 || static_cast<std::size_t>(point) >= file.records.size()) {
    throw ConfigError("point index " + std::to_string(point) + " out of range [0, " +
                      std::to_string(file.records.size()) + ")");
  }
  const auto& u = file.records[static_cast<std::size_t>(point)].u;
  if (u.size() != static_cast<Eigen::Index>(pb.ls.n_unknown())) throw ConfigError("branch point has the wrong length");
  const std::span<const double> x(u.data(), static_cast<std::size_t>(u.size()));
  const auto hv = harmonic_part(pb.ls, pb.basis, x);
  const double omega = pb.ls.omega_of(x);
  const double period = 2.0 * std::numbers::pi * pb.basis.grid_divisor() / omega;

  std::ostringstream table;
  table << "t";
  for (const auto& n : pb.var_names) table << "," << n;
  table << "\n";
  for (int j = 0; j < samples; ++j) {
    const double t = period * j / samples;
    table << format_double(t);
    for (double z : synthesize(hv, omega, t)) table << "," << format_double(z);
    table << "\n";
  }
  if (out_path.empty()) {
    std::cout << table.str();
  } else {
    std::ofstream out(out_path);
    out << table.str();
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// selftest

bool report(const char* name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << "  " << detail << "\n";
  return ok;
}

int run_selftest() {
  bool all = true;

  {
    // Assembled residual against the projection of the time-domain residual.
    const Model m = vdp();
    const HarmonicBasis b{4, m.system.n_eq, 0, std::nullopt};
    const auto ls = assemble(m.system, b, m.phase);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    HarmonicVector hv(b);
    for (auto& v : hv.data()) v = dist(rng);
    const double lambda = 0.7, omega = 1.3;
    const auto x = extended_point(ls, hv, lambda, omega);
    const auto r = residual(ls, x);
    const auto proj = dft_project(
        [&](double t) {
          const auto z = synthesize(hv, omega, t);
          const auto zd = synthesize_rate(hv, omega, t);
          return eval_residual_time(m.system, z, zd, lambda, t);
        },
        0.0, 2.0 * std::numbers::pi / omega, b);
    double diff = 0.0;
    for (std::size_t i = 0; i < b.dof(); ++i) {
      if (ls.phase_row && i == *ls.phase_row) continue;
      diff = std::max(diff, std::abs(r[i] + proj.coefficients.data()[i]));
    }
    all &= report("operator-projection", diff < 1e-10, "max diff " + format_double(diff));
  }
  {
    auto ls = make_algebraic_system(1);
    ls.constant[0] = -1.0;
    ls.quadratic.push_back({0, 0, 0, 1.0});
    ls.quadratic.push_back({0, 1, 1, 1.0});
    AnmSettings s;
    s.order = 2;
    Eigen::VectorXd u0(2);
    u0 << 1.0, 0.0;
    const auto sec = compute_section(ls, u0, Eigen::Vector2d(0.0, 1.0), s);
    const double expected = std::pow(4.0 * s.tolerance, 0.25);
    const bool ok = sec.a_max <= expected * (1 + 1e-12) && sec.a_max >= expected / 2.0;
    all &= report("circle-range", ok, "a_max " + format_double(sec.a_max) + " vs " + format_double(expected));
  }
  {
    const Model m = vdp();
    const auto ls = assemble(m.system, m.basis, m.phase);
    const auto sp = start_from_oracle(m, ls, m.basis, 1.0);
    const auto hv = harmonic_part(ls, m.basis, {sp.u.data(), static_cast<std::size_t>(sp.u.size())});
    const double a1 = hv.amplitude(0, 1);
    all &= report("vdp-start", std::abs(a1 - 2.0) < 0.05 && sp.residual_norm < 1e-9, "A1 " + format_double(a1));
  }
  return all ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qhbm: continuation of periodic solutions by harmonic balance and power series"};
  app.require_subcommand(1);

  RunFlags cont_flags;
  auto* cont = app.add_subcommand("continue", "Compute a branch and export CSV, JSONL and a summary");
  cont_flags.attach(cont);

  RunFlags sweep_flags;
  std::vector<std::string> sweep_runs;
  std::vector<int> sweep_h;
  unsigned sweep_threads = 0;
  auto* sweep = app.add_subcommand("sweep", "Run several independent continuations on worker threads");
  sweep_flags.attach(sweep);
  sweep->add_option("--runs", sweep_runs, "Per-run TOML files layered on top of --config")->delimiter(',');
  sweep->add_option("--H-list", sweep_h, "Harmonic counts to run")->delimiter(',');
  sweep->add_option("--threads", sweep_threads, "Worker threads (default: hardware concurrency)");

  std::string val_branch, val_out;
  std::size_t val_samples = 0;
  double val_max = 0.0;
  auto* val = app.add_subcommand("validate", "Check branch points against time integration");
  val->add_option("branch", val_branch, "Branch JSONL file")->required();
  val->add_option("--samples", val_samples, "Number of evenly spaced points to check (0: all)");
  val->add_option("--out", val_out, "CSV output file (default: stdout)");
  auto* val_max_opt = val->add_option("--max-error", val_max, "Exit with status 1 above this error");

  std::string orb_branch, orb_out;
  int orb_point = 0;
  int orb_samples = 256;
  auto* orb = app.add_subcommand("orbit", "Time series of a branch point over one period");
  orb->add_option("branch", orb_branch, "Branch JSONL file")->required();
  orb->add_option("--point", orb_point, "Point index")->required();
  orb->add_option("--samples", orb_samples, "Samples per period");
  orb->add_option("--out", orb_out, "CSV output file (default: stdout)");

  auto* self = app.add_subcommand("selftest", "Quick internal consistency checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (cont->parsed()) {
    return guarded(std::cerr, [&] { return run_continue(build_config(cont_flags), std::cout); });
  }
  if (sweep->parsed()) {
    return guarded(std::cerr, [&] {
      struct Job {
        RunConfig cfg;
        std::string log;
        int code = kExitOk;
      };
      std::vector<Job> jobs;
      std::vector<std::string> runs = sweep_runs.empty() ? std::vector<std::string>{""} : sweep_runs;
      for (const auto& run : runs) {
        std::vector<std::string> extra;
        if (!run.empty()) extra.push_back(run);
        const RunConfig base = build_config(sweep_flags, extra);
        std::string stem = run.empty() ? base.prefix : base.prefix + "_" + fs::path(run).stem().string();
        if (sweep_h.empty()) {
          jobs.push_back({base, {}, kExitOk});
          jobs.back().cfg.prefix = stem;
        }
        for (int h : sweep_h) {
          if (h < 1) throw ConfigError("--H-list entries must be positive");
          Job j{base, {}, kExitOk};
          j.cfg.harmonics = h;
          j.cfg.prefix = stem + "_H" + std::to_string(h);
          jobs.push_back(std::move(j));
        }
      }
      const unsigned threads =
          std::max(1u, std::min<unsigned>(sweep_threads ? sweep_threads : std::thread::hardware_concurrency(),
                                          static_cast<unsigned>(jobs.size())));
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
          for (std::size_t i = next++; i < jobs.size(); i = next++) {
            std::ostringstream log;
            jobs[i].code = guarded(log, [&] { return run_continue(jobs[i].cfg, log); });
            jobs[i].log = log.str();
          }
        });
      }
      for (auto& th : pool) th.join();
      int code = kExitOk;
      for (const auto& j : jobs) {
        std::cout << "== " << j.cfg.prefix << " (exit " << j.code << ")\n" << j.log;
        code = std::max(code, j.code);
      }
      return code;
    });
  }
  if (val->parsed()) {
    return guarded(std::cerr, [&] {
      return run_validate(val_branch, val_samples, val_out,
                          val_max_opt->count() ? std::optional<double>(val_max) : std::nullopt, std::cerr);
    });
  }
  if (orb->parsed()) {
    return guarded(std::cerr, [&] { return run_orbit(orb_branch, orb_point, orb_samples, orb_out); });
  }
  if (self->parsed()) {
    return guarded(std::cerr, [&] { return run_selftest(); });
  }
  return kExitConfig;
}
