#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "fockfb/analysis.hpp"
#include "fockfb/simulator.hpp"

namespace fockfb {

using json = nlohmann::json;

namespace detail {

/// Coefficients beta^n / sqrt(n!) on n = offset (mod period), with beta chosen
/// so the mean photon number equals nbar.
inline Ket cat_state(int dim, int period, int offset, double nbar) {
  auto build = [&](double beta) {
    std::vector<std::pair<int, cplx>> terms;
    double log_c = 0.0;
    for (int n = 0; n < dim; ++n) {
      if (n > 0) log_c += std::log(beta) - 0.5 * std::log(static_cast<double>(n));
      if (n % period == offset) terms.emplace_back(n, std::exp(log_c));
    }
    return Ket::superposition(dim, terms);
  };
  double lo = 1e-3, hi = std::sqrt(static_cast<double>(dim));
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_photon(build(mid)) < nbar ? lo : hi) = mid;
  }
  return build(0.5 * (lo + hi));
}

inline int parse_int(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("cannot parse " + what + " from '" + s + "'");
  }
  if (pos != s.size()) throw ConfigError("cannot parse " + what + " from '" + s + "'");
  return v;
}

}  // namespace detail

/// Named targets: "two-comp" ((|1> + |4>)/sqrt2), "two-comp:a,b",
/// "fock:n", "binomial-0369", "cat3" and "cat4" (mean photon number 3).
inline Ket preset_state(const std::string& name, int dim) {
  auto need = [&](int n) {
    if (n < 0 || n >= dim) throw ConfigError("preset '" + name + "' does not fit in dimension " + std::to_string(dim));
  };
  if (name == "two-comp") {
    need(4);
    return Ket::superposition(dim, {{1, 1.0}, {4, 1.0}});
  }
  if (name.rfind("two-comp:", 0) == 0) {
    const std::string rest = name.substr(9);
    const auto comma = rest.find(',');
    if (comma == std::string::npos) throw ConfigError("two-comp preset needs 'two-comp:a,b'");
    const int a = detail::parse_int(rest.substr(0, comma), "level");
    const int b = detail::parse_int(rest.substr(comma + 1), "level");
    need(a);
    need(b);
    if (a == b) throw ConfigError("two-comp levels must differ");
    return Ket::superposition(dim, {{a, 1.0}, {b, 1.0}});
  }
  if (name.rfind("fock:", 0) == 0) {
    const int n = detail::parse_int(name.substr(5), "level");
    need(n);
    return Ket::fock(dim, n);
  }
  if (name == "binomial-0369") {
    need(9);
    return Ket::superposition(dim, {{0, std::sqrt(1.0 / 8)}, {3, std::sqrt(3.0 / 8)}, {6, std::sqrt(3.0 / 8)},
                                    {9, std::sqrt(1.0 / 8)}});
  }
  if (name == "cat3") return detail::cat_state(dim, 3, 0, 3.0);
  if (name == "cat4") return detail::cat_state(dim, 4, 1, 3.0);
  throw ConfigError("unknown target preset '" + name + "'");
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"two-comp", "fock:1", "binomial-0369", "cat3", "cat4"};
  return names;
}

/// Spacing implied by a target: gcd of the differences between populated
/// levels. A single-level target gets max(2, n + 1).
inline int infer_delta_n(const Ket& target) {
  const auto sup = target.support(1e-12);
  if (sup.empty()) throw ConfigError("target has no populated level");
  if (sup.size() == 1) return std::max(2, sup[0] + 1);
  int g = 0;
  for (std::size_t i = 1; i < sup.size(); ++i) g = std::gcd(g, sup[i] - sup[0]);
  return g;
}

struct TargetSpec {
  /// Preset name, used when coefficients is empty.
  std::string preset = "two-comp";
  /// (level, re, im) triples, normalized on construction.
  std::vector<std::tuple<int, double, double>> coefficients;

  bool operator==(const TargetSpec&) const = default;
};

struct ControllerSpec {
  std::string kind = "lyapunov";
  double alpha_max = 0.3;
  std::string weights;
  std::vector<std::pair<double, double>> script;

  bool operator==(const ControllerSpec&) const = default;
};

/// Whole-experiment description. Section names match the JSON layout.
struct ExperimentConfig {
  int dim = 30;
  TargetSpec target;
  /// Unset ("auto" in JSON) derives the value from the target.
  std::optional<int> delta_n;
  std::optional<int> target_m;
  std::string parity = "auto";
  bool noise_enabled = false;
  /// 0 means no decay.
  double t_cav = 0.0;
  double t_cycle = 1e-6;
  double eta_e_given_g = 0.0;
  double eta_g_given_e = 0.0;
  double eps_probe = 0.0;
  int max_cycles = 50;
  std::vector<int> guard_levels;
  double guard_threshold = 0.02;
  bool pre_adjust = true;
  /// Preset name of the starting state; empty means the coherent guess.
  std::string initial;
  ControllerSpec controller;
  std::size_t n_traj = 600;
  std::uint64_t seed = 0;
  int tree_depth = 10;
  std::vector<double> sweep_ratios = {0.0, 1e-4, 3e-4, 1e-3};
  std::vector<double> sweep_eps = {0.0, 0.01, 0.05};
  std::size_t sweep_n_traj = 100;
  std::string out_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;
};

inline void to_json(json& j, const ExperimentConfig& c) {
  json coeffs = json::array();
  for (const auto& [n, re, im] : c.target.coefficients) coeffs.push_back({n, re, im});
  json script = json::array();
  for (const auto& [re, im] : c.controller.script) script.push_back({re, im});
  j = json{
      {"space", {{"dim", c.dim}}},
      {"target", {{"preset", c.target.preset}, {"coefficients", coeffs}}},
      {"measurement",
       {{"delta_n", c.delta_n ? json(*c.delta_n) : json("auto")},
        {"target_m", c.target_m ? json(*c.target_m) : json("auto")},
        {"parity", c.parity}}},
      {"noise",
       {{"enabled", c.noise_enabled},
        {"t_cav", c.t_cav},
        {"t_cycle", c.t_cycle},
        {"eta_e_given_g", c.eta_e_given_g},
        {"eta_g_given_e", c.eta_g_given_e},
        {"eps_probe", c.eps_probe}}},
      {"episode",
       {{"max_cycles", c.max_cycles},
        {"guard_levels", c.guard_levels},
        {"guard_threshold", c.guard_threshold},
        {"pre_adjust", c.pre_adjust},
        {"initial", c.initial}}},
      {"controller",
       {{"kind", c.controller.kind},
        {"alpha_max", c.controller.alpha_max},
        {"weights", c.controller.weights},
        {"script", script}}},
      {"batch", {{"n_traj", c.n_traj}, {"seed", c.seed}}},
      {"tree", {{"depth", c.tree_depth}}},
      {"sweep", {{"ratios", c.sweep_ratios}, {"eps_probes", c.sweep_eps}, {"n_traj", c.sweep_n_traj}}},
      {"output", {{"dir", c.out_dir}}},
  };
}

namespace detail {

/// Reads `key` of `section` into `dst` when present; unknown keys are errors.
class SectionReader {
 public:
  SectionReader(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    sec_ = &root.at(name);
    if (!sec_->is_object()) throw ConfigError("section '" + name + "' must be an object");
  }
  ~SectionReader() noexcept(false) {
    if (!sec_ || std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : sec_->items())
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end())
        throw ConfigError("unknown key '" + name_ + "." + k + "'");
  }
  template <class T>
  void get(const std::string& key, T& dst) {
    seen_.push_back(key);
    if (!sec_ || !sec_->contains(key)) return;
    try {
      dst = sec_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + name_ + "." + key + "': " + e.what());
    }
  }
  /// Integer or the string "auto" (stored as nullopt).
  void get_auto_int(const std::string& key, std::optional<int>& dst) {
    seen_.push_back(key);
    if (!sec_ || !sec_->contains(key)) return;
    const json& v = sec_->at(key);
    if (v.is_string() && v.get<std::string>() == "auto")
      dst.reset();
    else if (v.is_number_integer())
      dst = v.get<int>();
    else
      throw ConfigError("'" + name_ + "." + key + "' must be an integer or \"auto\"");
  }

 private:
  std::string name_;
  const json* sec_ = nullptr;
  std::vector<std::string> seen_;
};

}  // namespace detail

inline void from_json(const json& j, ExperimentConfig& c) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  static const std::vector<std::string> sections = {"space", "target",     "measurement", "noise", "episode",
                                                    "controller", "batch", "tree",        "sweep", "output"};
  for (const auto& [k, v] : j.items())
    if (std::find(sections.begin(), sections.end(), k) == sections.end())
      throw ConfigError("unknown section '" + k + "'");
  {
    detail::SectionReader r(j, "space");
    r.get("dim", c.dim);
  }
  {
    detail::SectionReader r(j, "target");
    r.get("preset", c.target.preset);
    std::vector<std::vector<double>> raw;
    bool had = j.contains("target") && j["target"].contains("coefficients");
    r.get("coefficients", raw);
    if (had) {
      c.target.coefficients.clear();
      for (const auto& t : raw) {
        if (t.size() < 2 || t.size() > 3) throw ConfigError("target.coefficients entries are [n, re] or [n, re, im]");
        if (t[0] != std::floor(t[0])) throw ConfigError("target.coefficients level must be an integer");
        c.target.coefficients.emplace_back(static_cast<int>(t[0]), t[1], t.size() == 3 ? t[2] : 0.0);
      }
    }
  }
  {
    detail::SectionReader r(j, "measurement");
    r.get_auto_int("delta_n", c.delta_n);
    r.get_auto_int("target_m", c.target_m);
    r.get("parity", c.parity);
  }
  {
    detail::SectionReader r(j, "noise");
    r.get("enabled", c.noise_enabled);
    r.get("t_cav", c.t_cav);
    r.get("t_cycle", c.t_cycle);
    r.get("eta_e_given_g", c.eta_e_given_g);
    r.get("eta_g_given_e", c.eta_g_given_e);
    r.get("eps_probe", c.eps_probe);
  }
  {
    detail::SectionReader r(j, "episode");
    r.get("max_cycles", c.max_cycles);
    r.get("guard_levels", c.guard_levels);
    r.get("guard_threshold", c.guard_threshold);
    r.get("pre_adjust", c.pre_adjust);
    r.get("initial", c.initial);
  }
  {
    detail::SectionReader r(j, "controller");
    r.get("kind", c.controller.kind);
    r.get("alpha_max", c.controller.alpha_max);
    r.get("weights", c.controller.weights);
    std::vector<std::vector<double>> raw;
    bool had = j.contains("controller") && j["controller"].contains("script");
    r.get("script", raw);
    if (had) {
      c.controller.script.clear();
      for (const auto& t : raw) {
        if (t.size() != 2) throw ConfigError("controller.script entries are [re, im]");
        c.controller.script.emplace_back(t[0], t[1]);
      }
    }
  }
  {
    detail::SectionReader r(j, "batch");
    r.get("n_traj", c.n_traj);
    r.get("seed", c.seed);
  }
  {
    detail::SectionReader r(j, "tree");
    r.get("depth", c.tree_depth);
  }
  {
    detail::SectionReader r(j, "sweep");
    r.get("ratios", c.sweep_ratios);
    r.get("eps_probes", c.sweep_eps);
    r.get("n_traj", c.sweep_n_traj);
  }
  {
    detail::SectionReader r(j, "output");
    r.get("dir", c.out_dir);
  }
}

/// Sets a dotted path such as "episode.max_cycles" from "key=value". The value
/// is parsed as JSON and taken as a plain string when that fails.
inline void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override path '" + path + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    if (!node->is_object()) throw ConfigError("override path '" + path + "' crosses a non-object");
    start = dot + 1;
  }
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(j, o);
  return j.get<ExperimentConfig>();
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

/// First 16 hex digits of the SHA-256 of the canonical JSON, leaving out the
/// output section, which does not affect any number.
inline std::string config_hash(const ExperimentConfig& c) {
  json j = c;
  j.erase("output");
  return sha256_hex(j.dump()).substr(0, 16);
}

inline Ket build_target(const ExperimentConfig& c) {
  if (c.dim < 2) throw ConfigError("space.dim must be >= 2");
  if (c.target.coefficients.empty()) return preset_state(c.target.preset, c.dim);
  std::vector<std::pair<int, cplx>> terms;
  for (const auto& [n, re, im] : c.target.coefficients) {
    if (n < 0 || n >= c.dim) throw ConfigError("target level " + std::to_string(n) + " outside space");
    terms.emplace_back(n, cplx(re, im));
  }
  try {
    return Ket::superposition(c.dim, terms);
  } catch (const NumericalFailure&) {
    throw ConfigError("target coefficients are all zero");
  }
}

inline MeasurementSetup build_measurement(const ExperimentConfig& c, const Ket& target) {
  const int dn = c.delta_n ? *c.delta_n : infer_delta_n(target);
  if (dn < 1) throw ConfigError("measurement.delta_n must be >= 1");
  const int m = c.target_m ? *c.target_m : target.support(1e-12).front() % dn;
  std::optional<Parity> parity;
  if (c.parity == "odd")
    parity = Parity::odd;
  else if (c.parity == "even")
    parity = Parity::even;
  else if (c.parity != "auto")
    throw ConfigError("measurement.parity must be auto, odd or even");
  try {
    return build_setup(dn, m, parity);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

inline std::optional<NoiseParams> build_noise(const ExperimentConfig& c) {
  if (!c.noise_enabled) return std::nullopt;
  NoiseParams n;
  n.t_cav = c.t_cav > 0.0 ? c.t_cav : std::numeric_limits<double>::infinity();
  n.t_cycle = c.t_cycle;
  n.eta_e_given_g = c.eta_e_given_g;
  n.eta_g_given_e = c.eta_g_given_e;
  n.eps_probe = c.eps_probe;
  try {
    n.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return n;
}

inline EpisodeConfig build_episode(const ExperimentConfig& c) {
  EpisodeConfig e;
  e.space = FockSpace(c.dim);
  e.target = build_target(c);
  e.setup = build_measurement(c, e.target);
  e.noise = build_noise(c);
  e.max_cycles = c.max_cycles;
  e.guard_levels = c.guard_levels;
  e.guard_threshold = c.guard_threshold;
  e.seed = c.seed;
  e.pre_adjust = c.pre_adjust;
  if (!c.initial.empty()) e.initial_state = preset_state(c.initial, c.dim);
  try {
    e.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  return e;
}

inline std::unique_ptr<Controller> build_controller(const ExperimentConfig& c, const EpisodeConfig& e) {
  const std::string& k = c.controller.kind;
  if (k == "zero") return std::make_unique<ZeroController>();
  if (k == "lyapunov") {
    if (!(c.controller.alpha_max > 0.0)) throw ConfigError("controller.alpha_max must be > 0");
    return std::make_unique<LyapunovController>(e.target, e.space, c.controller.alpha_max,
                                                build_ops(e.setup, e.space));
  }
  if (k == "scripted") {
    std::vector<cplx> script;
    for (const auto& [re, im] : c.controller.script) script.emplace_back(re, im);
    return std::make_unique<ScriptedController>(std::move(script));
  }
  if (k == "policy") {
    if (c.controller.weights.empty()) throw ConfigError("controller.weights is required for kind=policy");
    PolicyNet net = load_policy(c.controller.weights);
    const bool complex_mode = needs_complex_mode(e.target);
    const int expected_in = complex_mode ? 2 * e.space.dim() * e.space.dim() : e.space.dim() * e.space.dim();
    if (net.input_width() != expected_in)
      throw ShapeMismatch("policy input width " + std::to_string(net.input_width()) + " does not match observation length " +
                          std::to_string(expected_in));
    return std::make_unique<PolicyController>(std::move(net), complex_mode);
  }
  throw ConfigError("controller.kind must be lyapunov, zero, scripted or policy");
}

}  // namespace fockfb
