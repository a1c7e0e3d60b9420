#include "cloak/runner.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/LU>

#include "cloak/errors.hpp"
#include "cloak/fem2d.hpp"
#include "cloak/numerics.hpp"
#include "cloak/radial_dtn.hpp"
#include "cloak/random.hpp"
#include "cloak/transform.hpp"
#include "cloak/wos.hpp"

#ifndef CLOAK_VERSION
#define CLOAK_VERSION "0.0.0"
#endif

namespace cloak {

using nlohmann::json;

const char* tool_version() { return CLOAK_VERSION; }

namespace {

constexpr std::pair<Experiment, const char*> kExperimentNames[] = {
    {Experiment::RadialSpectrum, "RadialSpectrum"},
    {Experiment::SpectrumCompare, "SpectrumCompare"},
    {Experiment::NearCloakSweep, "NearCloakSweep"},
    {Experiment::InteriorInvisibility, "InteriorInvisibility"},
    {Experiment::FemInvariance, "FemInvariance"},
    {Experiment::WosHitting, "WosHitting"},
    {Experiment::WosKakutani, "WosKakutani"},
    {Experiment::PushforwardCheck, "PushforwardCheck"},
};

}  // namespace

std::string to_string(Experiment e) {
  for (const auto& [k, name] : kExperimentNames)
    if (k == e) return name;
  return "Unknown";
}

Experiment experiment_from_string(const std::string& s) {
  for (const auto& [k, name] : kExperimentNames)
    if (s == name) return k;
  fail(ErrorKind::ConfigInvalid, "experiment: unknown experiment '" + s + "'");
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "Pass";
    case Verdict::Fail: return "Fail";
    case Verdict::Informational: return "Informational";
  }
  return "Informational";
}

Verdict verdict_from_string(const std::string& s) {
  if (s == "Pass") return Verdict::Pass;
  if (s == "Fail") return Verdict::Fail;
  if (s == "Informational") return Verdict::Informational;
  fail(ErrorKind::ParseError, "unknown verdict '" + s + "'");
}

Format format_from_string(const std::string& s) {
  if (s == "csv") return Format::Csv;
  if (s == "json") return Format::Json;
  if (s == "text") return Format::Text;
  fail(ErrorKind::InvalidArgument, "format must be csv, json or text");
}

// ---------------------------------------------------------------------------

ScenarioConfig ScenarioConfig::from_json(const json& j, std::filesystem::path base_dir) {
  if (!j.is_object()) fail(ErrorKind::ConfigInvalid, "config: must be an object");
  for (const auto& [key, _] : j.items())
    if (key != "experiment" && key != "parameters" && key != "output_path" && key != "$schema")
      fail(ErrorKind::ConfigInvalid, key + ": unknown top-level field");
  if (!j.contains("experiment") || !j["experiment"].is_string())
    fail(ErrorKind::ConfigInvalid, "experiment: required string");
  ScenarioConfig c;
  c.experiment = experiment_from_string(j["experiment"].get<std::string>());
  if (j.contains("parameters")) {
    if (!j["parameters"].is_object()) fail(ErrorKind::ConfigInvalid, "parameters: must be an object");
    c.parameters = j["parameters"];
  }
  if (j.contains("output_path")) {
    if (!j["output_path"].is_string()) fail(ErrorKind::ConfigInvalid, "output_path: must be a string");
    c.output_path = j["output_path"].get<std::string>();
  }
  c.base_dir = std::move(base_dir);
  return c;
}

namespace {

json read_json_file(const std::filesystem::path& path, ErrorKind parse_kind) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(parse_kind, path.string() + ": " + e.what());
  }
}

}  // namespace

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path, ErrorKind::ConfigInvalid), path.parent_path());
}

json ScenarioConfig::to_json() const {
  json j{{"experiment", to_string(experiment)}, {"parameters", parameters}};
  if (!output_path.empty()) j["output_path"] = output_path;
  return j;
}

json RunReport::to_json(bool include_timing) const {
  json tabs = json::array();
  for (const auto& t : tables) {
    json rows = json::array();
    for (const auto& r : t.rows) rows.push_back(r);
    tabs.push_back({{"name", t.name}, {"columns", t.columns}, {"rows", rows}});
  }
  json j{{"tool_version", tool_version},
         {"experiment", to_string(experiment)},
         {"config", config},
         {"verdict", to_string(verdict)},
         {"summary", summary},
         {"tables", tabs}};
  if (include_timing && wall_time) j["wall_time"] = *wall_time;
  return j;
}

RunReport RunReport::from_json(const json& j) {
  RunReport r;
  try {
    r.tool_version = j.at("tool_version").get<std::string>();
    r.experiment = experiment_from_string(j.at("experiment").get<std::string>());
    r.config = j.at("config");
    r.verdict = verdict_from_string(j.at("verdict").get<std::string>());
    r.summary = j.at("summary");
    for (const auto& t : j.at("tables")) {
      Table tab;
      tab.name = t.at("name").get<std::string>();
      tab.columns = t.at("columns").get<std::vector<std::string>>();
      for (const auto& row : t.at("rows")) tab.rows.push_back(row.get<std::vector<json>>());
      r.tables.push_back(std::move(tab));
    }
    if (j.contains("wall_time")) r.wall_time = j["wall_time"].get<double>();
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("report: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Parameter access with field paths in every error.

namespace {

class Params {
 public:
  Params(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) fail(ErrorKind::ConfigInvalid, prefix_ + ": must be an object");
  }

  [[noreturn]] void bad(const std::string& key, const std::string& msg) const {
    fail(ErrorKind::ConfigInvalid, path(key) + ": " + msg);
  }
  std::string path(const std::string& key) const { return prefix_ + "." + key; }

  void allow_only(std::initializer_list<const char*> keys) const {
    for (const auto& [k, _] : j_.items())
      if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
        bad(k, "unknown parameter");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& raw(const std::string& key) const {
    if (!has(key)) bad(key, "required");
    return j_[key];
  }

  double number(const std::string& key, std::optional<double> def = std::nullopt) const {
    if (!has(key)) {
      if (def) return *def;
      bad(key, "required number");
    }
    if (!j_[key].is_number()) bad(key, "must be a number");
    const double v = j_[key].get<double>();
    if (!std::isfinite(v)) bad(key, "must be finite");
    return v;
  }

  double positive(const std::string& key, std::optional<double> def = std::nullopt) const {
    const double v = number(key, def);
    if (!(v > 0.0)) bad(key, "must be positive");
    return v;
  }

  long integer(const std::string& key, std::optional<long> def, long lo, long hi) const {
    if (!has(key)) {
      if (def) return *def;
      bad(key, "required integer");
    }
    if (!j_[key].is_number_integer()) bad(key, "must be an integer");
    const long v = j_[key].get<long>();
    if (v < lo || v > hi)
      bad(key, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return v;
  }

  std::vector<double> numbers(const std::string& key,
                              std::optional<std::vector<double>> def = std::nullopt) const {
    if (!has(key)) {
      if (def) return *def;
      bad(key, "required array of numbers");
    }
    const json& a = j_[key];
    if (!a.is_array() || a.empty()) bad(key, "must be a non-empty array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!a[i].is_number()) bad(key + "[" + std::to_string(i) + "]", "must be a number");
      out.push_back(a[i].get<double>());
    }
    return out;
  }

  std::vector<int> integers(const std::string& key, std::vector<int> def, int lo, int hi) const {
    if (!has(key)) return def;
    const json& a = j_[key];
    if (!a.is_array() || a.empty()) bad(key, "must be a non-empty array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::string k = key + "[" + std::to_string(i) + "]";
      if (!a[i].is_number_integer()) bad(k, "must be an integer");
      const int v = a[i].get<int>();
      if (v < lo || v > hi)
        bad(k, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
      out.push_back(v);
    }
    return out;
  }

  std::string text(const std::string& key, std::string def) const {
    if (!has(key)) return def;
    if (!j_[key].is_string()) bad(key, "must be a string");
    return j_[key].get<std::string>();
  }

  bool flag(const std::string& key, bool def) const {
    if (!has(key)) return def;
    if (!j_[key].is_boolean()) bad(key, "must be a boolean");
    return j_[key].get<bool>();
  }

  Vec point(const std::string& key, std::optional<std::vector<double>> def = std::nullopt) const {
    const auto v = numbers(key, std::move(def));
    if (v.size() != 2 && v.size() != 3) bad(key, "must have 2 or 3 coordinates");
    Vec p(static_cast<int>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) p[static_cast<int>(i)] = v[i];
    return p;
  }

  Params sub(const std::string& key) const { return Params(raw(key), path(key)); }

 private:
  const json& j_;
  std::string prefix_;
};

/// Module errors raised while interpreting a config fragment become
/// ConfigInvalid errors carrying the fragment's path.
template <class Fn>
auto with_path(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigInvalid || e.kind() == ErrorKind::ParseError ||
        e.kind() == ErrorKind::InvalidArgument || e.kind() == ErrorKind::InvalidEpsilon)
      fail(ErrorKind::ConfigInvalid, path + ": " + e.message());
    throw;
  }
}

RadialScenario scenario_param(const Params& p, const std::string& key,
                              const std::filesystem::path& base_dir,
                              std::optional<json> def = std::nullopt) {
  json spec;
  if (p.has(key)) {
    spec = p.raw(key);
  } else if (def) {
    spec = *def;
  } else {
    p.bad(key, "required scenario object or file path");
  }
  if (spec.is_string()) {
    std::filesystem::path file = spec.get<std::string>();
    if (file.is_relative()) file = base_dir / file;
    if (!std::filesystem::is_regular_file(file)) p.bad(key, "cannot open " + file.string());
    spec = with_path(p.path(key), [&] { return read_json_file(file, ErrorKind::ConfigInvalid); });
  }
  return with_path(p.path(key), [&] { return scenario_from_json(spec); });
}

SpectrumMethod method_param(const Params& p) {
  const std::string m = p.text("method", "auto");
  if (m == "auto") return SpectrumMethod::Auto;
  if (m == "numeric") return SpectrumMethod::Numeric;
  if (m == "closed_form") return SpectrumMethod::ClosedForm;
  p.bad("method", "must be auto, numeric or closed_form");
}

double solver_tol_param(const Params& p, double def) {
  const double t = p.number("solver_tol", def);
  if (!(t >= 1e-13 && t <= 1e-4)) p.bad("solver_tol", "must lie in [1e-13, 1e-4]");
  return t;
}

std::uint64_t seed_param(const Params& p, const RunOptions& opt) {
  if (opt.seed) return *opt.seed;
  if (!p.has("seed")) return 1;
  const json& v = p.raw("seed");
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    p.bad("seed", "must be a non-negative integer");
  return static_cast<std::uint64_t>(v.get<std::int64_t>());
}

json num_or_null(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

Table spectrum_table(const DtNSpectrum& s, const std::vector<std::optional<double>>& ref) {
  Table t{"spectrum", {"degree", "mu", "reference", "abs_diff", "rel_diff"}, {}};
  for (int n = 0; n <= s.n_max(); ++n) {
    std::optional<double> r = ref.empty() ? std::nullopt : ref[n];
    std::optional<double> ad, rd;
    if (r) {
      ad = std::abs(s.mu[n] - *r);
      rd = *r != 0.0 ? *ad / std::abs(*r) : *ad;
    }
    t.rows.push_back({n, s.mu[n], num_or_null(r), num_or_null(ad), num_or_null(rd)});
  }
  return t;
}

std::vector<double> log_spaced(double lo, double hi, int points) {
  std::vector<double> v;
  for (int k = 0; k < points; ++k)
    v.push_back(lo * std::pow(hi / lo, static_cast<double>(k) / (points - 1)));
  return v;
}

ModeSolution mode_for(const RadialScenario& s, int n, double tol, SpectrumMethod method) {
  const bool closed = method == SpectrumMethod::ClosedForm ||
                      (method == SpectrumMethod::Auto && recognize_power_law(s).has_value());
  return closed ? closed_form_mode(s, n) : solve_mode(s, n, tol);
}

// ---------------------------------------------------------------------------

RunReport run_radial_spectrum(const ScenarioConfig& c, const RunOptions& opt) {
  const Params p(c.parameters, "parameters");
  p.allow_only({"scenario", "n_max", "solver_tol", "method", "tolerance", "exponent_fit", "flux_fit"});
  const RadialScenario s = scenario_param(p, "scenario", c.base_dir);
  const int n_max = static_cast<int>(p.integer("n_max", 10, 0, 200));
  const double tol = solver_tol_param(p, 1e-10);
  const SpectrumMethod method = method_param(p);
  const std::optional<double> tolerance =
      p.has("tolerance") ? std::optional(p.positive("tolerance")) : std::nullopt;
  const auto family = recognize_power_law(s);
  if (method == SpectrumMethod::ClosedForm && !family)
    p.bad("method", "scenario is not a closed-form power-law family");
  if (tolerance && !family) p.bad("tolerance", "scenario has no closed-form reference");

  struct ExpFit { double s_lo, s_hi; std::optional<double> tol; };
  struct FluxFit { double r_lo, r_hi; std::vector<int> degrees; std::optional<double> tol; };
  std::optional<ExpFit> exp_fit;
  std::optional<FluxFit> flux_fit;
  if (p.has("exponent_fit")) {
    const Params e = p.sub("exponent_fit");
    e.allow_only({"s_lo", "s_hi", "tolerance"});
    exp_fit = ExpFit{e.positive("s_lo", 1e-4), e.positive("s_hi", 1e-2),
                     e.has("tolerance") ? std::optional(e.positive("tolerance")) : std::nullopt};
    if (!(exp_fit->s_lo < exp_fit->s_hi)) e.bad("s_hi", "must exceed s_lo");
  }
  if (p.has("flux_fit")) {
    const Params f = p.sub("flux_fit");
    f.allow_only({"r_lo", "r_hi", "degrees", "tolerance"});
    flux_fit = FluxFit{f.number("r_lo"), f.number("r_hi"), f.integers("degrees", {1, 2, 3}, 1, 200),
                       f.has("tolerance") ? std::optional(f.positive("tolerance")) : std::nullopt};
    if (!(flux_fit->r_lo > s.r_core() && flux_fit->r_hi > flux_fit->r_lo &&
          flux_fit->r_hi <= s.outer_radius()))
      f.bad("r_lo", "need r_core < r_lo < r_hi <= outer radius");
  }

  RunReport rep;
  const DtNSpectrum spec = dtn_spectrum(s, n_max, tol, method, opt.threads);
  std::vector<std::optional<double>> ref;
  if (family)
    for (int n = 0; n <= n_max; ++n) ref.push_back(closed_form_mode(s, n).mu());
  rep.tables.push_back(spectrum_table(spec, ref));
  rep.summary["method"] = spec.method;
  rep.summary["scenario"] = s.description();
  bool pass = true;
  bool declared = false;
  if (tolerance) {
    double worst = 0.0;
    for (int n = 1; n <= n_max; ++n)
      worst = std::max(worst, std::abs(spec.mu[n] - *ref[n]) / std::abs(*ref[n]));
    rep.summary["max_rel_diff"] = worst;
    declared = true;
    pass = pass && worst <= *tolerance;
  }
  if (exp_fit) {
    Table t{"exponents", {"degree", "indicial_exponent", "fitted_exponent", "rel_diff"}, {}};
    double worst = 0.0;
    for (int n = 1; n <= n_max; ++n) {
      const ModeSolution m = mode_for(s, n, tol, method);
      const double lam = indicial_exponents(s, n).bounded;
      const double fit = fitted_exponent(m, exp_fit->s_lo, exp_fit->s_hi);
      const double rd = std::abs(fit - lam) / lam;
      worst = std::max(worst, rd);
      t.rows.push_back({n, lam, fit, rd});
    }
    rep.tables.push_back(std::move(t));
    rep.summary["exponent_max_rel_diff"] = worst;
    if (exp_fit->tol) {
      declared = true;
      pass = pass && worst <= *exp_fit->tol;
    }
  }
  if (flux_fit) {
    Table t{"flux_decay", {"degree", "fitted_slope", "expected_slope", "abs_diff"}, {}};
    double worst = 0.0;
    const auto rs = log_spaced(flux_fit->r_lo - s.r_core(), flux_fit->r_hi - s.r_core(), 24);
    for (int n : flux_fit->degrees) {
      const ModeSolution m = mode_for(s, n, tol, method);
      std::vector<double> xs, fs;
      for (double d : rs) {
        xs.push_back(d);
        fs.push_back(m.flux(s.r_core() + d));
      }
      const double slope = loglog_slope(xs, fs);
      const double expected = m.exponent() + 1.0;
      worst = std::max(worst, std::abs(slope - expected));
      t.rows.push_back({n, slope, expected, std::abs(slope - expected)});
    }
    rep.tables.push_back(std::move(t));
    rep.summary["flux_slope_max_abs_diff"] = worst;
    if (flux_fit->tol) {
      declared = true;
      pass = pass && worst <= *flux_fit->tol;
    }
  }
  rep.verdict = declared ? (pass ? Verdict::Pass : Verdict::Fail) : Verdict::Informational;
  return rep;
}

RunReport run_spectrum_compare(const ScenarioConfig& c, const RunOptions& opt) {
  const Params p(c.parameters, "parameters");
  p.allow_only({"scenario", "reference_scenario", "n_max", "solver_tol", "method", "tolerance"});
  const RadialScenario s = scenario_param(p, "scenario", c.base_dir);
  const RadialScenario r =
      scenario_param(p, "reference_scenario", c.base_dir, json{{"family", "homogeneous"}});
  const int n_max = static_cast<int>(p.integer("n_max", 20, 0, 200));
  const double tol = solver_tol_param(p, 1e-10);
  const SpectrumMethod method = method_param(p);
  const double tolerance = p.positive("tolerance", 1e-6);

  const DtNSpectrum a = dtn_spectrum(s, n_max, tol, method, opt.threads);
  const DtNSpectrum b = dtn_spectrum(r, n_max, tol, method, opt.threads);
  const SpectrumComparison cmp = compare_spectra(a, b, tolerance);
  std::vector<std::optional<double>> ref(b.mu.begin(), b.mu.end());
  RunReport rep;
  rep.tables.push_back(spectrum_table(a, ref));
  rep.summary = {{"max_rel_diff", cmp.max_rel_diff},
                 {"tolerance", tolerance},
                 {"method", a.method},
                 {"reference_method", b.method}};
  rep.verdict = cmp.equal ? Verdict::Pass : Verdict::Fail;
  return rep;
}

RunReport run_near_cloak(const ScenarioConfig& c, const RunOptions& opt) {
  const Params p(c.parameters, "parameters");
  p.allow_only({"epsilon", "epsilons", "n_max", "solver_tol", "interior_fill", "tolerance"});
  std::vector<double> eps;
  if (p.has("epsilons")) {
    eps = p.numbers("epsilons");
    for (std::size_t i = 0; i < eps.size(); ++i)
      if (!(eps[i] > 0.0 && eps[i] < 1.0))
        p.bad("epsilons[" + std::to_string(i) + "]", "epsilon must lie in (0, 1)");
  } else {
    eps = {p.number("epsilon")};
    if (!(eps[0] > 0.0 && eps[0] < 1.0)) p.bad("epsilon", "must lie in (0, 1)");
  }
  const int n_max = static_cast<int>(p.integer("n_max", 5, 1, 200));
  const double tol = solver_tol_param(p, 1e-10);
  const double fill = p.positive("interior_fill", 1.0);
  const std::optional<double> tolerance =
      p.has("tolerance") ? std::optional(p.positive("tolerance")) : std::nullopt;

  const DtNSpectrum ref = dtn_spectrum(homogeneous_scenario(), n_max, tol, SpectrumMethod::Auto);
  const auto [ia, ib] = isotropic_fill(fill);
  RunReport rep;
  Table t{"sweep", {"epsilon", "degree", "mu", "reference", "abs_diff", "rel_diff"}, {}};
  json per_eps = json::array();
  std::vector<double> worst_by_eps;
  for (double e : eps) {
    const DtNSpectrum s = near_cloak_spectrum(e, ia, ib, n_max, tol, opt.threads);
    const SpectrumComparison cmp = compare_spectra(s, ref, 0.0);
    for (int n = 1; n <= n_max; ++n)
      t.rows.push_back({e, n, s.mu[n], ref.mu[n], cmp.abs_diff[n], cmp.rel_diff[n]});
    worst_by_eps.push_back(cmp.max_rel_diff);
    per_eps.push_back({{"epsilon", e}, {"max_rel_diff", cmp.max_rel_diff}});
  }
  rep.tables.push_back(std::move(t));
  rep.summary["per_epsilon"] = per_eps;
  // Deviation must shrink as epsilon shrinks.
  std::vector<std::size_t> order(eps.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return eps[a] > eps[b]; });
  bool monotone = true;
  for (std::size_t i = 0; i + 1 < order.size(); ++i)
    if (!(worst_by_eps[order[i + 1]] < worst_by_eps[order[i]])) monotone = false;
  rep.summary["monotone_in_epsilon"] = monotone;
  if (tolerance) {
    const double smallest = worst_by_eps[order.back()];
    rep.summary["tolerance"] = *tolerance;
    rep.verdict = monotone && smallest <= *tolerance ? Verdict::Pass : Verdict::Fail;
  }
  return rep;
}

RunReport run_invisibility(const ScenarioConfig& c, const RunOptions& opt) {
  const Params p(c.parameters, "parameters");
  p.allow_only({"scenario", "fills", "deltas", "n_max", "solver_tol", "threshold"});
  const RadialScenario s = scenario_param(p, "scenario", c.base_dir, json{{"family", "cloak"}});
  const auto fills = p.numbers("fills", std::vector<double>{0.1, 1.0, 10.0});
  for (std::size_t i = 0; i < fills.size(); ++i)
    if (!(fills[i] > 0.0)) p.bad("fills[" + std::to_string(i) + "]", "must be positive");
  const auto deltas = p.numbers("deltas", std::vector<double>{1e-2, 1e-3, 1e-4});
  for (std::size_t i = 0; i < deltas.size(); ++i)
    if (!(deltas[i] > 0.0 && deltas[i] < 0.5))
      p.bad("deltas[" + std::to_string(i) + "]", "must lie in (0, 0.5)");
  const int n_max = static_cast<int>(p.integer("n_max", 1, 1, 50));
  const double tol = solver_tol_param(p, 1e-12);
  const double threshold = p.positive("threshold", 1e-4);
  if (s.inner().kind != InnerKind::FrobeniusSingular)
    p.bad("scenario", "must be Frobenius-singular at its inner end");

  const InvisibilityReport inv = interior_invisibility_test(s, fills, deltas, n_max, tol, opt.threads);
  RunReport rep;
  Table mu{"mu", {"delta", "degree", "fill", "mu"}, {}};
  Table spread{"spread", {"delta", "degree", "spread"}, {}};
  for (const auto& row : inv.rows)
    for (int d = 0; d < n_max; ++d) {
      for (std::size_t f = 0; f < fills.size(); ++f) mu.rows.push_back({row.delta, d + 1, fills[f], row.mu[f][d]});
      spread.rows.push_back({row.delta, d + 1, row.spread[d]});
    }
  rep.tables.push_back(std::move(spread));
  rep.tables.push_back(std::move(mu));
  const double last = inv.rows.back().spread[0];
  rep.summary = {{"monotone", inv.monotone}, {"final_spread", last}, {"threshold", threshold}};
  rep.verdict = inv.monotone && last < threshold ? Verdict::Pass : Verdict::Fail;
  return rep;
}

RunReport run_fem(const ScenarioConfig& c, const RunOptions& opt) {
  const Params p(c.parameters, "parameters");
  p.allow_only({"check", "map", "sigma", "rings", "radius", "modes", "tolerance", "min_reduction",
                "ks", "min_order"});
  const std::string check = p.text("check", "invariance");
  RunReport rep;
  if (check == "rayleigh") {
    const auto ks = p.integers("ks", {1, 2, 3}, 1, 64);
    const auto rings = p.integers("rings", {7, 14, 28, 56}, 2, 400);
    const double radius = p.positive("radius", 1.0);
    const double min_order = p.number("min_order", 1.5);
    const RayleighReport rr = rayleigh_convergence(ks, rings, radius, opt.threads);
    Table t{"rayleigh", {"rings", "h", "k", "quotient", "exact", "error"}, {}};
    for (const auto& row : rr.rows)
      for (std::size_t i = 0; i < ks.size(); ++i)
        t.rows.push_back({row.rings, row.h, ks[i], row.quotients[i], ks[i] / radius, row.errors[i]});
    rep.tables.push_back(std::move(t));
    json orders = json::array();
    bool pass = rings.size() >= 2;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      orders.push_back({{"k", ks[i]}, {"order", rr.fitted_orders[i]}});
      pass = pass && rr.fitted_orders[i] >= min_order;
    }
    rep.summary = {{"fitted_orders", orders}, {"min_order", min_order}};
    rep.verdict = pass ? Verdict::Pass : Verdict::Fail;
    return rep;
  }
  if (check != "invariance") p.bad("check", "must be invariance or rayleigh");

  const Diffeomorphism F =
      with_path(p.path("map"), [&] { return diffeomorphism_from_json(p.raw("map")); });
  if (F.dim() != 2) p.bad("map", "must be a 2D map");
  if (!F.fixes_boundary()) p.bad("map", "must fix the disk boundary");
  const SymmetricTensorField sigma =
      p.has("sigma") ? with_path(p.path("sigma"), [&] { return field_from_json(p.raw("sigma")); })
                     : constant_field(Mat::Identity(2, 2));
  if (sigma.dim() != 2 || sigma.coords() != Coords::Cartesian)
    p.bad("sigma", "must be a 2D Cartesian field");
  const auto rings = p.integers("rings", {11, 22, 44, 88}, 2, 400);
  const double radius = F.domain().outer_radius();
  const int modes = static_cast<int>(p.integer("modes", 4, 1, 32));
  const double tolerance = p.positive("tolerance", 2e-2);
  const double min_reduction = p.positive("min_reduction", 2.0);

  const InvarianceReport inv = invariance_experiment(sigma, F, rings, radius, modes, opt.threads);
  Table t{"invariance",
          {"rings", "h", "nodes", "boundary_nodes", "projected_error", "full_error", "ratio"},
          {}};
  for (std::size_t i = 0; i < inv.rows.size(); ++i) {
    const auto& r = inv.rows[i];
    t.rows.push_back({r.rings, r.h, r.nodes, r.boundary_nodes, r.projected_error, r.full_error,
                      i == 0 ? json(nullptr) : json(inv.ratios[i - 1])});
  }
  rep.tables.push_back(std::move(t));
  bool pass = inv.rows.back().projected_error <= tolerance;
  for (double ratio : inv.ratios) pass = pass && ratio <= 1.0 / min_reduction;
  rep.summary = {{"final_error", inv.rows.back().projected_error},
                 {"final_h", inv.rows.back().h},
                 {"fitted_order", inv.fitted_order},
                 {"modes", modes},
                 {"tolerance", tolerance},
                 {"min_reduction", min_reduction}};
  rep.verdict = pass ? Verdict::Pass : Verdict::Fail;
  return rep;
}

RunReport run_wos_hitting(const ScenarioConfig& c, const RunOptions& opt) {
  const Params p(c.parameters, "parameters");
  p.allow_only({"start", "target_center", "target_radius", "target_radii", "domain_radius", "n",
                "seed", "eps_shell", "slope_tolerance"});
  const Vec start = p.point("start", std::vector<double>{0.5, 0.0, 0.0});
  const Vec center = p.has("target_center") ? p.point("target_center") : Vec(Vec::Zero(start.size()));
  if (center.size() != start.size()) p.bad("target_center", "dimension differs from start");
  const auto radii = p.has("target_radii") ? p.numbers("target_radii")
                                           : std::vector<double>{p.positive("target_radius", 0.1)};
  const double b = p.positive("domain_radius", 2.0);
  const auto n = static_cast<std::size_t>(p.integer("n", 100000, 1, 100000000));
  const std::uint64_t seed = seed_param(p, opt);
  const std::optional<double> eps =
      p.has("eps_shell") ? std::optional(p.positive("eps_shell")) : std::nullopt;
  const double slope_tol = p.positive("slope_tolerance", 0.1);
  for (std::size_t i = 0; i < radii.size(); ++i)
    with_path(p.path("target_radii[" + std::to_string(i) + "]"), [&] {
      validate(HittingQuery{start, center, radii[i], b, 0.0});
      return 0;
    });

  const int dim = static_cast<int>(start.size());
  const bool concentric = center.norm() == 0.0;
  RunReport rep;
  Table t{"hitting", {"target_radius", "eps_shell", "mean", "stderr", "exact", "z"}, {}};
  bool pass = concentric;
  std::vector<double> as, means;
  for (double a : radii) {
    const double e = eps ? *eps : std::min(1e-4 * b, 1e-2 * a);
    const WalkEstimate w = hitting_probability({start, center, a, b, e}, n, seed, opt.threads);
    std::optional<double> exact, z;
    if (concentric) {
      exact = concentric_hitting(a, b, start.norm(), dim);
      z = w.std_error > 0.0 ? (w.mean - *exact) / w.std_error : (w.mean == *exact ? 0.0 : 1e300);
      pass = pass && std::abs(*z) <= 3.0;
    }
    t.rows.push_back({a, e, w.mean, w.std_error, num_or_null(exact), num_or_null(z)});
    as.push_back(a);
    means.push_back(w.mean);
  }
  rep.tables.push_back(std::move(t));
  rep.summary = {{"n", n}, {"seed", seed}, {"concentric", concentric}};
  if (radii.size() >= 3) {
    const bool positive = std::all_of(means.begin(), means.end(), [](double m) { return m > 0.0; });
    if (positive) {
      const double slope = loglog_slope(as, means);
      rep.summary["fitted_slope"] = slope;
      pass = pass && std::abs(slope - (dim == 3 ? 1.0 : 0.0)) <= slope_tol;
    } else {
      pass = false;
    }
  }
  rep.verdict = concentric ? (pass ? Verdict::Pass : Verdict::Fail) : Verdict::Informational;
  return rep;
}

struct KakutaniCase {
  std::string name;
  DomainSpec domain;
  HarmonicPolynomial f;
  Vec x;
};

std::vector<KakutaniCase> default_kakutani_cases() {
  Vec x2 = Vec::Zero(2);
  Vec x3(3);
  x3 << 1.0, 0.0, 0.0;
  Vec x3c(3);
  x3c << 0.3, -0.4, 0.5;
  return {
      {"constant", DomainSpec::ball(Vec::Zero(3), 2.0), HarmonicPolynomial::constant(3, 1.0), x3c},
      {"disk_x1_center", DomainSpec::disk(1.0), HarmonicPolynomial::first_harmonic(2, 1.0), x2},
      {"ball_first_harmonic", DomainSpec::ball(Vec::Zero(3), 2.0),
       HarmonicPolynomial::first_harmonic(3, 2.0), x3},
  };
}

RunReport run_wos_kakutani(const ScenarioConfig& c, const RunOptions& opt) {
  const Params p(c.parameters, "parameters");
  p.allow_only({"cases", "n", "seed", "eps_shell", "halving"});
  const auto n = static_cast<std::size_t>(p.integer("n", 100000, 2, 100000000));
  const std::uint64_t seed = seed_param(p, opt);
  const std::optional<double> eps =
      p.has("eps_shell") ? std::optional(p.positive("eps_shell")) : std::nullopt;
  const bool halving = p.flag("halving", true);
  std::vector<KakutaniCase> cases;
  if (p.has("cases")) {
    const json& arr = p.raw("cases");
    if (!arr.is_array() || arr.empty()) p.bad("cases", "must be a non-empty array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const Params cp(arr[i], p.path("cases[" + std::to_string(i) + "]"));
      cp.allow_only({"name", "dim", "radius", "boundary", "x"});
      const int dim = static_cast<int>(cp.integer("dim", 3, 2, 3));
      const double radius = cp.positive("radius", 1.0);
      const Vec x = cp.point("x");
      if (x.size() != dim) cp.bad("x", "dimension differs from dim");
      if (!(x.norm() < radius)) cp.bad("x", "must lie strictly inside the domain");
      HarmonicPolynomial f = HarmonicPolynomial::constant(dim, 1.0);
      if (cp.has("boundary")) {
        const json& bj = cp.raw("boundary");
        if (bj.is_string() && bj.get<std::string>() == "first_harmonic")
          f = HarmonicPolynomial::first_harmonic(dim, radius);
        else
          f = with_path(cp.path("boundary"), [&] { return HarmonicPolynomial::from_json(bj, dim); });
      }
      const DomainSpec dom = dim == 2 ? DomainSpec::disk(radius) : DomainSpec::ball(Vec::Zero(3), radius);
      cases.push_back({cp.text("name", "case" + std::to_string(i)), dom, f, x});
    }
  } else {
    cases = default_kakutani_cases();
  }

  RunReport rep;
  Table t{"kakutani",
          {"case", "mean", "stderr", "exact", "z", "eps_shell", "halved_mean", "halving_shift"},
          {}};
  bool pass = true;
  for (const auto& kc : cases) {
    const double e = eps ? *eps : 1e-4 * kc.domain.outer_radius();
    const WalkEstimate w = wos_harmonic(kc.domain, kc.f, kc.x, n, seed, e, opt.threads);
    const double exact = kc.f(kc.x);
    const double diff = w.mean - exact;
    const double z = w.std_error > 0.0 ? diff / w.std_error : (diff == 0.0 ? 0.0 : 1e300);
    pass = pass && std::abs(z) <= 3.0;
    json halved = nullptr, shift = nullptr;
    if (halving) {
      const WalkEstimate h = wos_harmonic(kc.domain, kc.f, kc.x, n, seed, 0.5 * e, opt.threads);
      const double d = std::abs(h.mean - w.mean);
      const double s = w.std_error > 0.0 ? d / w.std_error : (d == 0.0 ? 0.0 : 1e300);
      pass = pass && s < 1.0;
      halved = h.mean;
      shift = s;
    }
    t.rows.push_back({kc.name, w.mean, w.std_error, exact, z, e, halved, shift});
  }
  rep.tables.push_back(std::move(t));
  rep.summary = {{"n", n}, {"seed", seed}};
  rep.verdict = pass ? Verdict::Pass : Verdict::Fail;
  return rep;
}

Mat random_spd(Stream& rng, int dim) {
  Mat a(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = 2.0 * rng.uniform() - 1.0;
  return a * a.transpose() + 0.5 * Mat::Identity(dim, dim);
}

Vec random_in_shell(Stream& rng, int dim, double r_lo, double r_hi) {
  const double r = r_lo + (r_hi - r_lo) * (0.001 + 0.998 * rng.uniform());
  const double phi = 2.0 * std::numbers::pi * rng.uniform();
  Vec x(dim);
  if (dim == 2) {
    x << r * std::cos(phi), r * std::sin(phi);
  } else {
    const double z = 1.98 * rng.uniform() - 0.99;
    const double s = std::sqrt(1.0 - z * z);
    x << r * s * std::cos(phi), r * s * std::sin(phi), r * z;
  }
  return x;
}

/// Minimum of det(dF(s e)) s over s in (0, R], by golden section on a ray.
double ray_minimum(const Diffeomorphism& F, double R) {
  const int dim = F.dim();
  Vec e = Vec::Zero(dim);
  e[0] = 1.0;
  auto g = [&](double s) {
    const Vec x = s * e;
    return F.jacobian(x).determinant() * s;
  };
  double best = g(R);
  double lo = 1e-9 * R, hi = R;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = g(x1), f2 = g(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-14 * R; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = g(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = g(x2);
    }
  }
  return std::min({best, f1, f2, g(lo)});
}

RunReport run_pushforward(const ScenarioConfig& c, const RunOptions& opt) {
  const Params p(c.parameters, "parameters");
  p.allow_only({"checks", "n", "seed", "example_tolerance", "round_trip_tolerance",
                "jacobian_tolerance", "jacobian_samples"});
  std::vector<std::string> checks{"blow_up_example", "round_trip", "jacobian"};
  if (p.has("checks")) {
    const json& a = p.raw("checks");
    if (!a.is_array() || a.empty()) p.bad("checks", "must be a non-empty array");
    checks.clear();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::string k = p.path("checks[" + std::to_string(i) + "]");
      if (!a[i].is_string()) fail(ErrorKind::ConfigInvalid, k + ": must be a string");
      const std::string v = a[i].get<std::string>();
      if (v != "blow_up_example" && v != "round_trip" && v != "jacobian")
        fail(ErrorKind::ConfigInvalid, k + ": unknown check '" + v + "'");
      checks.push_back(v);
    }
  }
  const auto n = static_cast<std::size_t>(p.integer("n", 100, 1, 10000000));
  const std::uint64_t seed = seed_param(p, opt);
  const double tol_example = p.positive("example_tolerance", 1e-10);
  const double tol_round = p.positive("round_trip_tolerance", 1e-12);
  const double tol_jac = p.positive("jacobian_tolerance", 1e-8);
  const auto jac_samples =
      static_cast<std::size_t>(p.integer("jacobian_samples", 20000, 8, 100000000));

  RunReport rep;
  Table t{"checks", {"check", "metric", "value", "reference", "tolerance", "pass"}, {}};
  bool pass = true;
  auto record = [&](const std::string& check, const std::string& metric, double value,
                    json reference, double tolerance, bool ok) {
    t.rows.push_back({check, metric, value, reference, tolerance, ok ? "yes" : "no"});
    pass = pass && ok;
  };

  const Diffeomorphism blow = blow_up_map(3);
  for (const auto& check : checks) {
    if (check == "blow_up_example") {
      const SymmetricTensorField sigma = push_forward(blow, constant_field(Mat::Identity(3, 3)));
      Stream rng(seed, 0);
      double worst = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const Vec y = random_in_shell(rng, 3, 1.0, 2.0);
        const double r = y.norm();
        const double st = std::sqrt(y[0] * y[0] + y[1] * y[1]) / r;
        const Mat sph = cartesian_to_spherical(sigma(y), y);
        const Eigen::Vector3d expected(2.0 * (r - 1.0) * (r - 1.0) * st, 2.0 * st, 2.0 / st);
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) {
            const double err = a == b ? std::abs(sph(a, a) - expected[a]) / expected[a]
                                      : std::abs(sph(a, b)) / std::sqrt(expected[a] * expected[b]);
            worst = std::max(worst, err);
          }
      }
      record(check, "max_rel_entry_error", worst, nullptr, tol_example, worst <= tol_example);
    } else if (check == "round_trip") {
      Stream rng(seed, 1);
      double worst_metric = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const Mat g = random_spd(rng, 3);
        const Mat back = metric_from_sigma(sigma_from_metric(g));
        worst_metric = std::max(worst_metric, (back - g).norm() / g.norm());
      }
      record(check, "sigma_metric_round_trip", worst_metric, nullptr, tol_round,
             worst_metric <= tol_round);

      const std::vector<std::pair<std::string, Diffeomorphism>> maps{
          {"blow_up", blow},
          {"near_cloak", near_cloak_map(0.25)},
          {"twist2d", twist_map(Expression::parse("(1-r)^2"), 1.0)},
          {"radial_quadratic",
           radial_map(RadialProfile::quadratic(0.2, 1.0), DomainSpec::disk(1.0), DomainSpec::disk(1.0), true)}};
      for (const auto& [name, F] : maps) {
        const double r_in = F.codomain().inner_radius();
        const double r_out = F.codomain().outer_radius();
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const Vec y = random_in_shell(rng, F.dim(), r_in, r_out);
          worst = std::max(worst, (F.forward(F.inverse(y)) - y).norm() / y.norm());
          const Vec x = F.inverse(y);
          worst = std::max(worst, (F.inverse(F.forward(x)) - x).norm() / x.norm());
        }
        record(check, name + "_composition", worst, nullptr, tol_round, worst <= tol_round);
      }
    } else {
      const JacobianConditionReport jr = check_jacobian_conditions(blow, Vec::Zero(3), jac_samples, seed);
      const double oracle = ray_minimum(blow, 2.0);
      record(check, "min_singular_value", jr.c0_estimate, 0.5, 1e-9,
             jr.c0_estimate >= 0.5 - 1e-9);
      record(check, "min_det_times_distance", jr.c1_estimate, oracle, tol_jac,
             jr.c1_estimate > 0.0 && std::abs(jr.c1_estimate - oracle) <= tol_jac);
    }
  }
  rep.tables.push_back(std::move(t));
  rep.summary = {{"n", n}, {"seed", seed}};
  rep.verdict = pass ? Verdict::Pass : Verdict::Fail;
  return rep;
}

}  // namespace

RunReport run(const ScenarioConfig& config, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioConfig effective = config;
  if (options.seed && (config.experiment == Experiment::WosHitting ||
                       config.experiment == Experiment::WosKakutani ||
                       config.experiment == Experiment::PushforwardCheck))
    effective.parameters["seed"] = *options.seed;
  RunReport rep;
  switch (config.experiment) {
    case Experiment::RadialSpectrum: rep = run_radial_spectrum(effective, options); break;
    case Experiment::SpectrumCompare: rep = run_spectrum_compare(effective, options); break;
    case Experiment::NearCloakSweep: rep = run_near_cloak(effective, options); break;
    case Experiment::InteriorInvisibility: rep = run_invisibility(effective, options); break;
    case Experiment::FemInvariance: rep = run_fem(effective, options); break;
    case Experiment::WosHitting: rep = run_wos_hitting(effective, options); break;
    case Experiment::WosKakutani: rep = run_wos_kakutani(effective, options); break;
    case Experiment::PushforwardCheck: rep = run_pushforward(effective, options); break;
  }
  rep.experiment = config.experiment;
  rep.config = effective.to_json();
  rep.tool_version = tool_version();
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// ---------------------------------------------------------------------------

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string cell_text(const json& v) {
  if (v.is_null()) return "";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number()) return format_number(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string render_csv(const Table& t) {
  std::ostringstream out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << csv_escape(t.columns[i]);
  out << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_escape(cell_text(row[i]));
    out << "\n";
  }
  return out.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << content;
  if (!out) fail(ErrorKind::IoError, "failed writing " + path.string());
}

std::string default_stem(Experiment e) {
  std::string s = to_string(e);
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (std::isupper(static_cast<unsigned char>(s[i])) && i > 0) out += '_';
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(s[i])));
  }
  return out;
}

}  // namespace

std::string render_text(const RunReport& r, bool include_timing) {
  std::ostringstream out;
  out << "experiment: " << to_string(r.experiment) << "\n";
  out << "verdict: " << to_string(r.verdict) << "\n";
  for (const auto& [k, v] : r.summary.items()) out << k << ": " << cell_text(v) << "\n";
  if (include_timing && r.wall_time) out << "wall_time: " << format_number(*r.wall_time) << " s\n";
  for (const auto& t : r.tables) {
    out << "\n[" << t.name << "]\n";
    std::vector<std::size_t> width(t.columns.size());
    for (std::size_t i = 0; i < t.columns.size(); ++i) width[i] = t.columns[i].size();
    for (const auto& row : t.rows)
      for (std::size_t i = 0; i < row.size() && i < width.size(); ++i)
        width[i] = std::max(width[i], cell_text(row[i]).size());
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        out << (i ? "  " : "") << cells[i];
        if (i + 1 < cells.size()) out << std::string(width[i] - cells[i].size(), ' ');
      }
      out << "\n";
    };
    line(t.columns);
    for (const auto& row : t.rows) {
      std::vector<std::string> cells;
      for (const auto& v : row) cells.push_back(cell_text(v));
      line(cells);
    }
  }
  return out.str();
}

std::vector<std::filesystem::path> emit_report(const RunReport& r, Format format,
                                               const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  std::string stem = default_stem(r.experiment);
  if (r.config.contains("output_path") && r.config["output_path"].is_string())
    stem = r.config["output_path"].get<std::string>();
  std::vector<std::filesystem::path> written;
  switch (format) {
    case Format::Json: {
      const auto path = out_dir / (stem + ".json");
      write_file(path, r.to_json(false).dump(2) + "\n");
      written.push_back(path);
      break;
    }
    case Format::Csv:
      for (std::size_t i = 0; i < r.tables.size(); ++i) {
        const auto path = out_dir / (i == 0 ? stem + ".csv" : stem + "-" + r.tables[i].name + ".csv");
        write_file(path, render_csv(r.tables[i]));
        written.push_back(path);
      }
      break;
    case Format::Text: {
      const auto path = out_dir / (stem + ".txt");
      write_file(path, render_text(r, false));
      written.push_back(path);
      break;
    }
  }
  return written;
}

}  // namespace cloak
