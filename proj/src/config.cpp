#include "polcpmg/config.hpp"

#include "polcpmg/experiments.hpp"
#include "polcpmg/floquet.hpp"
#include "polcpmg/units.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace polcpmg {

using json = nlohmann::json;
using units::kPi;

ConfigError::ConfigError(const std::string& path, const std::string& msg)
    : std::runtime_error(path.empty() ? msg : path + ": " + msg), path_(path) {}

namespace {

// Typed access to one JSON object with path-qualified errors and rejection
// of unknown keys.
class Block {
 public:
  Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    out = convert<T>(j_.at(key), at(key));
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    if (!has(key)) return;
    out = convert<T>(j_.at(key), at(key));
  }

  void grid(const std::string& key, std::vector<double>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& g = j_.at(key);
    const std::string p = at(key);
    if (g.is_array()) {
      out = convert<std::vector<double>>(g, p);
    } else if (g.is_object()) {
      Block b(g, p);
      double start = 0, stop = 0;
      int points = 0;
      if (!b.has("start") || !b.has("stop") || !b.has("points"))
        throw ConfigError(p, "grid needs start, stop and points (or an explicit array)");
      b.get("start", start);
      b.get("stop", stop);
      b.get("points", points);
      b.finish();
      if (points < 1) throw ConfigError(p + ".points", "grid must have at least one point");
      out = linspace(start, stop, static_cast<std::size_t>(points));
    } else {
      throw ConfigError(p, "expected an array or {start, stop, points}");
    }
    if (out.empty()) throw ConfigError(p, "scan grid is empty");
    for (std::size_t i = 1; i < out.size(); ++i)
      if (!(out[i] > out[i - 1])) throw ConfigError(p, "grid is not strictly increasing (non-monotone axis)");
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    return has(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(at(it.key()), "unknown key");
  }

 private:
  template <typename T>
  static T convert(const json& v, const std::string& p) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(p, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(p, "expected a finite number");
        return d;
      } else if constexpr (std::is_same_v<T, int>) {
        if (!v.is_number_integer()) throw ConfigError(p, "expected an integer");
        return v.get<int>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(p, "expected true or false");
        return v.get<bool>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(p, "expected a string");
        return v.get<std::string>();
      } else {
        if (!v.is_array()) throw ConfigError(p, "expected an array");
        return v.get<T>();
      }
    } catch (const json::exception& e) {
      throw ConfigError(p, e.what());
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void one_of(const std::string& value, std::initializer_list<const char*> allowed, const std::string& path) {
  for (const char* a : allowed)
    if (value == a) return;
  std::string msg = "invalid value '" + value + "' (expected one of:";
  for (const char* a : allowed) msg += std::string(" ") + a;
  throw ConfigError(path, msg + ")");
}

}  // namespace

RunConfig load_config(const json& j) {
  Block root(j, "");
  RunConfig cfg;
  int version = RunConfig::kSchemaVersion;
  root.get("schema_version", version);
  if (version != RunConfig::kSchemaVersion)
    throw ConfigError("schema_version", "unsupported config schema version " + std::to_string(version));
  root.get("command", cfg.command);

  if (const json* s = root.child("system")) {
    Block b(*s, "system");
    auto& o = cfg.system;
    b.get("larmor_mhz", o.larmor_mhz);
    b.get("a_perp_khz", o.a_perp_khz);
    b.get("a_perp_list_khz", o.a_perp_list_khz);
    b.get("a_par_khz", o.a_par_khz);
    b.get("rabi_mhz", o.rabi_mhz);
    b.get("detuning_mhz", o.detuning_mhz);
    b.get("rabi_error", o.rabi_error);
    b.get("phase_error_deg", o.phase_error_deg);
    b.finish();
    if (!(o.rabi_mhz > 0.0)) throw ConfigError("system.rabi_mhz", "must be > 0");
    if (!(std::abs(o.rabi_error) < 1.0)) throw ConfigError("system.rabi_error", "must satisfy |x| < 1");
    for (double a : o.a_perp_list_khz)
      if (!(a >= 0.0)) throw ConfigError("system.a_perp_list_khz", "couplings must be >= 0");
    if (o.larmor_mhz && !(*o.larmor_mhz > 0.0)) throw ConfigError("system.larmor_mhz", "must be > 0");
  }

  if (const json* s = root.child("nv")) {
    Block b(*s, "nv");
    NvBlock nv;
    if (!b.has("field_gauss")) throw ConfigError("nv.field_gauss", "required field is missing");
    b.get("field_gauss", nv.field_gauss);
    b.get("zero_field_mhz", nv.zero_field_mhz);
    b.get("gamma_mhz_per_gauss", nv.gamma_mhz_per_gauss);
    b.get("drive_mhz", nv.drive_mhz);
    b.finish();
    cfg.nv = nv;
  }

  if (const json* s = root.child("ensemble")) {
    Block b(*s, "ensemble");
    auto& o = cfg.ensemble;
    b.get("preset", o.preset);
    one_of(o.preset, {"none", "n14", "custom"}, "ensemble.preset");
    if (const json* lines = b.child("lines")) {
      if (!lines->is_array()) throw ConfigError("ensemble.lines", "expected an array");
      for (std::size_t i = 0; i < lines->size(); ++i) {
        Block lb((*lines)[i], "ensemble.lines[" + std::to_string(i) + "]");
        LineSpec l;
        lb.get("offset_mhz", l.offset_mhz);
        lb.get("weight", l.weight);
        lb.finish();
        if (!(l.weight >= 0.0)) throw ConfigError(lb.at("weight"), "must be >= 0");
        o.lines.push_back(l);
      }
    }
    b.get("fwhm_mhz", o.fwhm_mhz);
    b.get("nodes", o.nodes);
    b.get("n14_mapping", o.n14_mapping);
    b.finish();
    one_of(o.n14_mapping, {"minus_positive", "minus_negative"}, "ensemble.n14_mapping");
    if (o.fwhm_mhz && !(*o.fwhm_mhz >= 0.0)) throw ConfigError("ensemble.fwhm_mhz", "must be >= 0");
    if (o.nodes && *o.nodes < 1) throw ConfigError("ensemble.nodes", "must be >= 1");
  }

  if (const json* s = root.child("sequence")) {
    Block b(*s, "sequence");
    auto& o = cfg.sequence;
    b.get("family", o.family);
    one_of(o.family, {"polcpmg", "pulsepol", "novel", "custom"}, "sequence.family");
    b.get("t_p_ns", o.t_p_ns);
    b.get("t_p0_ns", o.t_p0_ns);
    b.get("delta_theta_deg", o.delta_theta_deg);
    b.get("tau_ns", o.tau_ns);
    b.get("n_pulses", o.n_pulses);
    b.get("cycles", o.cycles);
    b.get("branch", o.branch);
    b.get("instantaneous", o.instantaneous);
    b.get("init", o.init);
    b.get("nuclear", o.nuclear);
    b.get("repetitions", o.repetitions);
    b.get("lock_rabi_mhz", o.lock_rabi_mhz);
    b.get("lock_us", o.lock_us);
    b.get("text", o.text);
    b.get("periodic", o.periodic);
    b.finish();
    one_of(o.branch, {"plus", "minus"}, "sequence.branch");
    one_of(o.init, {"x_plus", "x_minus", "alternate"}, "sequence.init");
    one_of(o.nuclear, {"mixed", "up", "down"}, "sequence.nuclear");
    if (o.n_pulses < 2 || o.n_pulses % 2) throw ConfigError("sequence.n_pulses", "must be even and >= 2");
    if (o.cycles < 0) throw ConfigError("sequence.cycles", "must be >= 0");
    if (o.tau_ns && !(*o.tau_ns > 0.0)) throw ConfigError("sequence.tau_ns", "must be > 0");
    if (o.t_p_ns && !(*o.t_p_ns > 0.0)) throw ConfigError("sequence.t_p_ns", "must be > 0");
    if (o.t_p0_ns && !(*o.t_p0_ns > 0.0)) throw ConfigError("sequence.t_p0_ns", "must be > 0");
    if (o.repetitions && *o.repetitions < 1) throw ConfigError("sequence.repetitions", "must be >= 1");
    if (o.family == "custom" && !o.text) throw ConfigError("sequence.text", "custom family needs a sequence text");
  }

  if (const json* s = root.child("scan")) {
    Block b(*s, "scan");
    auto& o = cfg.scan;
    b.get("mode", o.mode);
    b.grid("tau_ns", o.tau_ns);
    b.grid("t_p_ns", o.t_p_ns);
    b.grid("detuning_mhz", o.detuning_mhz);
    b.grid("rabi_error", o.rabi_error);
    b.grid("phase_error_deg", o.phase_error_deg);
    b.grid("theta_deg", o.theta_deg);
    b.grid("t_us", o.t_us);
    b.get("n_list", o.n_list);
    b.get("protocols", o.protocols);
    if (const json* p = b.child("panels")) {
      if (!p->is_array()) throw ConfigError("scan.panels", "expected an array");
      for (std::size_t i = 0; i < p->size(); ++i) {
        const std::string path = "scan.panels[" + std::to_string(i) + "]";
        Block pb((*p)[i], path);
        int r_pol = 0, pol_pulses = 32;
        std::string pol_branch = "plus", nuclear = "mixed";
        pb.get("r_pol", r_pol);
        pb.get("pol_branch", pol_branch);
        pb.get("pol_pulses", pol_pulses);
        pb.get("nuclear", nuclear);
        pb.finish();
        one_of(pol_branch, {"plus", "minus"}, path + ".pol_branch");
        one_of(nuclear, {"mixed", "up", "down"}, path + ".nuclear");
        if (r_pol < 0) throw ConfigError(path + ".r_pol", "must be >= 0");
        o.panels.push_back({{"r_pol", r_pol}, {"pol_branch", pol_branch}, {"pol_pulses", pol_pulses}, {"nuclear", nuclear}});
      }
    }
    b.get("t_max_us", o.t_max_us);
    b.get("nx", o.nx);
    b.get("ny", o.ny);
    b.get("field", o.field);
    b.get("sensitivity_step_mhz", o.sensitivity_step_mhz);
    b.get("half_width_step_mhz", o.half_width_step_mhz);
    b.get("unperturbed", o.unperturbed);
    b.finish();
    one_of(o.field, {"linear", "uniform"}, "scan.field");
    for (const auto& p : o.protocols) one_of(p, {"polcpmg", "pulsepol", "novel"}, "scan.protocols");
    for (int n : o.n_list)
      if (n < 2 || n % 2) throw ConfigError("scan.n_list", "entries must be even and >= 2");
    if (o.nx < 1 || o.ny < 1) throw ConfigError("scan.nx", "pixel counts must be >= 1");
  }

  if (const json* s = root.child("output")) {
    Block b(*s, "output");
    auto& o = cfg.output;
    b.get("directory", o.directory);
    b.get("format", o.format);
    b.get("prefix", o.prefix);
    b.finish();
    one_of(o.format, {"csv", "json"}, "output.format");
  }
  root.finish();
  return cfg;
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("", "cannot open config file '" + path.string() + "'");
  try {
    return load_config(json::parse(is, nullptr, true, /*ignore_comments=*/true));
  } catch (const json::parse_error& e) {
    throw ConfigError("", "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

double nv_frequency_mhz(const NvBlock& nv) { return std::abs(nv.zero_field_mhz - nv.gamma_mhz_per_gauss * nv.field_gauss); }

Branch to_branch(const std::string& s, const std::string& path) {
  if (s == "plus") return Branch::Plus;
  if (s == "minus") return Branch::Minus;
  throw ConfigError(path, "invalid branch '" + s + "'");
}

SpinSystem to_system(const RunConfig& cfg) {
  if (!cfg.system.larmor_mhz) throw ConfigError("system.larmor_mhz", "required field is missing");
  SpinSystem s;
  s.larmor = units::mhz(*cfg.system.larmor_mhz);
  s.a_perp = units::khz(cfg.system.a_perp_khz);
  s.a_par = units::khz(cfg.system.a_par_khz);
  s.rabi_nominal = units::mhz(cfg.system.rabi_mhz);
  s.detuning = units::mhz(cfg.system.detuning_mhz.value_or(0.0));
  s.rabi_error = cfg.system.rabi_error;
  s.phase_error = units::deg(cfg.system.phase_error_deg);
  s.validate();
  return s;
}

DetuningEnsemble to_ensemble(const RunConfig& cfg) {
  const auto& e = cfg.ensemble;
  DetuningEnsemble out;
  if (e.lines.empty()) throw ConfigError("ensemble.lines", "no lines (resolve the config first)");
  out.lines.clear();
  for (const auto& l : e.lines) out.lines.push_back({units::mhz(l.offset_mhz), l.weight});
  out.broadening_fwhm = units::mhz(e.fwhm_mhz.value_or(0.0));
  out.samples_per_line = e.nodes.value_or(1);
  out.normalise();
  return out;
}

PulseGeometry to_geometry(const RunConfig& cfg) {
  const auto& q = cfg.sequence;
  if (!q.tau_ns || !q.t_p0_ns || !q.delta_theta_deg)
    throw ConfigError("sequence", "timing not resolved (tau_ns, t_p0_ns, delta_theta_deg)");
  const double t_p0 = units::ns(*q.t_p0_ns);
  const double dth = units::deg(*q.delta_theta_deg);
  const double tau = units::ns(*q.tau_ns);
  try {
    return q.instantaneous ? PulseGeometry::instantaneous_pulses(dth, t_p0, tau)
                           : PulseGeometry::from_delta_theta(dth, t_p0, tau);
  } catch (const SequenceError& e) {
    throw ConfigError("sequence", e.what());
  }
}

ProtocolRun to_protocol(const RunConfig& cfg) {
  const auto& q = cfg.sequence;
  ProtocolRun run;
  run.family = parse_family(q.family);
  run.cycles = q.cycles;
  run.init = q.init == "x_plus" ? ElectronInit::XPlus : q.init == "x_minus" ? ElectronInit::XMinus : ElectronInit::Alternate;
  QubitOperator n = QubitOperator::Identity() / 2.0;
  if (q.nuclear == "up") n = QubitOperator::Zero(), n(0, 0) = 1.0;
  if (q.nuclear == "down") n = QubitOperator::Zero(), n(1, 1) = 1.0;
  run.nuclear_init = n;
  run.geom.t_p0 = units::ns(q.t_p0_ns.value_or(0.0));
  run.geom.instantaneous = q.instantaneous;
  switch (run.family) {
    case Family::PolCPMG:
      run.geom = to_geometry(cfg);
      run.pulses = q.n_pulses;
      break;
    case Family::PulsePol:
      run.geom.tau = units::ns(q.tau_ns.value_or(0.0));
      run.pulses = q.repetitions.value_or(1);
      break;
    case Family::Novel:
      run.lock_rabi = units::mhz(q.lock_rabi_mhz.value_or(0.0));
      run.lock_duration = units::us(q.lock_us.value_or(0.0));
      break;
    case Family::Custom:
      try {
        run.custom = parse_sequence(*q.text);
      } catch (const SequenceParseError& e) {
        throw ConfigError("sequence.text", e.what());
      }
      run.custom->periodic_unit = q.periodic;
      break;
  }
  try {
    run.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("sequence", e.what());
  }
  return run;
}

RunConfig resolve(const RunConfig& in) {
  RunConfig cfg = in;
  auto& sys = cfg.system;

  if (cfg.nv && cfg.nv->drive_mhz) {
    const double dw = nv_frequency_mhz(*cfg.nv) - *cfg.nv->drive_mhz;
    if (sys.detuning_mhz && std::abs(*sys.detuning_mhz - dw) > 1e-9 * std::max(1.0, std::abs(dw)))
      throw ConfigError("system.detuning_mhz", "conflicts with the detuning implied by nv.drive_mhz");
    sys.detuning_mhz = dw;
  }
  if (!sys.detuning_mhz) sys.detuning_mhz = 0.0;

  auto& e = cfg.ensemble;
  if (e.preset == "none") {
    if (e.lines.empty()) e.lines = {{0.0, 1.0}};
    if (!e.fwhm_mhz) e.fwhm_mhz = 0.0;
    if (!e.nodes) e.nodes = 1;
  } else if (e.preset == "n14") {
    if (e.lines.empty()) {
      const double s = e.n14_mapping == "minus_positive" ? 1.0 : -1.0;
      e.lines = {{s * 2.2, 0.5}, {0.0, 0.3}, {-s * 2.2, 0.2}};
    }
    if (!e.fwhm_mhz) e.fwhm_mhz = 1.0;
    if (!e.nodes) e.nodes = 7;
  } else {
    if (e.lines.empty()) throw ConfigError("ensemble.lines", "custom ensemble needs at least one line");
    if (!e.fwhm_mhz) e.fwhm_mhz = 0.0;
    if (!e.nodes) e.nodes = 1;
  }
  double wsum = 0.0;
  for (const auto& l : e.lines) wsum += l.weight;
  if (!(wsum > 0.0)) throw ConfigError("ensemble.lines", "weights sum to zero");
  if (std::abs(wsum - 1.0) > 1e-15)
    for (auto& l : e.lines) l.weight /= wsum;

  auto& q = cfg.sequence;
  if (!q.t_p0_ns) q.t_p0_ns = 500.0 / sys.rabi_mhz;  // π/Ω₀ in ns
  const double t_p0 = *q.t_p0_ns;
  if (q.t_p_ns) {
    const double dth = units::to_deg(kPi * (*q.t_p_ns - t_p0) / t_p0);
    if (q.delta_theta_deg && std::abs(*q.delta_theta_deg - dth) > 1e-9)
      throw ConfigError("sequence.delta_theta_deg", "inconsistent with sequence.t_p_ns");
    q.delta_theta_deg = dth;
  } else {
    if (!q.delta_theta_deg) q.delta_theta_deg = 0.0;
    q.t_p_ns = t_p0 * (1.0 + *q.delta_theta_deg / 180.0);
  }
  if (!(std::abs(*q.delta_theta_deg) < 180.0)) throw ConfigError("sequence.delta_theta_deg", "|delta_theta| must be < 180 deg");

  const bool needs_system = !(cfg.command == "nv-frequency" || cfg.command == "parse");
  if (needs_system) {
    const SpinSystem s = to_system(cfg);
    const PulseTiming timing{units::ns(t_p0), q.instantaneous};
    if (q.family == "polcpmg" && !q.tau_ns) {
      RunConfig tmp = cfg;
      tmp.sequence.tau_ns = units::to_ns(tau_zero(s));
      SpinSystem s0 = s;
      s0.detuning = 0.0;
      s0.rabi_error = 0.0;
      try {
        q.tau_ns = units::to_ns(resonance_tau(to_geometry(tmp), s0, to_branch(q.branch, "sequence.branch")));
      } catch (const ResonanceNotFound& ex) {
        throw ConfigError("sequence.tau_ns", ex.what());
      }
    }
    if (q.family == "pulsepol") {
      if (!q.tau_ns) q.tau_ns = units::to_ns(3.0 * kPi / s.larmor);
      if (!q.repetitions) q.repetitions = calibrate_pulsepol(s, units::ns(*q.tau_ns), timing);
    }
    if (q.family == "novel") {
      if (!q.lock_rabi_mhz) q.lock_rabi_mhz = *sys.larmor_mhz;
      if (!q.lock_us) q.lock_us = units::to_us(calibrate_novel(s, units::mhz(*q.lock_rabi_mhz), timing));
    }
  }
  if (cfg.output.prefix.empty()) cfg.output.prefix = cfg.command.empty() ? "run" : cfg.command;
  return cfg;
}

json dump_config(const RunConfig& cfg) {
  auto opt = [](const auto& o) -> json { return o ? json(*o) : json(nullptr); };
  json j;
  j["schema_version"] = RunConfig::kSchemaVersion;
  j["command"] = cfg.command;
  const auto& s = cfg.system;
  j["system"] = {{"larmor_mhz", opt(s.larmor_mhz)}, {"a_perp_khz", s.a_perp_khz},
                 {"a_perp_list_khz", s.a_perp_list_khz}, {"a_par_khz", s.a_par_khz},
                 {"rabi_mhz", s.rabi_mhz},         {"detuning_mhz", opt(s.detuning_mhz)},
                 {"rabi_error", s.rabi_error},     {"phase_error_deg", s.phase_error_deg}};
  if (cfg.nv)
    j["nv"] = {{"field_gauss", cfg.nv->field_gauss},
               {"zero_field_mhz", cfg.nv->zero_field_mhz},
               {"gamma_mhz_per_gauss", cfg.nv->gamma_mhz_per_gauss},
               {"drive_mhz", opt(cfg.nv->drive_mhz)}};
  const auto& e = cfg.ensemble;
  json lines = json::array();
  for (const auto& l : e.lines) lines.push_back({{"offset_mhz", l.offset_mhz}, {"weight", l.weight}});
  j["ensemble"] = {{"preset", e.preset},         {"lines", lines}, {"fwhm_mhz", opt(e.fwhm_mhz)},
                   {"nodes", opt(e.nodes)}, {"n14_mapping", e.n14_mapping}};
  const auto& q = cfg.sequence;
  j["sequence"] = {{"family", q.family},
                   {"t_p_ns", opt(q.t_p_ns)},
                   {"t_p0_ns", opt(q.t_p0_ns)},
                   {"delta_theta_deg", opt(q.delta_theta_deg)},
                   {"tau_ns", opt(q.tau_ns)},
                   {"n_pulses", q.n_pulses},
                   {"cycles", q.cycles},
                   {"branch", q.branch},
                   {"instantaneous", q.instantaneous},
                   {"init", q.init},
                   {"nuclear", q.nuclear},
                   {"repetitions", opt(q.repetitions)},
                   {"lock_rabi_mhz", opt(q.lock_rabi_mhz)},
                   {"lock_us", opt(q.lock_us)},
                   {"text", opt(q.text)},
                   {"periodic", q.periodic}};
  const auto& c = cfg.scan;
  json scan = {{"mode", c.mode},
               {"n_list", c.n_list},
               {"protocols", c.protocols},
               {"panels", c.panels},
               {"t_max_us", c.t_max_us},
               {"nx", c.nx},
               {"ny", c.ny},
               {"field", c.field},
               {"sensitivity_step_mhz", c.sensitivity_step_mhz},
               {"half_width_step_mhz", c.half_width_step_mhz},
               {"unperturbed", c.unperturbed}};
  // Empty grids are omitted; an explicit empty array is a load error.
  auto put_grid = [&](const char* key, const std::vector<double>& g) {
    if (!g.empty()) scan[key] = g;
  };
  put_grid("tau_ns", c.tau_ns);
  put_grid("t_p_ns", c.t_p_ns);
  put_grid("detuning_mhz", c.detuning_mhz);
  put_grid("rabi_error", c.rabi_error);
  put_grid("phase_error_deg", c.phase_error_deg);
  put_grid("theta_deg", c.theta_deg);
  put_grid("t_us", c.t_us);
  j["scan"] = scan;
  j["output"] = {{"directory", cfg.output.directory}, {"format", cfg.output.format}, {"prefix", cfg.output.prefix}};
  return j;
}

}  // namespace polcpmg
