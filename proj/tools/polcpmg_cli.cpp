// polcpmg: command-line front end for the simulator library.
#include "polcpmg/config.hpp"
#include "polcpmg/experiments.hpp"
#include "polcpmg/units.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace polcpmg;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string format;
  unsigned threads = 0;
  std::string sequence_file;
};

class Writer {
 public:
  Writer(const RunConfig& cfg, const Options& opt) : cfg_(cfg) {
    dir_ = opt.out.empty() ? fs::path(cfg.output.directory) : fs::path(opt.out);
    fmt_ = parse_format(opt.format.empty() ? cfg.output.format : opt.format);
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) throw std::runtime_error("cannot create output directory '" + dir_.string() + "'");
  }

  void write(const ScanResult& r, const std::string& suffix = "") {
    const std::string stem = cfg_.output.prefix + (suffix.empty() ? "" : "_" + suffix);
    const fs::path p = dir_ / (stem + format_extension(fmt_));
    write_scan(r, p, fmt_);
    files_.push_back(p.filename().string());
    std::cout << "wrote " << p.string() << "\n";
  }

  void manifest(double seconds, const json& extra = json::object()) const {
    json m = {{"schema_version", RunConfig::kSchemaVersion},
              {"command", cfg_.command},
              {"resolved_config", dump_config(cfg_)},
              {"outputs", files_},
              {"format", fmt_ == OutputFormat::Csv ? "csv" : "json"},
              {"runtime_s", seconds}};
    if (!extra.empty()) m["summary"] = extra;
    const fs::path p = dir_ / (cfg_.output.prefix + "_manifest.json");
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
    os << m.dump(2) << "\n";
    if (!os) throw std::runtime_error("write failed for '" + p.string() + "'");
    std::cout << "wrote " << p.string() << "\n";
  }

 private:
  const RunConfig& cfg_;
  fs::path dir_;
  OutputFormat fmt_;
  std::vector<std::string> files_;
};

RunConfig load_for(const Options& opt, const std::string& command) {
  if (opt.config.empty()) throw ConfigError("", "--config is required for '" + command + "'");
  RunConfig cfg = load_config_file(opt.config);
  if (!cfg.command.empty() && cfg.command != command)
    throw ConfigError("command", "config is for '" + cfg.command + "', not '" + command + "'");
  cfg.command = command;
  if (!opt.out.empty()) cfg.output.directory = opt.out;
  if (!opt.format.empty()) cfg.output.format = opt.format;
  return resolve(cfg);
}

std::vector<double> seconds_from_ns(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v) out.push_back(units::ns(x));
  return out;
}

std::vector<double> omegas_from_khz(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v) out.push_back(units::khz(x));
  return out;
}

std::vector<double> omegas_from_mhz(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v) out.push_back(units::mhz(x));
  return out;
}

void require_grid(const std::vector<double>& g, const std::string& path) {
  if (g.empty()) throw ConfigError(path, "scan grid is empty");
}

QubitOperator nuclear_state(const std::string& s) {
  QubitOperator n = QubitOperator::Identity() / 2.0;
  if (s == "up") n = basis::up() * basis::up().adjoint();
  if (s == "down") n = basis::down() * basis::down().adjoint();
  return n;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- subcommands ------------------------------------------------------------

int cmd_resonances(const Options& opt) {
  const RunConfig cfg = load_for(opt, "resonances");
  const SpinSystem sys = to_system(cfg);
  SpinSystem s0 = sys;
  s0.detuning = 0.0;
  s0.rabi_error = 0.0;
  const PulseGeometry g = to_geometry(cfg);
  const ResonancePair an = resonance_positions(g, s0, ResonanceMethod::Analytic);
  const ResonancePair nu = resonance_positions(g, sys, ResonanceMethod::Numeric);
  json branches = json::object();
  for (Branch b : {Branch::Plus, Branch::Minus}) {
    const double tau = b == Branch::Plus ? nu.tau_plus : nu.tau_minus;
    const RateResult r = polarisation_rate(g.with_tau(tau), sys, b);
    branches[b == Branch::Plus ? "plus" : "minus"] = {
        {"tau_analytic_ns", units::to_ns(b == Branch::Plus ? an.tau_plus : an.tau_minus)},
        {"tau_numeric_ns", units::to_ns(tau)},
        {"rate", r.rate},
        {"g", r.g},
        {"t_pol_us", units::to_us(r.t_pol)},
        {"t_pol_closed_form_us", units::to_us(analytic_tpol_polcpmg(sys, g.delta_theta, b))}};
  }
  const json out = {{"tau0_ns", units::to_ns(tau_zero(sys))},
                    {"t_p_ns", units::to_ns(g.t_p)},
                    {"delta_theta_deg", units::to_deg(g.delta_theta)},
                    {"detuning_mhz", units::to_mhz(sys.detuning)},
                    {"branches", branches}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_spectrum(const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = load_for(opt, "spectrum");
  const SpinSystem sys = to_system(cfg);
  const DetuningEnsemble ens = to_ensemble(cfg);
  Writer w(cfg, opt);
  const auto& sc = cfg.scan;
  require_grid(sc.tau_ns, "scan.tau_ns");
  const std::vector<double> tau = seconds_from_ns(sc.tau_ns);

  if (sc.mode.empty() || sc.mode == "tau") {
    const ProtocolRun run = to_protocol(cfg);
    if (run.family != Family::PolCPMG) throw ConfigError("sequence.family", "spectrum needs a polcpmg sequence");
    const std::size_t nt = tau.size();
    auto rows = parallel_map(nt, opt.threads, [&](std::size_t k) {
      return average_over_ensemble(ens, sys, [&](const SpinSystem& s) {
        const CoherencePoint c = coherence_point(run.geom.with_tau(tau[k]), run.pulses, s, run.nuclear_init);
        Eigen::Vector4d v(c.coherence, c.p0_half, c.p0_three_half, c.signal);
        return v;
      });
    });
    ScanResult r({{"tau", "ns", sc.tau_ns}},
                 {{"coherence", ""}, {"p0_half", ""}, {"p0_three_half", ""}, {"signal", ""}});
    for (std::size_t k = 0; k < nt; ++k)
      for (int f = 0; f < 4; ++f) r.at(k, f) = rows[k](f);
    r.meta = {{"observable", "coherence_spectrum"},
              {"n_pulses", run.pulses},
              {"delta_theta_deg", *cfg.sequence.delta_theta_deg},
              {"instantaneous", run.geom.instantaneous},
              {"ensemble_nodes", ens.nodes().size()}};
    w.write(r);
  } else if (sc.mode == "tp_tau") {
    require_grid(sc.t_p_ns, "scan.t_p_ns");
    std::vector<json> panels = sc.panels;
    if (panels.empty())
      panels.push_back({{"r_pol", 0}, {"pol_branch", "plus"}, {"pol_pulses", cfg.sequence.n_pulses}, {"nuclear", "mixed"}});
    for (std::size_t i = 0; i < panels.size(); ++i) {
      TpTauScan scan;
      scan.t_p = seconds_from_ns(sc.t_p_ns);
      scan.tau = tau;
      scan.n_pulses = cfg.sequence.n_pulses;
      scan.r_pol = panels[i].at("r_pol").get<int>();
      scan.pol_branch = to_branch(panels[i].at("pol_branch").get<std::string>(), "scan.panels");
      scan.pol_pulses = panels[i].at("pol_pulses").get<int>();
      scan.nuclear = nuclear_state(panels[i].at("nuclear").get<std::string>());
      scan.a_perp_list = omegas_from_khz(cfg.system.a_perp_list_khz);
      scan.instantaneous = cfg.sequence.instantaneous;
      scan.threads = opt.threads;
      w.write(scan_tp_tau(sys, ens, scan), panels.size() > 1 ? "panel" + std::to_string(i) : "");
    }
  } else {
    throw ConfigError("scan.mode", "spectrum mode must be 'tau' or 'tp_tau'");
  }
  w.manifest(elapsed(t0));
  return 0;
}

int cmd_floquet(const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = load_for(opt, "floquet");
  const SpinSystem sys = to_system(cfg);
  Writer w(cfg, opt);
  require_grid(cfg.scan.tau_ns, "scan.tau_ns");
  const std::vector<double> tau = seconds_from_ns(cfg.scan.tau_ns);
  const ProtocolRun run = to_protocol(cfg);

  UnitBuilder unit;
  if (run.family == Family::PolCPMG) {
    const PulseGeometry g = run.geom;
    if (g.t_p > tau.front()) throw ConfigError("scan.tau_ns", "grid starts below the pulse duration");
    unit = [g](double t) { return make_cpmg_unit(g.with_tau(t)); };
  } else if (run.family == Family::Custom) {
    throw ConfigError("sequence.family", "floquet over tau needs a polcpmg sequence");
  } else {
    throw ConfigError("sequence.family", "floquet supports polcpmg sequences only");
  }
  const FloquetSpectrum spec = floquet_spectrum(unit, sys, tau);
  std::vector<ScanField> fields = {{"eps_0", "rad"}, {"eps_1", "rad"}, {"eps_2", "rad"}, {"eps_3", "rad"}};
  std::optional<FloquetSpectrum> bare;
  if (cfg.scan.unperturbed) {
    bare = unperturbed_spectrum(run.geom, sys, tau);
    for (const char* n : {"bare_xp_up", "bare_xp_down", "bare_xm_up", "bare_xm_down"}) fields.push_back({n, "rad"});
  }
  ScanResult r({{"tau", "ns", cfg.scan.tau_ns}}, fields);
  for (std::size_t k = 0; k < tau.size(); ++k) {
    for (int b = 0; b < 4; ++b) r.at(k, b) = spec.phases[k][b];
    if (bare)
      for (int b = 0; b < 4; ++b) r.at(k, 4 + b) = bare->phases[k][b];
  }
  json crossings = json::array();
  for (const auto& c : detect_avoided_crossings(spec))
    crossings.push_back({{"tau_ns", units::to_ns(c.tau)}, {"gap_rad", c.gap}, {"branch_a", c.branch_a}, {"branch_b", c.branch_b}});
  const ResonancePair an = resonance_positions(run.geom, sys, ResonanceMethod::Analytic);
  r.meta = {{"observable", "floquet_spectrum"},
            {"delta_theta_deg", *cfg.sequence.delta_theta_deg},
            {"crossings", crossings},
            {"tau_plus_analytic_ns", units::to_ns(an.tau_plus)},
            {"tau_minus_analytic_ns", units::to_ns(an.tau_minus)}};
  w.write(r);
  w.manifest(elapsed(t0), {{"crossings", crossings}});
  return 0;
}

int cmd_polarize(const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = load_for(opt, "polarize");
  const SpinSystem sys = to_system(cfg);
  const DetuningEnsemble ens = to_ensemble(cfg);
  Writer w(cfg, opt);
  const auto& sc = cfg.scan;
  const auto& q = cfg.sequence;

  if (sc.mode == "time") {
    PolarisationVsTime p;
    p.n_list = sc.n_list.empty() ? std::vector<int>{q.n_pulses} : sc.n_list;
    p.delta_theta = units::deg(*q.delta_theta_deg);
    p.branch = to_branch(q.branch, "sequence.branch");
    p.t_max = units::us(sc.t_max_us);
    for (double t : sc.t_us) p.t_grid.push_back(units::us(t));
    if (p.t_grid.empty() && !(p.t_max > 0.0)) throw ConfigError("scan.t_max_us", "needs t_max_us > 0 or a t_us grid");
    p.instantaneous = q.instantaneous;
    p.a_perp_list = omegas_from_khz(cfg.system.a_perp_list_khz);
    p.threads = opt.threads;
    const ScanResult r = polarisation_vs_time(sys, ens, p);
    w.write(r);
    w.manifest(elapsed(t0), r.meta.value("per_n", json()));
  } else if (sc.mode == "delta_theta") {
    require_grid(sc.theta_deg, "scan.theta_deg");
    PolarisationVsDeltaTheta p;
    for (double d : sc.theta_deg) p.theta_grid.push_back(units::deg(d));
    p.n_pulses = q.n_pulses;
    p.cycles = q.cycles;
    p.a_perp_list = omegas_from_khz(cfg.system.a_perp_list_khz);
    p.instantaneous = q.instantaneous;
    p.threads = opt.threads;
    w.write(polarisation_vs_delta_theta(sys, ens, p));
    w.manifest(elapsed(t0));
  } else if (sc.mode.empty() || sc.mode == "protocol") {
    const ProtocolRun run = to_protocol(cfg);
    const double cycle = run.cycle_duration();
    std::vector<double> hist;
    for (double p : average_over_ensemble(ens, sys, [&](const SpinSystem& s) {
           const auto v = run_polarisation_protocol(run, s).polarisation;
           return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))).eval();
         }))
      hist.push_back(p);
    std::vector<double> cycles;
    for (std::size_t k = 0; k < hist.size(); ++k) cycles.push_back(static_cast<double>(k));
    ScanResult r({{"cycle", "", cycles}}, {{"polarisation", ""}, {"time", "us"}});
    for (std::size_t k = 0; k < hist.size(); ++k) {
      r.at(k, 0) = hist[k];
      r.at(k, 1) = units::to_us(cycle * static_cast<double>(k));
    }
    r.meta = {{"observable", "protocol_history"}, {"family", q.family}, {"cycle_duration_us", units::to_us(cycle)}};
    w.write(r);
    w.manifest(elapsed(t0), {{"final_polarisation", hist.back()}});
  } else {
    throw ConfigError("scan.mode", "polarize mode must be 'protocol', 'time' or 'delta_theta'");
  }
  return 0;
}

ProtocolNominal nominal_from_config(const RunConfig& cfg, const SpinSystem& sys) {
  ProtocolNominal nom;
  nom.run = to_protocol(cfg);
  nom.run.cycles = 1;
  nom.family = nom.run.family;
  SpinSystem s0 = sys;
  s0.detuning = 0.0;
  s0.rabi_error = 0.0;
  s0.phase_error = 0.0;
  nom.branch_sign = single_cycle_polarisation(nom, s0) >= 0.0 ? 1.0 : -1.0;
  return nom;
}

int cmd_robustness(const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = load_for(opt, "robustness");
  const SpinSystem sys = to_system(cfg);
  Writer w(cfg, opt);
  const auto& sc = cfg.scan;

  if (sc.mode.empty() || sc.mode == "map") {
    require_grid(sc.detuning_mhz, "scan.detuning_mhz");
    const ProtocolNominal nom = nominal_from_config(cfg, sys);
    RobustnessScan rs;
    rs.detuning = omegas_from_mhz(sc.detuning_mhz);
    rs.rabi_error = sc.rabi_error.empty() ? std::vector<double>{0.0} : sc.rabi_error;
    for (double d : sc.phase_error_deg) rs.phase_error.push_back(units::deg(d));
    if (rs.phase_error.empty()) rs.phase_error = {0.0};
    rs.threads = opt.threads;
    const RobustnessMaps m = robustness_map(nom, sys, rs);
    w.write(m.detuning_power, "detuning_power");
    w.write(m.phase, "phase");
    const double hw = robustness_half_width(nom, sys, units::mhz(sc.half_width_step_mhz));
    w.manifest(elapsed(t0), {{"branch_sign", nom.branch_sign}, {"half_width_mhz", units::to_mhz(hw)}});
  } else if (sc.mode == "owp") {
    require_grid(sc.theta_deg, "scan.theta_deg");
    require_grid(sc.detuning_mhz, "scan.detuning_mhz");
    require_grid(sc.tau_ns, "scan.tau_ns");
    OwpScan o;
    for (double d : sc.theta_deg) o.theta_list.push_back(units::deg(d));
    o.detuning = omegas_from_mhz(sc.detuning_mhz);
    o.tau = seconds_from_ns(sc.tau_ns);
    o.n_pulses = cfg.sequence.n_pulses;
    o.sensitivity_step = units::mhz(sc.sensitivity_step_mhz);
    o.threads = opt.threads;
    const ScanResult r = optimal_working_point_map(sys, o);
    w.write(r);
    w.manifest(elapsed(t0), r.meta.value("sensitivity", json()));
  } else if (sc.mode == "comparison") {
    std::vector<Family> fams;
    for (const auto& p : sc.protocols) fams.push_back(parse_family(p));
    if (fams.empty()) fams = {Family::Novel, Family::PulsePol, Family::PolCPMG};
    const ScanResult r = comparison_table(protocol_comparison(sys, fams, units::mhz(sc.half_width_step_mhz)));
    w.write(r);
    w.manifest(elapsed(t0));
  } else {
    throw ConfigError("scan.mode", "robustness mode must be 'map', 'owp' or 'comparison'");
  }
  return 0;
}

int cmd_map(const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = load_for(opt, "map");
  const SpinSystem sys = to_system(cfg);
  Writer w(cfg, opt);
  const auto& sc = cfg.scan;
  const GradientField field = sc.field == "linear"
                                  ? GradientField::linear_preset(sc.nx, sc.ny)
                                  : GradientField::uniform(sc.nx, sc.ny, sys.detuning, sys.rabi_error);
  SpinSystem base = sys;
  base.detuning = 0.0;
  base.rabi_error = 0.0;
  const ProtocolNominal nom = nominal_from_config(cfg, base);
  ProtocolRun run = nom.run;
  run.cycles = cfg.sequence.cycles;
  const ScanResult r = spatial_polarisation_map(field, base, run, nom.branch_sign, opt.threads);
  std::size_t above = 0;
  for (double p : r.column("signed_polarisation")) above += p > 0.8 ? 1 : 0;
  const double frac = static_cast<double>(above) / static_cast<double>(r.cell_count());
  w.write(r);
  w.manifest(elapsed(t0), {{"fraction_above_0.8", frac}, {"orientation", nom.branch_sign}});
  return 0;
}

int cmd_nv_frequency(const Options& opt) {
  const RunConfig cfg = load_for(opt, "nv-frequency");
  if (!cfg.nv) throw ConfigError("nv", "nv-frequency needs an nv block");
  const double f = nv_frequency_mhz(*cfg.nv);
  json out = {{"field_gauss", cfg.nv->field_gauss},
              {"zero_field_mhz", cfg.nv->zero_field_mhz},
              {"gamma_mhz_per_gauss", cfg.nv->gamma_mhz_per_gauss},
              {"omega_nv_mhz", f}};
  if (cfg.nv->drive_mhz) out["detuning_mhz"] = f - *cfg.nv->drive_mhz;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_parse(const Options& opt) {
  std::string text;
  if (!opt.sequence_file.empty()) {
    std::ifstream is(opt.sequence_file);
    if (!is) throw std::runtime_error("cannot open sequence file '" + opt.sequence_file + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    text = ss.str();
  } else {
    const RunConfig cfg = load_for(opt, "parse");
    if (!cfg.sequence.text) throw ConfigError("sequence.text", "required field is missing");
    text = *cfg.sequence.text;
  }
  const PulseSequence seq = parse_sequence(text);
  seq.validate();
  const json out = {{"segments", seq.segments.size()},
                    {"drives", seq.drive_count()},
                    {"duration_ns", units::to_ns(seq.total_duration())},
                    {"normalised", serialize_sequence(seq)}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PolCPMG dynamical-decoupling simulator"};
  app.require_subcommand(1);
  Options opt;

  struct Cmd {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Cmd cmds[] = {
      {"resonances", "print tau0, tau+/- and transfer rates", cmd_resonances},
      {"spectrum", "coherence spectrum over tau or (t_p, tau)", cmd_spectrum},
      {"floquet", "Floquet eigenphases over tau", cmd_floquet},
      {"polarize", "nuclear polarisation build-up", cmd_polarize},
      {"robustness", "error maps, working point and protocol comparison", cmd_robustness},
      {"map", "spatial polarisation map under field gradients", cmd_map},
      {"nv-frequency", "print |D - gamma_e B|", cmd_nv_frequency},
      {"parse", "validate a pulse sequence file", cmd_parse},
  };
  int (*chosen)(const Options&) = nullptr;
  for (const auto& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", opt.config, "run configuration (JSON)");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--format", opt.format, "output format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--threads", opt.threads, "worker threads (0 = all cores)");
    if (std::string(c.name) == "parse") sub->add_option("file", opt.sequence_file, "sequence text file");
    sub->callback([&chosen, fn = c.fn] { chosen = fn; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return chosen(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const SequenceParseError& e) {
    std::cerr << "sequence error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
