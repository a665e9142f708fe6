#include "polcpmg/experiments.hpp"

#include "polcpmg/units.hpp"

#include <cmath>
#include <sstream>

namespace polcpmg {

using units::kPi;

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = a;
    return v;
  }
  for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

namespace {

void require_monotone(const std::vector<double>& g, const char* what) {
  if (g.empty()) throw std::invalid_argument(std::string(what) + ": grid is empty");
  for (std::size_t i = 1; i < g.size(); ++i)
    if (!(g[i] > g[i - 1])) throw std::invalid_argument(std::string(what) + ": grid is not strictly increasing");
}

SpinSystem nominal_system(SpinSystem s) {
  s.detuning = 0.0;
  s.rabi_error = 0.0;
  s.phase_error = 0.0;
  return s;
}

ScanAxis ns_axis(const char* name, const std::vector<double>& seconds) {
  ScanAxis a{name, "ns", {}};
  for (double t : seconds) a.values.push_back(units::to_ns(t));
  return a;
}

ScanAxis mhz_axis(const char* name, const std::vector<double>& omegas) {
  ScanAxis a{name, "MHz", {}};
  for (double w : omegas) a.values.push_back(units::to_mhz(w));
  return a;
}

PulseGeometry geometry_for(double delta_theta, double t_p0, double tau, bool instantaneous) {
  return instantaneous ? PulseGeometry::instantaneous_pulses(delta_theta, t_p0, tau)
                       : PulseGeometry::from_delta_theta(delta_theta, t_p0, tau);
}

const char* branch_name(Branch b) { return b == Branch::Plus ? "plus" : "minus"; }

nlohmann::json ensemble_meta(const DetuningEnsemble& ens) {
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& l : ens.lines) lines.push_back({{"offset_mhz", units::to_mhz(l.offset)}, {"weight", l.weight}});
  return {{"lines", lines},
          {"fwhm_mhz", units::to_mhz(ens.broadening_fwhm)},
          {"samples_per_line", ens.samples_per_line}};
}

nlohmann::json bath_meta(const std::vector<double>& a_perp) {
  nlohmann::json j = nlohmann::json::array();
  for (double a : a_perp) j.push_back(units::to_khz(a));
  return j;
}

nlohmann::json system_meta(const SpinSystem& s) {
  return {{"larmor_mhz", units::to_mhz(s.larmor)},     {"a_perp_khz", units::to_khz(s.a_perp)},
          {"a_par_khz", units::to_khz(s.a_par)},       {"rabi_mhz", units::to_mhz(s.rabi_nominal)},
          {"detuning_mhz", units::to_mhz(s.detuning)}, {"rabi_error", s.rabi_error},
          {"phase_error_deg", units::to_deg(s.phase_error)}};
}

// Polarisation for a CPMG-type run (mixed nucleus unless the run says otherwise).
ProtocolRun polcpmg_run(const PulseGeometry& g, int n, int cycles) {
  ProtocolRun run;
  run.family = Family::PolCPMG;
  run.geom = g;
  run.pulses = n;
  run.cycles = cycles;
  return run;
}

double parabola_vertex(double ym, double y0, double yp) {
  const double den = ym - 2.0 * y0 + yp;
  if (den == 0.0) return 0.0;
  return std::clamp(0.5 * (ym - yp) / den, -0.5, 0.5);
}

}  // namespace

ScanResult scan_tp_tau(const SpinSystem& sys, const DetuningEnsemble& ens, const TpTauScan& scan) {
  require_monotone(scan.t_p, "scan_tp_tau t_p");
  require_monotone(scan.tau, "scan_tp_tau tau");
  ens.validate();
  const double t_p0 = sys.nominal_pi_duration();
  const SpinSystem nominal = nominal_system(sys);
  const std::size_t nt = scan.tau.size();

  auto rows = parallel_map(scan.t_p.size(), scan.threads, [&](std::size_t i) {
    const double dtheta = kPi * (scan.t_p[i] - t_p0) / t_p0;
    const PulseGeometry base = geometry_for(dtheta, t_p0, std::max(scan.tau.back(), scan.t_p[i]), scan.instantaneous);
    double tau_pol = 0.0;
    if (scan.r_pol > 0) tau_pol = resonance_tau(base, nominal, scan.pol_branch);
    return average_over_bath(scan.a_perp_list, ens, sys, [&](const SpinSystem& s) {
      QubitOperator nuclear = scan.nuclear;
      if (scan.r_pol > 0) {
        ProtocolRun run = polcpmg_run(base.with_tau(tau_pol), scan.pol_pulses, scan.r_pol);
        run.nuclear_init = scan.nuclear;
        nuclear = run_polarisation_protocol(run, s).nuclear;
      }
      Eigen::VectorXd sig(nt);
      for (std::size_t k = 0; k < nt; ++k)
        sig(k) = coherence_point(base.with_tau(scan.tau[k]), scan.n_pulses, s, nuclear).signal;
      return sig;
    });
  });

  ScanResult r({ns_axis("t_p", scan.t_p), ns_axis("tau", scan.tau)}, {{"signal", ""}});
  nlohmann::json overlay = {{"t_p_ns", nlohmann::json::array()},
                            {"tau_minus_ns", nlohmann::json::array()},
                            {"tau_plus_ns", nlohmann::json::array()}};
  for (std::size_t i = 0; i < scan.t_p.size(); ++i) {
    for (std::size_t k = 0; k < nt; ++k) r.at(i * nt + k, 0) = rows[i](k);
    const double dtheta = kPi * (scan.t_p[i] - t_p0) / t_p0;
    const double tau0 = tau_zero(sys);
    overlay["t_p_ns"].push_back(units::to_ns(scan.t_p[i]));
    overlay["tau_minus_ns"].push_back(units::to_ns(tau0 * (1.0 - dtheta / kPi)));
    overlay["tau_plus_ns"].push_back(units::to_ns(tau0 * (1.0 + dtheta / kPi)));
  }
  r.meta = {{"observable", "scan_tp_tau"},
            {"system", system_meta(sys)},
            {"ensemble", ensemble_meta(ens)},
            {"n_pulses", scan.n_pulses},
            {"r_pol", scan.r_pol},
            {"a_perp_list_khz", bath_meta(scan.a_perp_list)},
            {"pol_branch", branch_name(scan.pol_branch)},
            {"pol_pulses", scan.pol_pulses},
            {"nuclear_up_population", scan.nuclear(0, 0).real()},
            {"instantaneous", scan.instantaneous},
            {"deterministic", true},
            {"overlay", overlay}};
  return r;
}

ScanResult polarisation_vs_time(const SpinSystem& sys, const DetuningEnsemble& ens, const PolarisationVsTime& cfg) {
  if (cfg.n_list.empty()) throw std::invalid_argument("polarisation_vs_time: empty N list");
  std::vector<double> t_grid = cfg.t_grid.empty() ? linspace(0.0, cfg.t_max, 51) : cfg.t_grid;
  require_monotone(t_grid, "polarisation_vs_time T");
  const double t_max = std::max(cfg.t_max, t_grid.back());
  if (!(t_max > 0.0)) throw std::invalid_argument("polarisation_vs_time: t_max must be > 0");
  ens.validate();
  const double t_p0 = sys.nominal_pi_duration();
  const SpinSystem nominal = nominal_system(sys);
  const PulseGeometry g0 = geometry_for(cfg.delta_theta, t_p0, tau_zero(sys), cfg.instantaneous);
  const double tau = resonance_tau(g0, nominal, cfg.branch);
  const PulseGeometry g = g0.with_tau(tau);

  struct Curve {
    std::vector<double> p;  // per cycle
    double cycle_time;
  };
  auto curves = parallel_map(cfg.n_list.size(), cfg.threads, [&](std::size_t i) {
    const int n = cfg.n_list[i];
    ProtocolRun run = polcpmg_run(g, n, 0);
    const double tc = run.cycle_duration();
    run.cycles = static_cast<int>(std::floor(t_max / tc + 1e-9));
    Eigen::VectorXd hist = average_over_bath(cfg.a_perp_list, ens, sys, [&](const SpinSystem& s) {
      const auto res = run_polarisation_protocol(run, s);
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(res.polarisation.data(), res.polarisation.size()));
    });
    return Curve{std::vector<double>(hist.data(), hist.data() + hist.size()), tc};
  });

  ScanAxis n_axis{"N", "", {}};
  for (int n : cfg.n_list) n_axis.values.push_back(n);
  ScanAxis t_axis{"T", "us", {}};
  for (double t : t_grid) t_axis.values.push_back(units::to_us(t));
  ScanResult r({n_axis, t_axis}, {{"polarisation", ""}, {"cycles", ""}});
  nlohmann::json per_n = nlohmann::json::array();
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
      const std::size_t rr = std::min<std::size_t>(static_cast<std::size_t>(std::floor(t_grid[k] / c.cycle_time + 1e-9)),
                                                   c.p.size() - 1);
      r.at(i * t_grid.size() + k, 0) = c.p[rr];
      r.at(i * t_grid.size() + k, 1) = static_cast<double>(rr);
    }
    const double sat = c.p.back();
    double t_e = -1.0;
    for (std::size_t k = 0; k < c.p.size(); ++k)
      if (std::abs(c.p[k]) >= (1.0 - std::exp(-1.0)) * std::abs(sat) && sat != 0.0) {
        t_e = k * c.cycle_time;
        break;
      }
    per_n.push_back({{"N", cfg.n_list[i]},
                     {"saturation", sat},
                     {"one_over_e_time_us", t_e < 0 ? nlohmann::json(nullptr) : nlohmann::json(units::to_us(t_e))},
                     {"cycle_time_us", units::to_us(c.cycle_time)},
                     {"initial_rate_per_ms", c.p.size() > 1 ? (c.p[1] - c.p[0]) / (c.cycle_time * 1e3) : 0.0}});
  }
  r.meta = {{"observable", "polarisation_vs_time"},
            {"system", system_meta(sys)},
            {"ensemble", ensemble_meta(ens)},
            {"delta_theta_deg", units::to_deg(cfg.delta_theta)},
            {"branch", branch_name(cfg.branch)},
            {"a_perp_list_khz", bath_meta(cfg.a_perp_list)},
            {"tau_ns", units::to_ns(tau)},
            {"instantaneous", cfg.instantaneous},
            {"per_n", per_n},
            {"deterministic", true}};
  return r;
}

ScanResult polarisation_vs_delta_theta(const SpinSystem& sys, const DetuningEnsemble& ens,
                                       const PolarisationVsDeltaTheta& cfg) {
  require_monotone(cfg.theta_grid, "polarisation_vs_delta_theta");
  ens.validate();
  const double t_p0 = sys.nominal_pi_duration();
  const SpinSystem nominal = nominal_system(sys);
  auto rows = parallel_map(cfg.theta_grid.size(), cfg.threads, [&](std::size_t i) {
    std::array<double, 4> out{};
    const PulseGeometry g0 = geometry_for(cfg.theta_grid[i], t_p0, tau_zero(sys), cfg.instantaneous);
    int col = 0;
    for (Branch b : {Branch::Plus, Branch::Minus}) {
      const double tau = resonance_tau(g0, nominal, b);
      const ProtocolRun run = polcpmg_run(g0.with_tau(tau), cfg.n_pulses, cfg.cycles);
      out[col++] = average_over_bath(cfg.a_perp_list, ens, sys, [&](const SpinSystem& s) {
        return run_polarisation_protocol(run, s).polarisation.back();
      });
      out[col++] = tau;
    }
    return out;
  });
  ScanAxis ax{"delta_theta", "deg", {}};
  for (double t : cfg.theta_grid) ax.values.push_back(units::to_deg(t));
  ScanResult r({ax}, {{"p_plus", ""}, {"tau_plus", "ns"}, {"p_minus", ""}, {"tau_minus", "ns"}});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    r.at(i, 0) = rows[i][0];
    r.at(i, 1) = units::to_ns(rows[i][1]);
    r.at(i, 2) = rows[i][2];
    r.at(i, 3) = units::to_ns(rows[i][3]);
  }
  r.meta = {{"observable", "polarisation_vs_delta_theta"},
            {"system", system_meta(sys)},
            {"ensemble", ensemble_meta(ens)},
            {"n_pulses", cfg.n_pulses},
            {"cycles", cfg.cycles},
            {"a_perp_list_khz", bath_meta(cfg.a_perp_list)},
            {"instantaneous", cfg.instantaneous},
            {"deterministic", true}};
  return r;
}

double single_cycle_polarisation(const ProtocolNominal& nominal, const SpinSystem& sys) {
  ProtocolRun run = nominal.run;
  run.cycles = 1;
  return run_polarisation_protocol(run, sys).polarisation.back();
}

ProtocolNominal polcpmg_nominal(const SpinSystem& sys, double delta_theta, int n_pulses, Branch branch) {
  const SpinSystem s0 = nominal_system(sys);
  const double t_p0 = sys.nominal_pi_duration();
  const PulseGeometry g0 = PulseGeometry::from_delta_theta(delta_theta, t_p0, tau_zero(sys));
  ProtocolNominal nom;
  nom.family = Family::PolCPMG;
  nom.run = polcpmg_run(g0.with_tau(resonance_tau(g0, s0, branch)), n_pulses, 1);
  nom.branch_sign = single_cycle_polarisation(nom, s0) >= 0.0 ? 1.0 : -1.0;
  return nom;
}

double calibrate_novel(const SpinSystem& sys, double lock_rabi, const PulseTiming& timing) {
  const SpinSystem s0 = nominal_system(sys);
  if (!(s0.a_perp > 0.0)) throw std::invalid_argument("calibrate_novel: A_perp must be > 0");
  auto p = [&](double t) {
    ProtocolNominal n;
    n.family = Family::Novel;
    n.run.family = Family::Novel;
    n.run.geom.t_p0 = timing.t_p0;
    n.run.geom.instantaneous = timing.instantaneous;
    n.run.lock_rabi = lock_rabi;
    n.run.lock_duration = t;
    return single_cycle_polarisation(n, s0);
  };
  const double t0 = units::kTwoPi / s0.a_perp;
  double a = 0.5 * t0, b = 1.5 * t0;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = p(c), fd = p(d);
  while (b - a > 1e-12) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = p(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = p(d);
    }
  }
  return 0.5 * (a + b);
}

ProtocolNominal novel_nominal(const SpinSystem& sys) {
  const PulseTiming timing{sys.nominal_pi_duration(), false};
  ProtocolNominal nom;
  nom.family = Family::Novel;
  nom.run.family = Family::Novel;
  nom.run.geom.t_p0 = timing.t_p0;
  nom.run.lock_rabi = sys.larmor;
  nom.run.lock_duration = calibrate_novel(sys, sys.larmor, timing);
  nom.run.cycles = 1;
  nom.branch_sign = 1.0;
  return nom;
}

namespace {

std::vector<double> pulsepol_trajectory(const SpinSystem& sys, double tau, const PulseTiming& timing, int reps) {
  const Operator u = sequence_propagator(make_pulsepol(tau, 1, timing), sys);
  QubitOperator g = QubitOperator::Zero();
  g(0, 0) = 1.0;
  Operator rho = tensor(g, QubitOperator::Identity() / 2.0);
  std::vector<double> p{0.0};
  for (int k = 0; k < reps; ++k) {
    rho = u * rho * u.adjoint();
    p.push_back(observe(rho).polarisation);
  }
  return p;
}

std::size_t first_local_max(const std::vector<double>& p) {
  for (std::size_t k = 1; k + 1 < p.size(); ++k)
    if (p[k] >= p[k - 1] && p[k] > p[k + 1]) return k;
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace

int calibrate_pulsepol(const SpinSystem& sys, double tau, const PulseTiming& timing, int max_reps) {
  const auto p = pulsepol_trajectory(nominal_system(sys), tau, timing, max_reps);
  return static_cast<int>(std::max<std::size_t>(1, first_local_max(p)));
}

ProtocolNominal pulsepol_nominal(const SpinSystem& sys) {
  const PulseTiming timing{sys.nominal_pi_duration(), false};
  ProtocolNominal nom;
  nom.family = Family::PulsePol;
  nom.run.family = Family::PulsePol;
  nom.run.geom.t_p0 = timing.t_p0;
  nom.run.geom.tau = 3.0 * kPi / sys.larmor;
  nom.run.pulses = calibrate_pulsepol(sys, nom.run.geom.tau, timing);
  nom.run.cycles = 1;
  nom.branch_sign = 1.0;
  return nom;
}

ProtocolNominal nominal_for(Family f, const SpinSystem& sys) {
  switch (f) {
    case Family::PolCPMG: return polcpmg_nominal(sys, units::deg(30.0), 38, Branch::Plus);
    case Family::Novel: return novel_nominal(sys);
    case Family::PulsePol: return pulsepol_nominal(sys);
    case Family::Custom: break;
  }
  throw std::invalid_argument("no nominal working point for a custom sequence");
}

RobustnessMaps robustness_map(const ProtocolNominal& nominal, const SpinSystem& sys, const RobustnessScan& scan) {
  require_monotone(scan.detuning, "robustness detuning");
  require_monotone(scan.rabi_error, "robustness rabi_error");
  require_monotone(scan.phase_error, "robustness phase_error");
  const std::size_t nd = scan.detuning.size(), nr = scan.rabi_error.size();
  auto cells = parallel_map(nd * nr, scan.threads, [&](std::size_t c) {
    SpinSystem s = sys;
    s.detuning = sys.detuning + scan.detuning[c / nr];
    s.rabi_error = scan.rabi_error[c % nr];
    return single_cycle_polarisation(nominal, s);
  });
  auto phase = parallel_map(scan.phase_error.size(), scan.threads, [&](std::size_t i) {
    SpinSystem s = sys;
    s.phase_error = scan.phase_error[i];
    return single_cycle_polarisation(nominal, s);
  });
  RobustnessMaps out;
  ScanAxis dr{"rabi_error", "", scan.rabi_error};
  out.detuning_power = ScanResult({mhz_axis("detuning", scan.detuning), dr},
                                  {{"polarisation", ""}, {"signed_polarisation", ""}});
  for (std::size_t c = 0; c < cells.size(); ++c) {
    out.detuning_power.at(c, 0) = cells[c];
    out.detuning_power.at(c, 1) = nominal.branch_sign * cells[c];
  }
  ScanAxis pa{"phase_error", "deg", {}};
  for (double p : scan.phase_error) pa.values.push_back(units::to_deg(p));
  out.phase = ScanResult({pa}, {{"polarisation", ""}, {"signed_polarisation", ""}});
  for (std::size_t i = 0; i < phase.size(); ++i) {
    out.phase.at(i, 0) = phase[i];
    out.phase.at(i, 1) = nominal.branch_sign * phase[i];
  }
  const nlohmann::json meta = {{"observable", "robustness_map"},
                               {"protocol", family_name(nominal.family)},
                               {"system", system_meta(sys)},
                               {"branch_sign", nominal.branch_sign},
                               {"deterministic", true}};
  out.detuning_power.meta = meta;
  out.phase.meta = meta;
  return out;
}

double robustness_half_width(const ProtocolNominal& nominal, const SpinSystem& sys, double step, double threshold,
                             double limit) {
  if (!(step > 0.0)) throw std::invalid_argument("robustness_half_width: step must be > 0");
  double ok = -step;
  for (int k = 0; k * step <= limit; ++k) {
    bool pass = true;
    for (double sgn : {1.0, -1.0}) {
      SpinSystem s = sys;
      s.detuning = sys.detuning + sgn * k * step;
      if (nominal.branch_sign * single_cycle_polarisation(nominal, s) <= threshold) pass = false;
    }
    if (!pass) break;
    ok = k * step;
  }
  return ok;
}

double detuning_sensitivity(const PulseGeometry& geom, const SpinSystem& sys, Branch branch, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("detuning_sensitivity: h must be > 0");
  SpinSystem s0 = sys;
  s0.detuning = 0.0;
  SpinSystem sh = sys;
  sh.detuning = h;
  return std::abs(resonance_tau(geom, sh, branch) - resonance_tau(geom, s0, branch)) / h;
}

ScanResult optimal_working_point_map(const SpinSystem& sys, const OwpScan& scan) {
  if (scan.theta_list.empty()) throw std::invalid_argument("optimal_working_point_map: empty theta list");
  require_monotone(scan.detuning, "owp detuning");
  require_monotone(scan.tau, "owp tau");
  const double t_p0 = sys.nominal_pi_duration();
  const double h = scan.sensitivity_step > 0.0 ? scan.sensitivity_step : units::mhz(0.5);
  const std::size_t nth = scan.theta_list.size(), nd = scan.detuning.size(), nt = scan.tau.size();
  const QubitOperator mixed = QubitOperator::Identity() / 2.0;

  auto rows = parallel_map(nth * nd, scan.threads, [&](std::size_t c) {
    const double th = scan.theta_list[c / nd];
    SpinSystem s = sys;
    s.detuning = scan.detuning[c % nd];
    const PulseGeometry g = PulseGeometry::from_delta_theta(th, t_p0, std::max(scan.tau.back(), 2.0 * t_p0));
    std::vector<double> row(nt);
    for (std::size_t k = 0; k < nt; ++k) row[k] = coherence_point(g.with_tau(scan.tau[k]), scan.n_pulses, s, mixed).signal;
    return row;
  });

  ScanAxis th_axis{"delta_theta", "deg", {}};
  for (double t : scan.theta_list) th_axis.values.push_back(units::to_deg(t));
  ScanResult r({th_axis, mhz_axis("detuning", scan.detuning), ns_axis("tau", scan.tau)}, {{"signal", ""}});
  for (std::size_t c = 0; c < rows.size(); ++c)
    for (std::size_t k = 0; k < nt; ++k) r.at(c * nt + k, 0) = rows[c][k];

  nlohmann::json sens = nlohmann::json::array();
  for (double th : scan.theta_list) {
    const PulseGeometry g = PulseGeometry::from_delta_theta(th, t_p0, tau_zero(sys));
    nlohmann::json entry = {{"delta_theta_deg", units::to_deg(th)}};
    for (Branch b : {Branch::Plus, Branch::Minus}) {
      nlohmann::json roots = nlohmann::json::array();
      for (double dw : scan.detuning) {
        SpinSystem s = sys;
        s.detuning = dw;
        try {
          roots.push_back(units::to_ns(resonance_tau(g, s, b)));
        } catch (const ResonanceNotFound&) {
          roots.push_back(nullptr);
        }
      }
      const std::string key = branch_name(b);
      entry["roots_" + key + "_ns"] = roots;
      try {
        // ns per MHz
        entry["sensitivity_" + key + "_ns_per_mhz"] = detuning_sensitivity(g, sys, b, h) * 1e9 * units::mhz(1.0);
      } catch (const ResonanceNotFound&) {
        entry["sensitivity_" + key + "_ns_per_mhz"] = nullptr;
      }
    }
    sens.push_back(entry);
  }
  r.meta = {{"observable", "optimal_working_point_map"},
            {"system", system_meta(sys)},
            {"n_pulses", scan.n_pulses},
            {"sensitivity_step_mhz", units::to_mhz(h)},
            {"branches", sens},
            {"deterministic", true}};
  return r;
}

void GradientField::validate() const {
  if (x.empty() || y.empty()) throw std::invalid_argument("GradientField: empty pixel grid");
  if (!detuning_map || !rabi_map) throw std::invalid_argument("GradientField: maps not set");
  for (double yy : y)
    for (double xx : x)
      if (!std::isfinite(detuning_map(xx, yy)) || !std::isfinite(rabi_map(xx, yy)))
        throw std::invalid_argument("GradientField: non-finite map value");
}

GradientField GradientField::linear_preset(int nx, int ny) {
  constexpr double kSize = 30.0;  // µm
  GradientField f;
  f.x = linspace(0.0, kSize, static_cast<std::size_t>(nx));
  f.y = linspace(0.0, kSize, static_cast<std::size_t>(ny));
  f.detuning_map = [](double x, double) { return units::mhz(-3.5 + 9.5 * x / kSize); };
  f.rabi_map = [](double, double y) { return -0.25 + 0.5 * y / kSize; };
  return f;
}

GradientField GradientField::uniform(int nx, int ny, double detuning, double rabi_error) {
  GradientField f;
  f.x = linspace(0.0, 30.0, static_cast<std::size_t>(nx));
  f.y = linspace(0.0, 30.0, static_cast<std::size_t>(ny));
  f.detuning_map = [detuning](double, double) { return detuning; };
  f.rabi_map = [rabi_error](double, double) { return rabi_error; };
  return f;
}

ScanResult spatial_polarisation_map(const GradientField& field, const SpinSystem& sys, const ProtocolRun& run,
                                    double orientation, unsigned threads) {
  field.validate();
  run.validate();
  const std::size_t nx = field.x.size();
  auto cells = parallel_map(field.y.size() * nx, threads, [&](std::size_t c) {
    const double x = field.x[c % nx], y = field.y[c / nx];
    SpinSystem s = sys;
    s.detuning = sys.detuning + field.detuning_map(x, y);
    s.rabi_error = field.rabi_map(x, y);
    return std::array<double, 3>{run_polarisation_protocol(run, s).polarisation.back(), units::to_mhz(s.detuning),
                                 s.rabi_error};
  });
  ScanResult r({{"y", "um", field.y}, {"x", "um", field.x}},
               {{"polarisation", ""}, {"signed_polarisation", ""}, {"detuning", "MHz"}, {"rabi_error", ""}});
  for (std::size_t c = 0; c < cells.size(); ++c) {
    r.at(c, 0) = cells[c][0];
    r.at(c, 1) = orientation * cells[c][0];
    r.at(c, 2) = cells[c][1];
    r.at(c, 3) = cells[c][2];
  }
  r.meta = {{"observable", "spatial_polarisation_map"},
            {"system", system_meta(sys)},
            {"family", family_name(run.family)},
            {"n_pulses", run.pulses},
            {"cycles", run.cycles},
            {"tau_ns", units::to_ns(run.geom.tau)},
            {"delta_theta_deg", units::to_deg(run.geom.delta_theta)},
            {"orientation", orientation},
            {"deterministic", true}};
  return r;
}

double simulated_tpol_polcpmg(const SpinSystem& sys, bool instantaneous) {
  const SpinSystem s0 = nominal_system(sys);
  const double t_p0 = sys.nominal_pi_duration();
  const double tau = tau_zero(sys);
  const PulseGeometry g = geometry_for(0.0, t_p0, tau, instantaneous);
  const PulseTiming timing{t_p0, instantaneous};
  const Operator prep = segment_propagator(timing.rotation(kPi / 2.0, kPi / 2.0), s0);
  const Operator half = sequence_propagator(make_cpmg_half_unit(g), s0);
  QubitOperator g0 = QubitOperator::Zero();
  g0(0, 0) = 1.0;
  QubitOperator up = g0;
  Operator rho = prep * tensor(g0, up) * prep.adjoint();
  std::vector<double> p{observe(rho).polarisation};
  const int kmax = static_cast<int>(4.0 * kPi * s0.larmor / s0.a_perp) + 8;
  for (int k = 0; k < kmax; ++k) {
    rho = half * rho * half.adjoint();
    p.push_back(observe(rho).polarisation);
  }
  for (std::size_t k = 1; k + 1 < p.size(); ++k)
    if (p[k] <= p[k - 1] && p[k] < p[k + 1]) return (k + parabola_vertex(p[k - 1], p[k], p[k + 1])) * tau;
  throw std::runtime_error("simulated_tpol_polcpmg: no transfer minimum found");
}

double simulated_tpol_pulsepol(const SpinSystem& sys, const PulseTiming& timing, double* peak) {
  const double tau = 3.0 * kPi / sys.larmor;
  const auto p = pulsepol_trajectory(nominal_system(sys), tau, timing, 60);
  const std::size_t k = first_local_max(p);
  if (peak) *peak = p[k];
  if (k == 0 || k + 1 >= p.size()) return k * 2.0 * tau;
  return (k + parabola_vertex(p[k - 1], p[k], p[k + 1])) * 2.0 * tau;
}

std::vector<ComparisonRow> protocol_comparison(const SpinSystem& sys, const std::vector<Family>& protocols,
                                               double half_width_step) {
  std::vector<ComparisonRow> rows;
  const SpinSystem s0 = nominal_system(sys);
  const PulseTiming timing{sys.nominal_pi_duration(), false};
  for (Family f : protocols) {
    ComparisonRow row{f};
    const ProtocolNominal nom = nominal_for(f, sys);
    switch (f) {
      case Family::Novel:
        row.t_pol_analytic = analytic_tpol_novel(sys);
        row.t_pol_simulated = nom.run.lock_duration;
        row.peak_polarisation = single_cycle_polarisation(nom, s0);
        break;
      case Family::PulsePol:
        row.t_pol_analytic = analytic_tpol_pulsepol(sys);
        row.t_pol_simulated = simulated_tpol_pulsepol(sys, timing, &row.peak_polarisation);
        break;
      case Family::PolCPMG:
        row.t_pol_analytic = analytic_tpol_polcpmg(sys, 0.0, Branch::Plus);
        // Ideal pulses: the closed form neglects coupling averaging during finite pulses.
        row.t_pol_simulated = simulated_tpol_polcpmg(sys, true);
        row.peak_polarisation = nom.branch_sign * single_cycle_polarisation(nom, s0);
        break;
      case Family::Custom: throw std::invalid_argument("protocol_comparison: custom family not supported");
    }
    if (half_width_step > 0.0) row.half_width = robustness_half_width(nom, sys, half_width_step);
    rows.push_back(row);
  }
  return rows;
}

ScanResult comparison_table(const std::vector<ComparisonRow>& rows) {
  ScanAxis ax{"protocol", "index", {}};
  nlohmann::json names = nlohmann::json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ax.values.push_back(static_cast<double>(i));
    names.push_back(family_name(rows[i].family));
  }
  ScanResult r({ax}, {{"t_pol_analytic", "us"}, {"t_pol_simulated", "us"}, {"peak_polarisation", ""},
                      {"half_width", "MHz"}});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    r.at(i, 0) = units::to_us(rows[i].t_pol_analytic);
    r.at(i, 1) = units::to_us(rows[i].t_pol_simulated);
    r.at(i, 2) = rows[i].peak_polarisation;
    r.at(i, 3) = units::to_mhz(rows[i].half_width);
  }
  r.meta = {{"observable", "protocol_comparison"}, {"protocols", names}};
  return r;
}

}  // namespace polcpmg
