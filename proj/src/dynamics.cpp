#include "polcpmg/dynamics.hpp"

#include "polcpmg/units.hpp"

#include <cmath>
#include <numeric>

namespace polcpmg {

using units::kPi;

void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: n must be >= 1");
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    nodes[i] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    weights[i] = std::sqrt(kPi) * v0 * v0;
  }
  // The rule is symmetric; enforce it so ensemble averages are reproducible bitwise.
  for (int i = 0; i < n / 2; ++i) {
    const double x = 0.5 * (nodes[n - 1 - i] - nodes[i]);
    const double w = 0.5 * (weights[i] + weights[n - 1 - i]);
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) nodes[n / 2] = 0.0;
}

void DetuningEnsemble::validate() const {
  if (lines.empty()) throw std::invalid_argument("DetuningEnsemble: no lines");
  if (samples_per_line < 1) throw std::invalid_argument("DetuningEnsemble: samples_per_line must be >= 1");
  if (!(broadening_fwhm >= 0.0)) throw std::invalid_argument("DetuningEnsemble: broadening must be >= 0");
  double sum = 0.0;
  for (const auto& l : lines) {
    if (!(l.weight >= 0.0)) throw std::invalid_argument("DetuningEnsemble: negative weight");
    sum += l.weight;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("DetuningEnsemble: weights must sum to 1");
}

void DetuningEnsemble::normalise() {
  double sum = 0.0;
  for (const auto& l : lines) sum += l.weight;
  if (!(sum > 0.0)) throw std::invalid_argument("DetuningEnsemble: weights sum to zero");
  for (auto& l : lines) l.weight /= sum;
}

std::vector<DetuningEnsemble::Node> DetuningEnsemble::nodes() const {
  std::vector<Node> out;
  if (broadening_fwhm == 0.0 || samples_per_line == 1) {
    for (const auto& l : lines) out.push_back({l.offset, l.weight});
    return out;
  }
  std::vector<double> x, w;
  gauss_hermite(samples_per_line, x, w);
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  const double sigma = broadening_fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  for (const auto& l : lines)
    for (std::size_t i = 0; i < x.size(); ++i)
      out.push_back({l.offset + std::sqrt(2.0) * sigma * x[i], l.weight * w[i] / wsum});
  return out;
}

DetuningEnsemble DetuningEnsemble::single(double detuning) {
  DetuningEnsemble e;
  e.lines = {{detuning, 1.0}};
  return e;
}

DetuningEnsemble DetuningEnsemble::nitrogen14(double fwhm, int samples, N14Mapping mapping) {
  const double a = units::mhz(2.2);
  const double s = mapping == N14Mapping::MinusIsPositive ? 1.0 : -1.0;
  DetuningEnsemble e;
  // m_I = −1, 0, +1
  e.lines = {{s * a, 0.5}, {0.0, 0.3}, {-s * a, 0.2}};
  e.broadening_fwhm = fwhm;
  e.samples_per_line = samples;
  return e;
}

const char* family_name(Family f) {
  switch (f) {
    case Family::PolCPMG: return "polcpmg";
    case Family::PulsePol: return "pulsepol";
    case Family::Novel: return "novel";
    case Family::Custom: return "custom";
  }
  return "?";
}

Family parse_family(std::string_view s) {
  if (s == "polcpmg" || s == "cpmg") return Family::PolCPMG;
  if (s == "pulsepol") return Family::PulsePol;
  if (s == "novel") return Family::Novel;
  if (s == "custom") return Family::Custom;
  throw std::invalid_argument("unknown sequence family '" + std::string(s) + "'");
}

void ProtocolRun::validate() const {
  if (cycles < 0) throw std::invalid_argument("ProtocolRun: cycles must be >= 0");
  switch (family) {
    case Family::PolCPMG:
      if (pulses < 2 || pulses % 2) throw std::invalid_argument("ProtocolRun: N must be even and >= 2");
      geom.validate();
      break;
    case Family::PulsePol:
      if (pulses < 1) throw std::invalid_argument("ProtocolRun: PulsePol repetitions must be >= 1");
      break;
    case Family::Novel:
      if (!(lock_duration > 0.0) || !(lock_rabi > 0.0))
        throw std::invalid_argument("ProtocolRun: NOVEL needs a positive lock duration and Rabi frequency");
      break;
    case Family::Custom:
      if (!custom) throw std::invalid_argument("ProtocolRun: custom family needs a sequence");
      custom->validate();
      break;
  }
  DensityMatrix check{ComplexMatrix(nuclear_init)};
  (void)check;
}

PulseSequence ProtocolRun::cycle_sequence(bool x_minus) const {
  const PulseTiming timing{geom.t_p0, geom.instantaneous};
  const double prep_angle = x_minus ? 3.0 * kPi / 2.0 : kPi / 2.0;
  switch (family) {
    case Family::PolCPMG:
      return make_cpmg(geom, pulses, x_minus ? Preparation::XMinus : Preparation::XPlus, Projection::None);
    case Family::PulsePol: {
      PulseSequence s;
      if (x_minus) s.segments.push_back(timing.rotation(kPi, 0.0));
      return s.append(make_pulsepol(geom.tau, pulses, timing));
    }
    case Family::Novel: {
      PulseSequence s;
      s.segments.push_back(timing.rotation(prep_angle, kPi / 2.0));
      s.segments.push_back(Segment::pulse(lock_duration, 0.0, lock_rabi));
      return s;
    }
    case Family::Custom: {
      PulseSequence s;
      s.segments.push_back(timing.rotation(prep_angle, kPi / 2.0));
      return s.append(*custom);
    }
  }
  throw std::logic_error("unreachable");
}

double ProtocolRun::cycle_duration() const { return cycle_sequence(false).total_duration(); }
double ProtocolRun::total_time() const { return cycles * cycle_duration(); }

Observables observe(const Operator& rho) {
  return {(rho * electron_op(Axis::X)).trace().real() * 2.0, (rho * nuclear_op(Axis::Z)).trace().real() * 2.0};
}

Observables observe(const DensityMatrix& rho) {
  if (rho.dim() != 4) throw std::invalid_argument("observe: expected a 4x4 state");
  return observe(Operator(rho.matrix()));
}

std::vector<DensityMatrix> evolve_strobe(const DensityMatrix& rho0, const Operator& unit, int n) {
  if (rho0.dim() != 4) throw std::invalid_argument("evolve_strobe: dimension mismatch");
  if (n < 0) throw std::invalid_argument("evolve_strobe: n must be >= 0");
  std::vector<DensityMatrix> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  out.push_back(rho0);
  const ComplexMatrix u = unit;
  for (int k = 0; k < n; ++k) out.push_back(out.back().evolve(u));
  return out;
}

namespace {

double nuclear_polarisation(const QubitOperator& rn) { return (rn(0, 0) - rn(1, 1)).real(); }

QubitOperator ground() {
  QubitOperator g = QubitOperator::Zero();
  g(0, 0) = 1.0;
  return g;
}

}  // namespace

ProtocolResult run_polarisation_protocol(const ProtocolRun& run, const SpinSystem& sys) {
  run.validate();
  sys.validate();
  const Operator u_plus = sequence_propagator(run.cycle_sequence(false), sys);
  Operator u_minus = u_plus;
  if (run.init != ElectronInit::XPlus) u_minus = sequence_propagator(run.cycle_sequence(true), sys);

  ProtocolResult res;
  res.nuclear = run.nuclear_init;
  res.polarisation.reserve(static_cast<std::size_t>(run.cycles) + 1);
  res.polarisation.push_back(nuclear_polarisation(res.nuclear));
  const QubitOperator g = ground();
  for (int r = 0; r < run.cycles; ++r) {
    const bool minus = run.init == ElectronInit::XMinus || (run.init == ElectronInit::Alternate && r % 2 == 1);
    const Operator& u = minus ? u_minus : u_plus;
    const Operator rho = u * tensor(g, res.nuclear) * u.adjoint();
    res.nuclear = trace_out_electron(rho);
    res.nuclear = 0.5 * (res.nuclear + res.nuclear.adjoint()).eval();
    res.polarisation.push_back(nuclear_polarisation(res.nuclear));
  }
  return res;
}

CoherencePoint coherence_point(const PulseGeometry& geom, int n_pulses, const SpinSystem& sys,
                               const QubitOperator& nuclear) {
  const PulseSequence body = make_cpmg(geom, n_pulses, Preparation::XPlus, Projection::None);
  const Operator u = sequence_propagator(body, sys);
  const Operator rho = u * tensor(ground(), nuclear) * u.adjoint();
  const PulseTiming timing{geom.t_p0, geom.instantaneous};
  auto p0_after = [&](double angle) {
    const Operator p = segment_propagator(timing.rotation(angle, kPi / 2.0), sys);
    const Operator r2 = p * rho * p.adjoint();
    return trace_out_nucleus(r2)(0, 0).real();
  };
  CoherencePoint c;
  c.coherence = observe(rho).coherence;
  c.p0_half = p0_after(kPi / 2.0);
  c.p0_three_half = p0_after(3.0 * kPi / 2.0);
  c.signal = 0.5 * (1.0 + c.p0_three_half - c.p0_half);
  return c;
}

ScanResult coherence_spectrum(const ProtocolRun& run, const SpinSystem& sys, const std::vector<double>& tau_grid,
                              std::optional<QubitOperator> nuclear) {
  if (run.family != Family::PolCPMG) throw std::invalid_argument("coherence_spectrum: only CPMG-type runs");
  if (tau_grid.empty()) throw std::invalid_argument("coherence_spectrum: empty tau grid");
  sys.validate();
  ScanAxis tau_axis{"tau", "ns", {}};
  for (double t : tau_grid) tau_axis.values.push_back(units::to_ns(t));
  ScanResult r({tau_axis}, {{"coherence", ""}, {"p0_half", ""}, {"p0_three_half", ""}, {"signal", ""}});
  const QubitOperator rn = nuclear.value_or(run.nuclear_init);
  for (std::size_t i = 0; i < tau_grid.size(); ++i) {
    const CoherencePoint c = coherence_point(run.geom.with_tau(tau_grid[i]), run.pulses, sys, rn);
    r.at(i, 0) = c.coherence;
    r.at(i, 1) = c.p0_half;
    r.at(i, 2) = c.p0_three_half;
    r.at(i, 3) = c.signal;
  }
  r.meta = {{"observable", "coherence_spectrum"},
            {"n_pulses", run.pulses},
            {"delta_theta_deg", units::to_deg(run.geom.delta_theta)},
            {"instantaneous", run.geom.instantaneous}};
  return r;
}

double dip_polarisation_estimate(double depth_minus, double depth_plus) {
  const double s = depth_minus + depth_plus;
  if (!(s > 0.0)) return 0.0;
  return (depth_minus - depth_plus) / s;
}

}  // namespace polcpmg
