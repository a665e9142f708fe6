#pragma once

#include "polcpmg/floquet.hpp"
#include "polcpmg/scan_result.hpp"
#include "polcpmg/sequences.hpp"

#include <optional>
#include <type_traits>
#include <vector>

namespace polcpmg {

// Classical electron-detuning distribution: discrete lines, each smeared by a
// Gaussian of the given FWHM and sampled with Gauss-Hermite nodes.
struct DetuningLine {
  double offset = 0.0;  // rad/s
  double weight = 1.0;
};

enum class N14Mapping { MinusIsPositive, MinusIsNegative };

struct DetuningEnsemble {
  std::vector<DetuningLine> lines{{0.0, 1.0}};
  double broadening_fwhm = 0.0;  // rad/s
  int samples_per_line = 1;

  struct Node {
    double detuning;
    double weight;
  };

  void validate() const;
  void normalise();
  std::vector<Node> nodes() const;

  static DetuningEnsemble single(double detuning = 0.0);
  // m_I = −1, 0, +1 populated (0.5, 0.3, 0.2), hyperfine 2.2 MHz.
  // Default maps m_I = −1 to +A (and +1 to −A).
  static DetuningEnsemble nitrogen14(double fwhm, int samples_per_line,
                                     N14Mapping mapping = N14Mapping::MinusIsPositive);
};

// Physicists' Gauss-Hermite rule (weight e^{-x²}), n nodes, via Golub-Welsch.
void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights);

enum class Family { PolCPMG, PulsePol, Novel, Custom };
enum class ElectronInit { XPlus, XMinus, Alternate };

const char* family_name(Family f);
Family parse_family(std::string_view s);

// Repeated polarisation protocol: every cycle resets the electron to |0>,
// applies the preparation rotation and the sequence body, then discards
// the electron.
struct ProtocolRun {
  Family family = Family::PolCPMG;
  PulseGeometry geom;  // PolCPMG timing; PulsePol uses tau, t_p0 and instantaneous
  int pulses = 32;     // N for PolCPMG, repetitions for PulsePol
  double lock_rabi = 0.0;
  double lock_duration = 0.0;
  std::optional<PulseSequence> custom;  // body without preparation
  int cycles = 1;                       // R
  ElectronInit init = ElectronInit::XPlus;
  QubitOperator nuclear_init = QubitOperator::Identity() / 2.0;

  void validate() const;
  // Full cycle (preparation included) for a given electron initialisation.
  PulseSequence cycle_sequence(bool x_minus) const;
  double cycle_duration() const;
  double total_time() const;
};

struct Observables {
  double coherence = 0.0;     // ⟨2S_x⟩
  double polarisation = 0.0;  // ⟨2I_z⟩
};

Observables observe(const Operator& rho);
Observables observe(const DensityMatrix& rho);

std::vector<DensityMatrix> evolve_strobe(const DensityMatrix& rho0, const Operator& unit, int n);

struct ProtocolResult {
  QubitOperator nuclear;
  std::vector<double> polarisation;  // before the first cycle and after each cycle
};

ProtocolResult run_polarisation_protocol(const ProtocolRun& run, const SpinSystem& sys);

// Per τ: one CPMG-type train from (|0> ⊗ nuclear state), reporting ⟨2S_x⟩
// before projection, P(|0>) after π/2 and 3π/2 projections, and the
// normalised signal (1 + P0(3π/2) − P0(π/2)) / 2.
ScanResult coherence_spectrum(const ProtocolRun& run, const SpinSystem& sys, const std::vector<double>& tau_grid,
                              std::optional<QubitOperator> nuclear = std::nullopt);

struct CoherencePoint {
  double coherence;
  double p0_half;
  double p0_three_half;
  double signal;
};
CoherencePoint coherence_point(const PulseGeometry& geom, int n_pulses, const SpinSystem& sys,
                               const QubitOperator& nuclear);

// Weighted sum of f(sys with detuning shifted by each ensemble node).
// f returns double or any type supporting += and scalar *.
template <typename F>
auto average_over_ensemble(const DetuningEnsemble& ens, const SpinSystem& sys, F&& f) {
  ens.validate();
  using R = std::decay_t<decltype(f(sys))>;
  std::optional<R> acc;
  for (const auto& node : ens.nodes()) {
    SpinSystem s = sys;
    s.detuning = sys.detuning + node.detuning;
    R v = f(s);
    if (!acc)
      acc = v * node.weight;
    else
      *acc += v * node.weight;
  }
  return *acc;
}

// Equal-weight average of the ensemble average over a list of A⊥ values, a
// stand-in for a bath of independent ¹³C spins. Empty list = sys.a_perp only.
template <typename F>
auto average_over_bath(const std::vector<double>& a_perp, const DetuningEnsemble& ens, const SpinSystem& sys, F&& f) {
  if (a_perp.empty()) return average_over_ensemble(ens, sys, f);
  using R = std::decay_t<decltype(f(sys))>;
  std::optional<R> acc;
  const double w = 1.0 / static_cast<double>(a_perp.size());
  for (double a : a_perp) {
    SpinSystem s = sys;
    s.a_perp = a;
    R v = average_over_ensemble(ens, s, f);
    if (!acc)
      acc = v * w;
    else
      *acc += v * w;
  }
  return *acc;
}

// Dip-ratio polarisation estimate (d₋ − d₊)/(d₋ + d₊).
double dip_polarisation_estimate(double depth_minus, double depth_plus);

}  // namespace polcpmg
