#pragma once

#include "polcpmg/sequences.hpp"

#include <array>
#include <functional>
#include <vector>

namespace polcpmg {

// Eigen-decomposition of a one-period propagator, U = V diag(e^{-iε}) V†.
struct Eigenphases {
  Eigen::Vector4d phases;  // ε in (−π, π]
  Operator modes;          // columns
};

Eigenphases eigenphases(const Operator& u);
double wrap_phase(double x);                // into (−π, π]
double phase_distance(double a, double b);  // circular, in [0, π]

struct FloquetSpectrum {
  std::vector<double> tau_grid;
  std::vector<std::array<double, 4>> phases;  // tracked branch order
  std::vector<Operator> modes;                // column b belongs to branch b
};

Operator unit_propagator(const PulseSequence& seq, const SpinSystem& sys);

// Closed-form half-period block a0 − i(ax σx + az σz) for
// [free τ′/2] [pulse t_p] [free τ′/2].
struct PulsePropagatorCoeffs {
  double a0 = 1.0;
  double ax = 0.0;
  double az = 0.0;
  double omega_eff = 0.0;  // Ω_Δω
  double theta_dw = 0.0;   // θ_Δω
  double eps_p = 0.0;      // δε_p = 4 arccos(a0)
  double theta_p = 0.0;    // arctan(az / ax)
};

PulsePropagatorCoeffs pulse_coeffs(const PulseGeometry& geom, const SpinSystem& sys);

// Branch order: X̃+↑, X̃+↓, X̃−↑, X̃−↓ with ε = ±ω_Lτ ± δε_p/2 (wrapped).
FloquetSpectrum unperturbed_spectrum(const PulseGeometry& geom, const SpinSystem& sys,
                                     const std::vector<double>& tau_grid);

using UnitBuilder = std::function<PulseSequence(double tau)>;

// Numeric spectrum; branches continued across the grid by maximum mode overlap.
FloquetSpectrum floquet_spectrum(const UnitBuilder& unit, const SpinSystem& sys,
                                 const std::vector<double>& tau_grid);

enum class ResonanceMethod { Analytic, Numeric };
enum class Branch { Plus, Minus };

struct ResonancePair {
  double tau_minus = 0.0;
  double tau_plus = 0.0;
  ResonanceMethod method = ResonanceMethod::Analytic;
};

class ResonanceNotFound : public std::runtime_error {
 public:
  ResonanceNotFound(double lo, double hi);
  double lo() const { return lo_; }
  double hi() const { return hi_; }

 private:
  double lo_, hi_;
};

double tau_zero(const SpinSystem& sys);  // π/ω_L

// τ± = τ₀(1 ± δθ/π) analytically; the numeric mode solves the level
// crossing condition with the full pulse coefficients (bracketed bisection).
ResonancePair resonance_positions(const PulseGeometry& geom, const SpinSystem& sys,
                                  ResonanceMethod method = ResonanceMethod::Numeric);
double resonance_tau(const PulseGeometry& geom, const SpinSystem& sys, Branch branch,
                     ResonanceMethod method = ResonanceMethod::Numeric);
// Crossing mismatch, zero at the resonance: D₊ = 2ω_Lτ − δε_p, D₋ = 2ω_Lτ + δε_p − 4π.
double crossing_mismatch(const PulseGeometry& geom, const SpinSystem& sys, Branch branch);

struct RateResult {
  double rate = 0.0;  // r, per period 2τ
  double g = 0.0;
  double t_pol = 0.0;  // πτ/|r|
};

// Evaluated at geom.tau; the caller places τ on the branch resonance.
RateResult polarisation_rate(const PulseGeometry& geom, const SpinSystem& sys, Branch branch);
double rate_factor_g(double larmor, double tau, double eps, double theta_p);

double pulsepol_alpha();  // (2/3π)(2+√2)
double analytic_tpol_novel(const SpinSystem& sys);
double analytic_tpol_pulsepol(const SpinSystem& sys);
double analytic_tpol_polcpmg(const SpinSystem& sys, double delta_theta, Branch branch);

struct AvoidedCrossing {
  double tau = 0.0;
  double gap = 0.0;  // rad
  int branch_a = 0;
  int branch_b = 0;
};

struct CrossingOptions {
  double prominence = 0.02;  // rad; the dip must also be deeper than its own gap
};

std::vector<AvoidedCrossing> detect_avoided_crossings(const FloquetSpectrum& spec,
                                                      const CrossingOptions& opts = {});

// Smallest pairwise eigenphase distance of the unit propagator, minimised over
// τ ∈ [lo, hi] by golden-section search.
AvoidedCrossing refine_gap(const UnitBuilder& unit, const SpinSystem& sys, double lo, double hi,
                           double tol = 1e-15);

}  // namespace polcpmg
