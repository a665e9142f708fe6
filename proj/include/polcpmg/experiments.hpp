#pragma once

#include "polcpmg/dynamics.hpp"
#include "polcpmg/floquet.hpp"
#include "polcpmg/scan_result.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace polcpmg {

// Runs f(i) for i in [0, n) on `threads` workers (0 = hardware concurrency)
// and returns results in index order.
template <typename F>
auto parallel_map(std::size_t n, unsigned threads, F&& f) {
  using R = std::decay_t<decltype(f(std::size_t{0}))>;
  std::vector<R> out(n);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        out[i] = f(i);
      } catch (...) {
        if (!failed.exchange(true)) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
  return out;
}

std::vector<double> linspace(double a, double b, std::size_t n);

// --- polarise-then-probe coherence maps --------------------------------------

struct TpTauScan {
  std::vector<double> t_p;  // s
  std::vector<double> tau;  // s
  int n_pulses = 32;
  int r_pol = 0;  // pre-polarisation cycles before each probe
  Branch pol_branch = Branch::Plus;
  int pol_pulses = 32;
  QubitOperator nuclear = QubitOperator::Identity() / 2.0;  // state before pre-polarisation
  std::vector<double> a_perp_list;  // rad/s; empty = sys.a_perp
  bool instantaneous = false;
  unsigned threads = 0;
};

// Signal map over (t_p, τ), ensemble averaged. meta["overlay"] carries the
// analytic τ± lines.
ScanResult scan_tp_tau(const SpinSystem& sys, const DetuningEnsemble& ens, const TpTauScan& scan);

// --- rates ----------------------------------------------------------------

struct PolarisationVsTime {
  std::vector<int> n_list;
  double delta_theta = 0.0;
  Branch branch = Branch::Plus;
  double t_max = 0.0;  // s
  std::vector<double> t_grid;  // sample times (s); empty = 51 points over [0, t_max]
  std::vector<double> a_perp_list;
  bool instantaneous = false;
  unsigned threads = 0;
};

// 𝓟(T) for each N, T = R·N·τ; meta carries saturation and 1/e time per N.
ScanResult polarisation_vs_time(const SpinSystem& sys, const DetuningEnsemble& ens, const PolarisationVsTime& cfg);

struct PolarisationVsDeltaTheta {
  std::vector<double> theta_grid;  // rad
  int n_pulses = 32;
  int cycles = 100;
  std::vector<double> a_perp_list;
  bool instantaneous = false;
  unsigned threads = 0;
};

// 𝓟 after R cycles with τ re-solved to each branch resonance.
ScanResult polarisation_vs_delta_theta(const SpinSystem& sys, const DetuningEnsemble& ens,
                                       const PolarisationVsDeltaTheta& cfg);

// --- robustness -----------------------------------------------------------

// Nominal single-cycle protocol at zero error.
struct ProtocolNominal {
  Family family = Family::PolCPMG;
  ProtocolRun run;
  double branch_sign = 1.0;  // expected sign of the transferred polarisation
};

ProtocolNominal polcpmg_nominal(const SpinSystem& sys, double delta_theta, int n_pulses, Branch branch);
ProtocolNominal novel_nominal(const SpinSystem& sys);
ProtocolNominal pulsepol_nominal(const SpinSystem& sys);
ProtocolNominal nominal_for(Family f, const SpinSystem& sys);

// Golden-section search of the lock time maximising 𝓟 at zero error.
double calibrate_novel(const SpinSystem& sys, double lock_rabi, const PulseTiming& timing);
// Integer repetition count maximising 𝓟 at zero error, up to max_reps.
int calibrate_pulsepol(const SpinSystem& sys, double tau, const PulseTiming& timing, int max_reps = 40);

double single_cycle_polarisation(const ProtocolNominal& nominal, const SpinSystem& sys);

struct RobustnessScan {
  std::vector<double> detuning;    // rad/s
  std::vector<double> rabi_error;  // relative
  std::vector<double> phase_error; // rad
  unsigned threads = 0;
};

struct RobustnessMaps {
  ScanResult detuning_power;  // axes Δω, ΔΩ
  ScanResult phase;           // axis Δφ
};

RobustnessMaps robustness_map(const ProtocolNominal& nominal, const SpinSystem& sys, const RobustnessScan& scan);

// Largest h such that branch-signed 𝓟 > threshold for all |Δω| ≤ h on a grid of `step`;
// −step when the nominal point itself is below threshold.
double robustness_half_width(const ProtocolNominal& nominal, const SpinSystem& sys, double step,
                             double threshold = 0.8, double limit = 10.0 * 2.0 * 3.141592653589793e6);

// --- optimal working point ------------------------------------------------

// |τ(Δω = h) − τ(0)| / h for the numeric resonance solver.
double detuning_sensitivity(const PulseGeometry& geom, const SpinSystem& sys, Branch branch, double h);

struct OwpScan {
  std::vector<double> theta_list;  // rad
  std::vector<double> detuning;    // rad/s
  std::vector<double> tau;         // s
  int n_pulses = 32;
  double sensitivity_step = 0.0;   // rad/s; 0 = 0.5 MHz
  unsigned threads = 0;
};

ScanResult optimal_working_point_map(const SpinSystem& sys, const OwpScan& scan);

// --- spatial maps -----------------------------------------------------------

struct GradientField {
  std::vector<double> x;  // µm
  std::vector<double> y;  // µm
  std::function<double(double, double)> detuning_map;   // rad/s
  std::function<double(double, double)> rabi_map;       // relative

  void validate() const;
  // 30 µm square, Δω linear −3.5 → +6 MHz along x, ΔΩ linear −25% → +25% along y.
  static GradientField linear_preset(int nx, int ny);
  static GradientField uniform(int nx, int ny, double detuning, double rabi_error);
};

ScanResult spatial_polarisation_map(const GradientField& field, const SpinSystem& sys, const ProtocolRun& run,
                                    double orientation = 1.0, unsigned threads = 0);

// --- protocol comparison --------------------------------------------------

struct ComparisonRow {
  Family family;
  double t_pol_analytic = 0.0;
  double t_pol_simulated = 0.0;
  double peak_polarisation = 0.0;
  double half_width = 0.0;  // rad/s
};

// Simulated full-transfer times: NOVEL by lock-time calibration, PulsePol by
// repetition count, PolCPMG at δθ = 0 from |↑> (flip time, ideal pulses). Half-widths use
// the robustness nominal points.
std::vector<ComparisonRow> protocol_comparison(const SpinSystem& sys, const std::vector<Family>& protocols,
                                               double half_width_step = 0.0);
ScanResult comparison_table(const std::vector<ComparisonRow>& rows);

// PolCPMG at δθ = 0, τ₀ from |X+> ⊗ |↑>: time of the first minimum of 𝓟,
// refined between pulses by a parabola.
double simulated_tpol_polcpmg(const SpinSystem& sys, bool instantaneous);
double simulated_tpol_pulsepol(const SpinSystem& sys, const PulseTiming& timing, double* peak = nullptr);

}  // namespace polcpmg
