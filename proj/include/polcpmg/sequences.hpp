#pragma once

#include "polcpmg/spin_core.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace polcpmg {

// Coupled electron / nuclear pair in the electron rotating frame.
// All rates are angular (rad/s).
struct SpinSystem {
  double larmor = 0.0;        // ω_L
  double a_perp = 0.0;        // A⊥
  double a_par = 0.0;         // A∥
  double rabi_nominal = 1.0;  // Ω₀
  double detuning = 0.0;      // Δω
  double rabi_error = 0.0;    // ΔΩ, relative
  double phase_error = 0.0;   // Δφ, applied to non-x drive phases

  void validate() const;
  double nominal_pi_duration() const;  // π/Ω₀

  // ν_L = 1.9 MHz, A⊥/2π = 180 kHz, A∥ = 0, Ω₀/2π = 12.5 MHz.
  static SpinSystem reference();
};

// One piecewise-constant interval. A segment with zero duration and a
// kick_angle is an ideal instantaneous rotation about the drive axis.
struct Segment {
  double duration = 0.0;
  bool drive_on = false;
  double phase = 0.0;
  std::optional<double> rabi;        // overrides Ω₀ for this segment
  std::optional<double> kick_angle;  // instantaneous rotation angle

  bool is_kick() const { return kick_angle.has_value(); }

  static Segment wait(double t);
  static Segment pulse(double t, double phase, std::optional<double> rabi = std::nullopt);
  static Segment kick(double angle, double phase);
};

struct PulseSequence {
  std::vector<Segment> segments;
  bool periodic_unit = false;

  double total_duration() const;
  std::size_t drive_count() const;
  void validate() const;

  PulseSequence& append(const PulseSequence& other);
  PulseSequence repeated(int n) const;
};

// Pulse timing: t_p is the actual flip-pulse duration, t_p0 = π/Ω₀ the nominal one.
// δθ = π (t_p − t_p0) / t_p0. In instantaneous mode pulses are kicks of π + δθ
// and t_p only records the equivalent duration.
struct PulseGeometry {
  double t_p = 0.0;
  double t_p0 = 0.0;
  double delta_theta = 0.0;
  double tau = 0.0;
  bool instantaneous = false;

  static PulseGeometry from_pulse_duration(double t_p, double t_p0, double tau);
  static PulseGeometry from_delta_theta(double delta_theta, double t_p0, double tau);
  static PulseGeometry instantaneous_pulses(double delta_theta, double t_p0, double tau);

  PulseGeometry with_tau(double new_tau) const;
  void validate() const;
  // Free time between pulses, τ′ = τ − t_p (τ in instantaneous mode).
  double free_time() const { return instantaneous ? tau : tau - t_p; }
};

// How the electron is rotated before / after the pulse train (about +y).
enum class Preparation { None, XPlus, XMinus };
enum class Projection { None, HalfPi, ThreeHalfPi };

// Shared π/2-style wrapper pulses: finite pulses at Ω₀ or ideal kicks.
struct PulseTiming {
  double t_p0 = 0.0;  // nominal π duration; ignored when instantaneous
  bool instantaneous = false;

  Segment rotation(double angle, double phase) const;
};

class SequenceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// τ′/2 – (π+δθ)_x – τ′/2
PulseSequence make_cpmg_half_unit(const PulseGeometry& geom);
// One Floquet period 2τ (two half units), flagged periodic.
PulseSequence make_cpmg_unit(const PulseGeometry& geom);
// Prep · [half unit]^n · projection. n even and ≥ 2.
PulseSequence make_cpmg(const PulseGeometry& geom, int n_pulses,
                        Preparation prep = Preparation::XPlus,
                        Projection proj = Projection::HalfPi);

// Unit of duration 2τ; `repetitions` units. Free gaps are τ/4 − t_p0 so the
// unit length does not depend on pulse width.
PulseSequence make_pulsepol(double tau, int repetitions, const PulseTiming& timing);
// (π/2)_y then a spin lock along x at `lock_rabi`.
PulseSequence make_novel(double lock_rabi, double lock_duration, const PulseTiming& timing);

Operator segment_hamiltonian(const Segment& seg, const SpinSystem& sys);
Operator segment_propagator(const Segment& seg, const SpinSystem& sys);
// Time-ordered product; later segments multiply on the left.
Operator sequence_propagator(const PulseSequence& seq, const SpinSystem& sys);

// Text grammar:
//   pulse <x|y> <dur><ns|us> [rabi <f><MHz|kHz>]
//   pulse <x|y> <angle>deg            (instantaneous)
//   wait <dur><ns|us>
//   repeat <n> { ... }
// Statements separated by ';' or newlines, '#' starts a comment.
class SequenceParseError : public std::runtime_error {
 public:
  SequenceParseError(const std::string& msg, int line, int column);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

PulseSequence parse_sequence(std::string_view text);
std::string serialize_sequence(const PulseSequence& seq);
bool segments_equal(const Segment& a, const Segment& b, double rel_tol = 1e-14);

}  // namespace polcpmg
