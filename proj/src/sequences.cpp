#include "polcpmg/sequences.hpp"

#include "polcpmg/units.hpp"

#include <cmath>
#include <sstream>

namespace polcpmg {

using units::kPi;

void SpinSystem::validate() const {
  if (!(rabi_nominal > 0.0)) throw std::invalid_argument("SpinSystem: rabi_nominal must be > 0");
  if (!(std::abs(rabi_error) < 1.0)) throw std::invalid_argument("SpinSystem: |rabi_error| must be < 1");
  for (double v : {larmor, a_perp, a_par, detuning, phase_error})
    if (!std::isfinite(v)) throw std::invalid_argument("SpinSystem: non-finite parameter");
}

double SpinSystem::nominal_pi_duration() const { return kPi / rabi_nominal; }

SpinSystem SpinSystem::reference() {
  SpinSystem s;
  s.larmor = units::mhz(1.9);
  s.a_perp = units::khz(180.0);
  s.rabi_nominal = units::mhz(12.5);
  return s;
}

Segment Segment::wait(double t) { return Segment{t, false, 0.0, std::nullopt, std::nullopt}; }

Segment Segment::pulse(double t, double phase, std::optional<double> rabi) {
  return Segment{t, true, phase, rabi, std::nullopt};
}

Segment Segment::kick(double angle, double phase) {
  return Segment{0.0, true, phase, std::nullopt, angle};
}

double PulseSequence::total_duration() const {
  double t = 0.0;
  for (const auto& s : segments) t += s.duration;
  return t;
}

std::size_t PulseSequence::drive_count() const {
  std::size_t n = 0;
  for (const auto& s : segments) n += s.drive_on ? 1 : 0;
  return n;
}

void PulseSequence::validate() const {
  if (segments.empty()) throw SequenceError("sequence is empty");
  for (const auto& s : segments) {
    if (!(s.duration >= 0.0) || !std::isfinite(s.duration))
      throw SequenceError("segment duration must be finite and >= 0");
    if (s.is_kick() && (!s.drive_on || s.duration != 0.0))
      throw SequenceError("instantaneous rotation must be a zero-length drive segment");
    if (s.rabi && !(*s.rabi > 0.0)) throw SequenceError("segment Rabi override must be > 0");
  }
  if (periodic_unit && !(total_duration() > 0.0))
    throw SequenceError("periodic unit must have positive duration");
}

PulseSequence& PulseSequence::append(const PulseSequence& other) {
  segments.insert(segments.end(), other.segments.begin(), other.segments.end());
  return *this;
}

PulseSequence PulseSequence::repeated(int n) const {
  if (n < 0) throw SequenceError("repeat count must be >= 0");
  PulseSequence out;
  out.segments.reserve(segments.size() * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.append(*this);
  out.periodic_unit = periodic_unit && n == 1;
  return out;
}

PulseGeometry PulseGeometry::from_pulse_duration(double t_p, double t_p0, double tau) {
  PulseGeometry g{t_p, t_p0, kPi * (t_p - t_p0) / t_p0, tau, false};
  g.validate();
  return g;
}

PulseGeometry PulseGeometry::from_delta_theta(double delta_theta, double t_p0, double tau) {
  PulseGeometry g{t_p0 * (1.0 + delta_theta / kPi), t_p0, delta_theta, tau, false};
  g.validate();
  return g;
}

PulseGeometry PulseGeometry::instantaneous_pulses(double delta_theta, double t_p0, double tau) {
  PulseGeometry g{t_p0 * (1.0 + delta_theta / kPi), t_p0, delta_theta, tau, true};
  g.validate();
  return g;
}

PulseGeometry PulseGeometry::with_tau(double new_tau) const {
  PulseGeometry g = *this;
  g.tau = new_tau;
  g.validate();
  return g;
}

void PulseGeometry::validate() const {
  if (!(t_p0 > 0.0)) throw SequenceError("PulseGeometry: t_p0 must be > 0");
  if (!(std::abs(delta_theta) < kPi)) throw SequenceError("PulseGeometry: |delta_theta| must be < pi");
  if (!(tau > 0.0)) throw SequenceError("PulseGeometry: tau must be > 0");
  if (!instantaneous) {
    if (!(t_p > 0.0)) throw SequenceError("PulseGeometry: t_p must be > 0");
    if (t_p > tau) {
      std::ostringstream os;
      os << "PulseGeometry: pulses overlap (t_p = " << t_p * 1e9 << " ns > tau = " << tau * 1e9 << " ns)";
      throw SequenceError(os.str());
    }
  }
}

Segment PulseTiming::rotation(double angle, double phase) const {
  if (instantaneous) return Segment::kick(angle, phase);
  if (!(t_p0 > 0.0)) throw SequenceError("PulseTiming: t_p0 must be > 0 for finite pulses");
  return Segment::pulse(t_p0 * angle / kPi, phase);
}

namespace {

constexpr double kPhaseX = 0.0;
constexpr double kPhaseY = kPi / 2.0;

PulseTiming timing_of(const PulseGeometry& g) { return PulseTiming{g.t_p0, g.instantaneous}; }

}  // namespace

PulseSequence make_cpmg_half_unit(const PulseGeometry& geom) {
  geom.validate();
  const double half_gap = geom.free_time() / 2.0;
  PulseSequence s;
  s.segments.push_back(Segment::wait(half_gap));
  if (geom.instantaneous)
    s.segments.push_back(Segment::kick(kPi + geom.delta_theta, kPhaseX));
  else
    s.segments.push_back(Segment::pulse(geom.t_p, kPhaseX));
  s.segments.push_back(Segment::wait(half_gap));
  return s;
}

PulseSequence make_cpmg_unit(const PulseGeometry& geom) {
  PulseSequence s = make_cpmg_half_unit(geom).repeated(2);
  s.periodic_unit = true;
  return s;
}

PulseSequence make_cpmg(const PulseGeometry& geom, int n_pulses, Preparation prep, Projection proj) {
  if (n_pulses < 2 || n_pulses % 2 != 0) throw SequenceError("make_cpmg: n_pulses must be even and >= 2");
  const PulseTiming timing = timing_of(geom);
  PulseSequence s;
  if (prep == Preparation::XPlus) s.segments.push_back(timing.rotation(kPi / 2.0, kPhaseY));
  if (prep == Preparation::XMinus) s.segments.push_back(timing.rotation(3.0 * kPi / 2.0, kPhaseY));
  s.append(make_cpmg_half_unit(geom).repeated(n_pulses));
  if (proj == Projection::HalfPi) s.segments.push_back(timing.rotation(kPi / 2.0, kPhaseY));
  if (proj == Projection::ThreeHalfPi) s.segments.push_back(timing.rotation(3.0 * kPi / 2.0, kPhaseY));
  return s;
}

PulseSequence make_pulsepol(double tau, int repetitions, const PulseTiming& timing) {
  if (!(tau > 0.0)) throw SequenceError("make_pulsepol: tau must be > 0");
  if (repetitions < 1) throw SequenceError("make_pulsepol: repetitions must be >= 1");
  // Each half block carries 2 t_p0 of pulse time around two τ/4 gaps.
  const double gap = timing.instantaneous ? tau / 4.0 : tau / 4.0 - timing.t_p0;
  if (gap < 0.0) throw SequenceError("make_pulsepol: pulses overlap (tau/4 < t_p0)");

  auto block = [&](double outer, double inner) {
    PulseSequence b;
    b.segments = {timing.rotation(kPi / 2.0, outer), Segment::wait(gap), timing.rotation(kPi, inner),
                  Segment::wait(gap), timing.rotation(kPi / 2.0, outer)};
    return b;
  };
  PulseSequence half = block(kPhaseY, kPhaseX);
  half.append(block(kPhaseX, kPhaseY));
  PulseSequence unit = half.repeated(2);
  PulseSequence out = unit.repeated(repetitions);
  out.periodic_unit = repetitions == 1;
  return out;
}

PulseSequence make_novel(double lock_rabi, double lock_duration, const PulseTiming& timing) {
  if (!(lock_duration > 0.0)) throw SequenceError("make_novel: lock_duration must be > 0");
  if (!(lock_rabi > 0.0)) throw SequenceError("make_novel: lock Rabi frequency must be > 0");
  PulseSequence s;
  s.segments.push_back(timing.rotation(kPi / 2.0, kPhaseY));
  s.segments.push_back(Segment::pulse(lock_duration, kPhaseX, lock_rabi));
  return s;
}

namespace {

double effective_phase(const Segment& seg, const SpinSystem& sys) {
  return seg.phase + (seg.phase != 0.0 ? sys.phase_error : 0.0);
}

Operator drive_axis(double phase) {
  return std::cos(phase) * electron_op(Axis::X) + std::sin(phase) * electron_op(Axis::Y);
}

}  // namespace

Operator segment_hamiltonian(const Segment& seg, const SpinSystem& sys) {
  if (seg.is_kick()) throw SequenceError("instantaneous rotation has no finite Hamiltonian");
  const Operator& iz = nuclear_op(Axis::Z);
  const Operator& ix = nuclear_op(Axis::X);
  const Operator& sz = electron_op(Axis::Z);
  Operator h = sys.larmor * iz + sz * (sys.a_perp * ix + sys.a_par * iz) + sys.detuning * sz;
  if (seg.drive_on) {
    const double rabi = seg.rabi.value_or(sys.rabi_nominal) * (1.0 + sys.rabi_error);
    h += rabi * drive_axis(effective_phase(seg, sys));
  }
  return h;
}

Operator segment_propagator(const Segment& seg, const SpinSystem& sys) {
  if (seg.is_kick()) {
    const double angle = *seg.kick_angle * (1.0 + sys.rabi_error);
    return tensor(rotation_xy(angle, effective_phase(seg, sys)), QubitOperator::Identity());
  }
  if (seg.duration == 0.0) return Operator::Identity();
  return expm_hermitian(segment_hamiltonian(seg, sys), seg.duration);
}

Operator sequence_propagator(const PulseSequence& seq, const SpinSystem& sys) {
  // Generated sequences reuse a handful of distinct segments many times.
  std::vector<std::pair<const Segment*, Operator>> cache;
  Operator u = Operator::Identity();
  for (const auto& seg : seq.segments) {
    const Operator* found = nullptr;
    for (const auto& [key, op] : cache) {
      if (key->duration == seg.duration && key->drive_on == seg.drive_on && key->phase == seg.phase &&
          key->rabi == seg.rabi && key->kick_angle == seg.kick_angle) {
        found = &op;
        break;
      }
    }
    if (!found) {
      cache.emplace_back(&seg, segment_propagator(seg, sys));
      found = &cache.back().second;
    }
    u = (*found) * u;
  }
  return u;
}

}  // namespace polcpmg
