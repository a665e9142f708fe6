#pragma once
// Independent reference implementations used only by the tests. Nothing here
// calls the library's Hamiltonian or propagator code.

#include "polcpmg/sequences.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <random>

namespace oracle {

using polcpmg::Complex;
using M2 = Eigen::Matrix2cd;
using M4 = Eigen::Matrix4cd;

inline M2 sx() { M2 m; m << 0, 0.5, 0.5, 0; return m; }
inline M2 sy() { M2 m; m << 0, Complex(0, -0.5), Complex(0, 0.5), 0; return m; }
inline M2 sz() { M2 m; m << 0.5, 0, 0, -0.5; return m; }

inline M4 kron2(const M2& a, const M2& b) {
  M4 out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return out;
}

// H for one segment, written out term by term from the model definition.
inline M4 hamiltonian(const polcpmg::Segment& seg, const polcpmg::SpinSystem& s) {
  const M2 id = M2::Identity();
  M4 h = s.larmor * kron2(id, sz()) + kron2(sz(), s.a_perp * sx() + s.a_par * sz()) + s.detuning * kron2(sz(), id);
  if (seg.drive_on) {
    const double omega = seg.rabi.value_or(s.rabi_nominal) * (1.0 + s.rabi_error);
    const double phi = seg.phase + (seg.phase != 0.0 ? s.phase_error : 0.0);
    h += omega * kron2(std::cos(phi) * sx() + std::sin(phi) * sy(), id);
  }
  return h;
}

// Closed-form SU(2) rotation exp(−i a n·σ/2) for a unit vector n.
inline M2 su2(double angle, double nx, double ny, double nz) {
  const double c = std::cos(angle / 2), s = std::sin(angle / 2);
  M2 m;
  m << Complex(c, -s * nz), Complex(-s * ny, -s * nx), Complex(s * ny, -s * nx), Complex(c, s * nz);
  return m;
}

// Classic fourth-order Runge–Kutta for dU/dt = −i H U with fixed step ≤ max_step.
inline M4 rk4(const M4& h, double duration, double max_step = 1e-11) {
  M4 u = M4::Identity();
  if (duration <= 0.0) return u;
  const long n = std::max(1L, static_cast<long>(std::ceil(duration / max_step)));
  const double dt = duration / static_cast<double>(n);
  const M4 a = Complex(0, -1) * h;
  // One step is the degree-4 Taylor polynomial of exp(a dt) for constant H.
  const M4 a1 = a * dt, a2 = a1 * a1 / 2.0, a3 = a2 * a1 / 3.0, a4 = a3 * a1 / 4.0;
  const M4 step = M4::Identity() + a1 + a2 + a3 + a4;
  for (long k = 0; k < n; ++k) u = step * u;
  return u;
}

inline M4 rk4_sequence(const polcpmg::PulseSequence& seq, const polcpmg::SpinSystem& s, double max_step = 1e-11) {
  M4 u = M4::Identity();
  for (const auto& seg : seq.segments) {
    if (seg.is_kick()) {
      const double a = *seg.kick_angle * (1.0 + s.rabi_error);
      const double phi = seg.phase + (seg.phase != 0.0 ? s.phase_error : 0.0);
      u = kron2(su2(a, std::cos(phi), std::sin(phi), 0.0), M2::Identity()) * u;
    } else {
      u = rk4(hamiltonian(seg, s), seg.duration, max_step) * u;
    }
  }
  return u;
}

// Electron-only half-period block [free τ′/2][x pulse t_p][free τ′/2] as a
// direct product of three 2×2 exponentials.
inline M2 half_block(double dw, double omega, double t_p, double free) {
  const double w = std::hypot(omega, dw);
  const M2 f = su2(dw * free / 2, 0, 0, 1);
  const M2 p = w > 0 ? su2(w * t_p, omega / w, 0, dw / w) : M2::Identity();
  return f * p * f;
}

inline double max_abs(const Eigen::MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace oracle
