#include "polcpmg/floquet.hpp"

#include "polcpmg/units.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace polcpmg {

using units::kPi;
using units::kTwoPi;

double wrap_phase(double x) {
  double y = std::remainder(x, kTwoPi);  // [−π, π]
  if (y <= -kPi) y += kTwoPi;
  return y;
}

double phase_distance(double a, double b) { return std::abs(std::remainder(a - b, kTwoPi)); }

namespace {

// Make the largest component of v real and positive so mode vectors are
// comparable between calls.
void fix_gauge(Eigen::Ref<Eigen::Vector4cd> v) {
  Eigen::Index k = 0;
  v.cwiseAbs().maxCoeff(&k);
  const Complex c = v(k);
  if (std::abs(c) > 0.0) v *= std::conj(c) / std::abs(c);
}

bool lex_less(const Eigen::Vector4cd& a, const Eigen::Vector4cd& b) {
  for (int i = 0; i < 4; ++i) {
    if (a(i).real() != b(i).real()) return a(i).real() < b(i).real();
    if (a(i).imag() != b(i).imag()) return a(i).imag() < b(i).imag();
  }
  return false;
}

}  // namespace

Eigenphases eigenphases(const Operator& u) {
  // U is normal, so the Schur form is diagonal and Z holds orthonormal eigenvectors.
  Eigen::ComplexSchur<Operator> schur(u);
  const Operator& t = schur.matrixT();
  Operator z = schur.matrixU();
  std::array<int, 4> order{0, 1, 2, 3};
  Eigen::Vector4d ph;
  for (int i = 0; i < 4; ++i) {
    ph(i) = wrap_phase(-std::arg(t(i, i)));
    fix_gauge(z.col(i));
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (ph(a) != ph(b)) return ph(a) < ph(b);
    return lex_less(z.col(a), z.col(b));
  });
  Eigenphases out;
  for (int i = 0; i < 4; ++i) {
    out.phases(i) = ph(order[i]);
    out.modes.col(i) = z.col(order[i]);
  }
  return out;
}

Operator unit_propagator(const PulseSequence& seq, const SpinSystem& sys) {
  if (!seq.periodic_unit) throw SequenceError("unit_propagator: sequence is not flagged as a periodic unit");
  seq.validate();
  return sequence_propagator(seq, sys);
}

PulsePropagatorCoeffs pulse_coeffs(const PulseGeometry& geom, const SpinSystem& sys) {
  geom.validate();
  const double dw = sys.detuning;
  const double rabi = sys.rabi_nominal * (1.0 + sys.rabi_error);
  PulsePropagatorCoeffs c;
  double beta = 0.0, theta = 0.0, free = 0.0;
  if (geom.instantaneous) {
    beta = (kPi + geom.delta_theta) * (1.0 + sys.rabi_error) / 2.0;
    free = geom.tau;
    c.omega_eff = rabi;
  } else {
    c.omega_eff = std::hypot(rabi, dw);
    theta = std::atan(dw / rabi);
    beta = c.omega_eff * geom.t_p / 2.0;
    free = geom.tau - geom.t_p;
  }
  c.theta_dw = theta;
  const double cf = std::cos(dw * free / 2.0), sf = std::sin(dw * free / 2.0);
  c.a0 = cf * std::cos(beta) - sf * std::sin(beta) * std::sin(theta);
  c.ax = std::sin(beta) * std::cos(theta);
  c.az = sf * std::cos(beta) + cf * std::sin(beta) * std::sin(theta);
  if (std::abs(c.a0) > 1.0 + 1e-12) {
    std::ostringstream os;
    os << "pulse_coeffs: |a0| = " << std::abs(c.a0) << " exceeds 1";
    throw std::domain_error(os.str());
  }
  c.eps_p = 4.0 * std::acos(std::clamp(c.a0, -1.0, 1.0));
  if (c.ax != 0.0)
    c.theta_p = std::atan(c.az / c.ax);
  else
    c.theta_p = c.az == 0.0 ? 0.0 : std::copysign(kPi / 2.0, c.az);
  return c;
}

FloquetSpectrum unperturbed_spectrum(const PulseGeometry& geom, const SpinSystem& sys,
                                     const std::vector<double>& tau_grid) {
  FloquetSpectrum spec;
  spec.tau_grid = tau_grid;
  const Qubit nuc[2] = {basis::up(), basis::down()};
  for (double tau : tau_grid) {
    const PulseGeometry g = geom.with_tau(tau);
    const PulsePropagatorCoeffs c = pulse_coeffs(g, sys);
    const double wt = sys.larmor * tau;
    const double he = c.eps_p / 2.0;
    spec.phases.push_back({wrap_phase(wt + he), wrap_phase(-wt + he), wrap_phase(wt - he), wrap_phase(-wt - he)});
    // Electron eigenvectors of n·σ with n ∝ (ax, 0, az).
    const double n = std::hypot(c.ax, c.az);
    const double nx = n > 0 ? c.ax / n : 1.0, nz = n > 0 ? c.az / n : 0.0;
    const double half = std::acos(std::clamp(nz, -1.0, 1.0)) / 2.0;
    const Qubit plus(std::cos(half), nx >= 0 ? std::sin(half) : -std::sin(half));
    const Qubit minus(-plus(1), plus(0));
    Operator m;
    m.col(0) = basis::product(plus, nuc[0]);
    m.col(1) = basis::product(plus, nuc[1]);
    m.col(2) = basis::product(minus, nuc[0]);
    m.col(3) = basis::product(minus, nuc[1]);
    spec.modes.push_back(m);
  }
  return spec;
}

FloquetSpectrum floquet_spectrum(const UnitBuilder& unit, const SpinSystem& sys,
                                 const std::vector<double>& tau_grid) {
  FloquetSpectrum spec;
  spec.tau_grid = tau_grid;
  std::array<int, 4> perm_init{0, 1, 2, 3};
  std::vector<std::array<int, 4>> perms;
  do perms.push_back(perm_init);
  while (std::next_permutation(perm_init.begin(), perm_init.end()));

  for (std::size_t k = 0; k < tau_grid.size(); ++k) {
    const Eigenphases e = eigenphases(unit_propagator(unit(tau_grid[k]), sys));
    std::array<int, 4> best = perms.front();
    if (k > 0) {
      const Operator& prev = spec.modes.back();
      const Eigen::Matrix4d overlap = (prev.adjoint() * e.modes).cwiseAbs2();
      double best_score = -1.0;
      for (const auto& p : perms) {  // first maximum in lexicographic order wins
        double s = 0.0;
        for (int b = 0; b < 4; ++b) s += overlap(b, p[b]);
        if (s > best_score + 1e-12) {
          best_score = s;
          best = p;
        }
      }
    }
    std::array<double, 4> ph{};
    Operator modes;
    for (int b = 0; b < 4; ++b) {
      ph[b] = e.phases(best[b]);
      modes.col(b) = e.modes.col(best[b]);
    }
    spec.phases.push_back(ph);
    spec.modes.push_back(modes);
  }
  return spec;
}

ResonanceNotFound::ResonanceNotFound(double lo, double hi)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "no resonance in bracket [" << lo * 1e9 << " ns, " << hi * 1e9 << " ns]";
        return os.str();
      }()),
      lo_(lo),
      hi_(hi) {}

double tau_zero(const SpinSystem& sys) { return kPi / sys.larmor; }

double crossing_mismatch(const PulseGeometry& geom, const SpinSystem& sys, Branch branch) {
  const double eps = pulse_coeffs(geom, sys).eps_p;
  const double wt2 = 2.0 * sys.larmor * geom.tau;
  return branch == Branch::Plus ? wt2 - eps : wt2 + eps - 2.0 * kTwoPi;
}

double resonance_tau(const PulseGeometry& geom, const SpinSystem& sys, Branch branch, ResonanceMethod method) {
  const double sgn = branch == Branch::Plus ? 1.0 : -1.0;
  const double seed = tau_zero(sys) * (1.0 + sgn * geom.delta_theta / kPi);
  if (method == ResonanceMethod::Analytic) return seed;

  double lo = 0.5 * seed, hi = 1.5 * seed;
  if (!geom.instantaneous) lo = std::max(lo, geom.t_p);
  if (!(hi > lo)) throw ResonanceNotFound(lo, hi);
  auto f = [&](double t) { return crossing_mismatch(geom.with_tau(t), sys, branch); };

  // Scan for the sign change closest to the seed, then bisect.
  constexpr int kScan = 400;
  double best_a = 0, best_b = 0, best_dist = INFINITY;
  double ta = lo, fa = f(lo);
  for (int i = 1; i <= kScan; ++i) {
    const double tb = lo + (hi - lo) * i / kScan;
    const double fb = f(tb);
    if ((fa <= 0.0 && fb >= 0.0) || (fa >= 0.0 && fb <= 0.0)) {
      const double d = std::abs(0.5 * (ta + tb) - seed);
      if (d < best_dist) {
        best_dist = d;
        best_a = ta;
        best_b = tb;
      }
    }
    ta = tb;
    fa = fb;
  }
  if (!std::isfinite(best_dist)) throw ResonanceNotFound(lo, hi);
  double a = best_a, b = best_b, fa2 = f(a);
  if (fa2 == 0.0) return a;
  if (f(b) == 0.0) return b;
  while (b - a > 1e-13) {
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    if (fm == 0.0) return m;
    if ((fm < 0.0) == (fa2 < 0.0)) {
      a = m;
      fa2 = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

ResonancePair resonance_positions(const PulseGeometry& geom, const SpinSystem& sys, ResonanceMethod method) {
  ResonancePair p;
  p.method = method;
  p.tau_minus = resonance_tau(geom, sys, Branch::Minus, method);
  p.tau_plus = resonance_tau(geom, sys, Branch::Plus, method);
  return p;
}

double rate_factor_g(double larmor, double tau, double eps, double theta_p) {
  const double q = larmor * tau / 4.0;
  return std::cos(theta_p) * std::sin(q) * (std::cos(q) + std::cos((2.0 * eps - 3.0 * larmor * tau) / 4.0));
}

RateResult polarisation_rate(const PulseGeometry& geom, const SpinSystem& sys, Branch branch) {
  const PulsePropagatorCoeffs c = pulse_coeffs(geom, sys);
  // On τ₋ the resonant pair swaps electron labels, which flips the sign of δε_p.
  const double eps = branch == Branch::Plus ? c.eps_p : -c.eps_p;
  RateResult r;
  r.g = rate_factor_g(sys.larmor, geom.tau, eps, c.theta_p);
  r.rate = sys.a_perp / sys.larmor * r.g;
  r.t_pol = r.rate != 0.0 ? kPi * geom.tau / std::abs(r.rate) : INFINITY;
  return r;
}

double pulsepol_alpha() { return 2.0 / (3.0 * kPi) * (2.0 + std::sqrt(2.0)); }
double analytic_tpol_novel(const SpinSystem& sys) { return kTwoPi / sys.a_perp; }
double analytic_tpol_pulsepol(const SpinSystem& sys) { return kTwoPi / (pulsepol_alpha() * sys.a_perp); }
double analytic_tpol_polcpmg(const SpinSystem& sys, double delta_theta, Branch branch) {
  const double s = branch == Branch::Plus ? 1.0 : -1.0;
  return kPi * (kPi + s * delta_theta) / (sys.a_perp * std::cos(delta_theta / 2.0));
}

std::vector<AvoidedCrossing> detect_avoided_crossings(const FloquetSpectrum& spec, const CrossingOptions& opts) {
  std::vector<AvoidedCrossing> out;
  const std::size_t n = spec.tau_grid.size();
  if (n < 3) return out;
  std::vector<double> d(n);
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      for (std::size_t k = 0; k < n; ++k) d[k] = phase_distance(spec.phases[k][a], spec.phases[k][b]);
      for (std::size_t k = 1; k + 1 < n; ++k) {
        if (!(d[k] <= d[k - 1] && d[k] < d[k + 1])) continue;
        // Prominence: rise on each side before the curve dips below d[k].
        double left = d[k], right = d[k];
        for (std::size_t j = k; j-- > 0;) {
          if (d[j] < d[k]) break;
          left = std::max(left, d[j]);
        }
        for (std::size_t j = k + 1; j < n; ++j) {
          if (d[j] < d[k]) break;
          right = std::max(right, d[j]);
        }
        // Branches must separate by more than the gap itself on both sides.
        if (std::min(left, right) - d[k] < std::max(opts.prominence, d[k])) continue;
        // Parabola through d² is exact for both hyperbolic and V-shaped minima.
        const double t0 = spec.tau_grid[k - 1], t1 = spec.tau_grid[k], t2 = spec.tau_grid[k + 1];
        const double y0 = d[k - 1] * d[k - 1], y1 = d[k] * d[k], y2 = d[k + 1] * d[k + 1];
        const double denom = (t0 - t1) * (t0 - t2) * (t1 - t2);
        const double A = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom;
        const double B = (t2 * t2 * (y0 - y1) + t1 * t1 * (y2 - y0) + t0 * t0 * (y1 - y2)) / denom;
        const double C = y1 - A * t1 * t1 - B * t1;
        AvoidedCrossing c{t1, d[k], a, b};
        if (A > 0.0) {
          const double tv = std::clamp(-B / (2.0 * A), t0, t2);
          c.tau = tv;
          c.gap = std::sqrt(std::max(0.0, A * tv * tv + B * tv + C));
        }
        out.push_back(c);
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.tau < y.tau; });
  return out;
}

AvoidedCrossing refine_gap(const UnitBuilder& unit, const SpinSystem& sys, double lo, double hi, double tol) {
  auto min_pair = [&](double tau, int* ia, int* ib) {
    const Eigenphases e = eigenphases(unit_propagator(unit(tau), sys));
    double best = INFINITY;
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) {
        const double dd = phase_distance(e.phases(a), e.phases(b));
        if (dd < best) {
          best = dd;
          if (ia) *ia = a;
          if (ib) *ib = b;
        }
      }
    return best;
  };
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = min_pair(c, nullptr, nullptr), fd = min_pair(d, nullptr, nullptr);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = min_pair(c, nullptr, nullptr);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = min_pair(d, nullptr, nullptr);
    }
  }
  AvoidedCrossing out;
  out.tau = 0.5 * (a + b);
  out.gap = min_pair(out.tau, &out.branch_a, &out.branch_b);
  return out;
}

}  // namespace polcpmg
