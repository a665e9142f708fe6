#include "oracles.hpp"
#include "polcpmg/dynamics.hpp"
#include "polcpmg/experiments.hpp"
#include "polcpmg/units.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace polcpmg;
namespace u = polcpmg::units;

namespace {

QubitOperator nuclear_up() {
  QubitOperator q = QubitOperator::Zero();
  q(0, 0) = 1.0;
  return q;
}

QubitOperator nuclear_down() {
  QubitOperator q = QubitOperator::Zero();
  q(1, 1) = 1.0;
  return q;
}

ProtocolRun cpmg_run(const PulseGeometry& g, int n, int cycles) {
  ProtocolRun run;
  run.geom = g;
  run.pulses = n;
  run.cycles = cycles;
  return run;
}

PulseGeometry on_branch(const SpinSystem& sys, double th, Branch b, bool instantaneous) {
  const auto g = instantaneous ? PulseGeometry::instantaneous_pulses(th, sys.nominal_pi_duration(), u::ns(300))
                               : PulseGeometry::from_delta_theta(th, sys.nominal_pi_duration(), u::ns(300));
  return g.with_tau(resonance_tau(g, sys, b));
}

std::size_t argmin_signal(const ScanResult& r) {
  const auto s = r.column("signal");
  return static_cast<std::size_t>(std::min_element(s.begin(), s.end()) - s.begin());
}

}  // namespace

TEST_CASE("strobed evolution") {
  const DensityMatrix rho0 = DensityMatrix::product(DensityMatrix::pure(basis::x_plus()), DensityMatrix::maximally_mixed(2));
  const auto traj = evolve_strobe(rho0, Operator::Identity(), 5);
  REQUIRE(traj.size() == 6);
  for (const auto& r : traj) {
    CHECK(observe(r).coherence == doctest::Approx(1.0));
    CHECK(observe(r).polarisation == doctest::Approx(0.0));
  }
  CHECK_THROWS_AS(evolve_strobe(rho0, Operator::Identity(), -1), std::invalid_argument);
}

TEST_CASE("CPMG null with ideal pulses") {
  const SpinSystem sys = SpinSystem::reference();
  const auto g = PulseGeometry::instantaneous_pulses(0.0, u::ns(40), tau_zero(sys));
  const DensityMatrix rho0 = DensityMatrix::product(DensityMatrix::pure(basis::x_plus()), DensityMatrix::maximally_mixed(2));
  const Operator half = sequence_propagator(make_cpmg_half_unit(g), sys);
  const auto traj = evolve_strobe(rho0, half, 64);
  for (const auto& r : traj) CHECK(std::abs(observe(r).polarisation) <= 1e-9);

  SUBCASE("any tau") {
    for (double tau : {180.0, 250.0, 301.0}) {
      const auto run = cpmg_run(g.with_tau(u::ns(tau)), 32, 3);
      for (double p : run_polarisation_protocol(run, sys).polarisation) CHECK(std::abs(p) <= 1e-9);
    }
  }
}

TEST_CASE("first-order flip on tau minus from spin up") {
  SpinSystem sys = SpinSystem::reference();
  sys.a_perp = 0.05 * sys.larmor;
  const double th = u::kPi / 10;
  const auto g = on_branch(sys, th, Branch::Minus, true);
  const double r = polarisation_rate(g, sys, Branch::Minus).rate;
  const DensityMatrix rho0 = DensityMatrix::product(DensityMatrix::pure(basis::x_plus()), DensityMatrix::pure(basis::up()));
  const int k_max = static_cast<int>(std::ceil(u::kPi / std::abs(r)));
  const auto traj = evolve_strobe(rho0, sequence_propagator(make_cpmg_unit(g), sys), k_max);
  double worst = 0.0;
  for (int k = 0; k <= k_max; ++k) {
    const double s = std::sin(r * k);
    worst = std::max(worst, std::abs(observe(traj[static_cast<std::size_t>(k)]).polarisation - (1.0 - 2.0 * s * s)));
  }
  CHECK(worst <= 0.02);
}

TEST_CASE("polarisation protocol") {
  const SpinSystem sys = SpinSystem::reference();
  const auto gp = on_branch(sys, u::deg(18), Branch::Plus, false);
  const auto gm = on_branch(sys, u::deg(18), Branch::Minus, false);

  SUBCASE("no cycles") {
    const auto res = run_polarisation_protocol(cpmg_run(gp, 32, 0), sys);
    REQUIRE(res.polarisation.size() == 1);
    CHECK(res.polarisation[0] == 0.0);
  }
  SUBCASE("X minus flips the sign") {
    ProtocolRun run = cpmg_run(gp, 32, 5);
    const double plus = run_polarisation_protocol(run, sys).polarisation.back();
    run.init = ElectronInit::XMinus;
    const double minus = run_polarisation_protocol(run, sys).polarisation.back();
    CHECK(plus > 0.3);
    CHECK(minus == doctest::Approx(-plus).epsilon(0.01));  // exact only for ideal π pulses
  }
  SUBCASE("branch duality and saturation") {
    // T = R N τ ≈ 2 ms
    const auto plus = run_polarisation_protocol(cpmg_run(gp, 32, 200), sys).polarisation;
    const auto minus = run_polarisation_protocol(cpmg_run(gm, 32, 200), sys).polarisation;
    CHECK(plus.back() > 0.9);
    CHECK(minus.back() < -0.9);
    for (std::size_t k = 0; k < plus.size(); ++k) {
      CHECK(std::abs(plus[k]) <= 1.0 + 1e-9);
      CHECK(std::abs(minus[k]) <= 1.0 + 1e-9);
    }
  }
  SUBCASE("state stays physical") {
    ProtocolRun run = cpmg_run(gp, 32, 50);
    run.nuclear_init = nuclear_down();
    const auto res = run_polarisation_protocol(run, sys);
    CHECK(std::abs(res.nuclear.trace() - 1.0) < 1e-9);
    CHECK(hermiticity_error(res.nuclear) < 1e-12);
    Eigen::SelfAdjointEigenSolver<QubitOperator> es(res.nuclear);
    CHECK(es.eigenvalues().minCoeff() > -1e-9);
  }
}

TEST_CASE("coherence spectrum") {
  SpinSystem sys = SpinSystem::reference();
  const auto grid = linspace(u::ns(200), u::ns(330), 261);

  SUBCASE("no coupling gives a flat spectrum") {
    sys.a_perp = 0.0;
    const auto g = PulseGeometry::instantaneous_pulses(u::deg(18), u::ns(40), grid.front());
    const auto r = coherence_spectrum(cpmg_run(g, 32, 1), sys, grid);
    for (double s : r.column("signal")) CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("single dip at tau0 without pulse error") {
    const auto g = PulseGeometry::instantaneous_pulses(0.0, u::ns(40), grid.front());
    const auto r = coherence_spectrum(cpmg_run(g, 32, 1), sys, grid);
    const std::size_t k = argmin_signal(r);
    CHECK(std::abs(grid[k] - tau_zero(sys)) < u::ns(1.0));
    CHECK(r.column("signal")[k] < 0.5);
  }
  SUBCASE("polarised nucleus resolves one branch") {
    const double th = u::kPi / 10;
    const auto g = PulseGeometry::instantaneous_pulses(th, u::ns(40), grid.front());
    const auto r = coherence_spectrum(cpmg_run(g, 32, 1), sys, grid, nuclear_up());
    const auto s = r.column("signal");
    auto depth_near = [&](double tau) {
      double lo = 1.0;
      for (std::size_t k = 0; k < grid.size(); ++k)
        if (std::abs(grid[k] - tau) < u::ns(3)) lo = std::min(lo, s[k]);
      return 1.0 - lo;
    };
    const double tp = tau_zero(sys) * (1 + th / u::kPi), tm = tau_zero(sys) * (1 - th / u::kPi);
    CHECK(depth_near(tm) > 0.3);
    CHECK(depth_near(tp) < 0.05);
  }
  SUBCASE("signal normalisation") {
    const auto g = PulseGeometry::from_delta_theta(u::deg(18), u::ns(40), u::ns(280));
    const auto c = coherence_point(g, 16, sys, QubitOperator::Identity() / 2.0);
    CHECK(c.signal == doctest::Approx(0.5 * (1 + c.p0_three_half - c.p0_half)));
    CHECK(c.p0_half >= -1e-12);
    CHECK(c.p0_half <= 1 + 1e-12);
  }
  CHECK_THROWS_AS(coherence_spectrum(cpmg_run(PulseGeometry::instantaneous_pulses(0, u::ns(40), u::ns(1)), 2, 1), sys, {}),
                  std::invalid_argument);
}

TEST_CASE("detuning ensembles") {
  const SpinSystem sys = SpinSystem::reference();
  SUBCASE("single line is the identity") {
    const auto f = [](const SpinSystem& s) { return s.detuning * 2.0; };
    CHECK(average_over_ensemble(DetuningEnsemble::single(), sys, f) == 0.0);
    CHECK(average_over_ensemble(DetuningEnsemble::single(3.0), sys, f) == 6.0);
  }
  SUBCASE("gauss-hermite rule") {
    std::vector<double> x, w;
    gauss_hermite(7, x, w);
    // ∫ e^{-x²} x^{2m} dx = Γ(m + 1/2)
    for (int m = 0; m <= 6; ++m) {
      double s = 0.0;
      for (int i = 0; i < 7; ++i) s += w[i] * std::pow(x[i], 2 * m);
      CHECK(s == doctest::Approx(std::tgamma(m + 0.5)).epsilon(1e-12));
    }
    CHECK(x[3] == 0.0);
    CHECK(x[0] == -x[6]);
  }
  SUBCASE("nitrogen triplet") {
    const auto e = DetuningEnsemble::nitrogen14(u::mhz(1.0), 7);
    CHECK_NOTHROW(e.validate());
    const auto nodes = e.nodes();
    CHECK(nodes.size() == 21);
    double wsum = 0, mean = 0, var = 0;
    for (const auto& n : nodes) {
      wsum += n.weight;
      mean += n.weight * n.detuning;
    }
    for (const auto& n : nodes) var += n.weight * (n.detuning - mean) * (n.detuning - mean);
    CHECK(wsum == doctest::Approx(1.0));
    CHECK(u::to_mhz(mean) == doctest::Approx(0.3 * 2.2).epsilon(1e-9));
    // Line spread plus Gaussian width σ = FWHM / 2.3548.
    const double sigma = 1.0 / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    const double lines = 0.5 * 2.2 * 2.2 + 0.2 * 2.2 * 2.2 - 0.66 * 0.66;
    CHECK(var / (u::mhz(1) * u::mhz(1)) == doctest::Approx(lines + sigma * sigma).epsilon(1e-9));
    const auto flipped = DetuningEnsemble::nitrogen14(u::mhz(1.0), 7, N14Mapping::MinusIsNegative);
    CHECK(flipped.lines[0].offset == -e.lines[0].offset);
  }
  SUBCASE("invalid ensembles") {
    DetuningEnsemble e;
    e.lines = {{0.0, 0.4}, {1.0, 0.4}};
    CHECK_THROWS_AS(e.validate(), std::invalid_argument);
    e.normalise();
    CHECK_NOTHROW(e.validate());
    e.lines.clear();
    CHECK_THROWS_AS(e.validate(), std::invalid_argument);
  }
  SUBCASE("bath average") {
    const auto f = [](const SpinSystem& s) { return s.a_perp; };
    CHECK(average_over_bath({1.0, 3.0}, DetuningEnsemble::single(), sys, f) == doctest::Approx(2.0));
    CHECK(average_over_bath({}, DetuningEnsemble::single(), sys, f) == sys.a_perp);
  }
}

TEST_CASE("dip ratio estimate") {
  CHECK(dip_polarisation_estimate(0.4, 0.4) == 0.0);
  CHECK(dip_polarisation_estimate(0.6, 0.2) == doctest::Approx(0.5));
  CHECK(dip_polarisation_estimate(0.0, 0.0) == 0.0);
}
