// Golden-file regression for reduced versions of the fig2c, fig2d and fig3d scans.
//   test_golden <dir>          compare against <dir>/*.csv
//   test_golden --regen <dir>  rewrite the golden files
// Each scan also carries a qualitative check that does not depend on the files.
#include "polcpmg/experiments.hpp"
#include "polcpmg/scan_result.hpp"
#include "polcpmg/units.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

using namespace polcpmg;
namespace u = polcpmg::units;
namespace fs = std::filesystem;

namespace {

constexpr double kTolerance = 1e-9;

int failures = 0;

void expect(bool ok, const std::string& what) {
  std::cout << (ok ? "ok   " : "FAIL ") << what << '\n';
  if (!ok) ++failures;
}

TpTauScan reduced_tp_tau() {
  TpTauScan scan;
  scan.t_p = {u::ns(33), u::ns(47)};  // δθ = ∓31.5°
  for (double t : linspace(200, 330, 66)) scan.tau.push_back(u::ns(t));
  scan.threads = 1;
  return scan;
}

DetuningEnsemble reduced_n14() { return DetuningEnsemble::nitrogen14(u::mhz(1), 3); }

// Deepest dip (1 − signal) of row `row` inside [lo, hi] ns.
double depth(const ScanResult& r, std::size_t row, double lo, double hi) {
  const auto& tau = r.axes[1].values;
  double best = 1.0;
  for (std::size_t k = 0; k < tau.size(); ++k)
    if (tau[k] >= lo && tau[k] <= hi) best = std::min(best, r.at(row * tau.size() + k, 0));
  return 1.0 - best;
}

// Rows: δθ = −31.5° (τ₊ ≈ 217 ns, τ₋ ≈ 309 ns) and +31.5° (τ₋ ≈ 217 ns, τ₊ ≈ 309 ns).
// The ¹⁴N lines add shifted dips nearby, so the windows hug the nominal positions.
constexpr double kLowLo = 213, kLowHi = 221, kHighLo = 305, kHighHi = 313;

std::vector<std::pair<std::string, ScanResult>> fig2c() {
  const SpinSystem sys = SpinSystem::reference();
  TpTauScan scan = reduced_tp_tau();
  const auto bare = scan_tp_tau(sys, reduced_n14(), scan);
  scan.r_pol = 100;
  scan.pol_branch = Branch::Plus;
  const auto plus = scan_tp_tau(sys, reduced_n14(), scan);
  scan.pol_branch = Branch::Minus;
  const auto minus = scan_tp_tau(sys, reduced_n14(), scan);

  // Pre-polarising on one branch removes that branch's dip and leaves the other.
  for (std::size_t row : {0u, 1u}) {
    const std::string tag = row == 0 ? " at negative delta theta" : " at positive delta theta";
    // τ₊ sits in the high window for δθ > 0 and in the low one for δθ < 0.
    const double pl = row == 1 ? kHighLo : kLowLo, ph = row == 1 ? kHighHi : kLowHi;
    const double ml = row == 1 ? kLowLo : kHighLo, mh = row == 1 ? kLowHi : kHighHi;
    expect(depth(plus, row, pl, ph) < 0.5 * depth(bare, row, pl, ph), "fig2c: plus pre-polarisation suppresses the tau+ dip" + tag);
    expect(depth(plus, row, ml, mh) > 0.8 * depth(bare, row, ml, mh), "fig2c: plus pre-polarisation keeps the tau- dip" + tag);
    expect(depth(minus, row, ml, mh) < 0.5 * depth(bare, row, ml, mh), "fig2c: minus pre-polarisation suppresses the tau- dip" + tag);
    expect(depth(minus, row, pl, ph) > 0.8 * depth(bare, row, pl, ph), "fig2c: minus pre-polarisation keeps the tau+ dip" + tag);
  }
  return {{"fig2c_bare", bare}, {"fig2c_plus", plus}, {"fig2c_minus", minus}};
}

std::vector<std::pair<std::string, ScanResult>> fig2d() {
  const SpinSystem sys = SpinSystem::reference();
  TpTauScan scan = reduced_tp_tau();
  scan.nuclear = QubitOperator::Zero();
  scan.nuclear(0, 0) = 1.0;
  const auto up = scan_tp_tau(sys, reduced_n14(), scan);
  scan.nuclear = QubitOperator::Zero();
  scan.nuclear(1, 1) = 1.0;
  const auto down = scan_tp_tau(sys, reduced_n14(), scan);

  // A polarised nucleus only flips on one branch. Checked at positive δθ only: at
  // −31.5° the ¹⁴N lines leave both dips visible for either nuclear state.
  const double up_ratio = depth(up, 1, kLowLo, kLowHi) / depth(up, 1, kHighLo, kHighHi);
  const double down_ratio = depth(down, 1, kLowLo, kLowHi) / depth(down, 1, kHighLo, kHighHi);
  expect((up_ratio > 3.0 && down_ratio < 1.0 / 3.0) || (up_ratio < 1.0 / 3.0 && down_ratio > 3.0),
         "fig2d: up and down select opposite dips at positive delta theta");
  return {{"fig2d_up", up}, {"fig2d_down", down}};
}

std::vector<std::pair<std::string, ScanResult>> fig3d() {
  const SpinSystem sys = SpinSystem::reference();
  PolarisationVsDeltaTheta cfg;
  for (double d : {-60.0, -30.0, -10.0, 10.0, 30.0, 60.0}) cfg.theta_grid.push_back(u::deg(d));
  cfg.cycles = 100;
  cfg.threads = 1;
  const auto r = polarisation_vs_delta_theta(sys, reduced_n14(), cfg);

  // Detuning breaks the δθ symmetry in favour of positive values on both branches.
  for (const char* field : {"p_plus", "p_minus"}) {
    const auto p = r.column(field);
    double neg = 0.0, pos = 0.0;
    for (std::size_t i = 0; i < 3; ++i) neg = std::max(neg, std::abs(p[i]));
    for (std::size_t i = 3; i < 6; ++i) pos = std::max(pos, std::abs(p[i]));
    expect(pos > neg, std::string("fig3d: positive delta theta is better for ") + field);
  }
  return {{"fig3d", r}};
}

bool same(const ScanResult& a, const ScanResult& b) {
  if (a.axes.size() != b.axes.size() || a.values.size() != b.values.size()) return false;
  for (std::size_t i = 0; i < a.axes.size(); ++i)
    if (a.axes[i].values.size() != b.axes[i].values.size()) return false;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    if (!(std::abs(a.values[i] - b.values[i]) <= kTolerance)) return false;
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  bool regen = false;
  fs::path dir;
  if (argc == 3 && std::strcmp(argv[1], "--regen") == 0) {
    regen = true;
    dir = argv[2];
  } else if (argc == 2) {
    dir = argv[1];
  } else {
    std::cerr << "usage: test_golden [--regen] <dir>\n";
    return 2;
  }

  try {
    for (const auto& scan : {fig2c, fig2d, fig3d}) {
      for (const auto& [name, result] : scan()) {
        const fs::path path = dir / (name + ".csv");
        if (regen) {
          fs::create_directories(dir);
          write_scan(result, path, OutputFormat::Csv);
          std::cout << "wrote " << path.string() << '\n';
        } else {
          expect(same(result, read_scan(path)), name + ": matches " + path.filename().string());
        }
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return failures == 0 ? 0 : 1;
}
