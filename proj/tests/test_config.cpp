#include "polcpmg/config.hpp"
#include "polcpmg/units.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace polcpmg;
using nlohmann::json;
namespace u = polcpmg::units;

namespace {

json base() {
  return json::parse(R"({
    "command": "resonances",
    "system": {"larmor_mhz": 1.9, "a_perp_khz": 180},
    "sequence": {"t_p_ns": 44, "n_pulses": 32}
  })");
}

std::string error_path(const json& j, bool resolve_too = true) {
  try {
    const RunConfig c = load_config(j);
    if (resolve_too) (void)resolve(c);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

}  // namespace

TEST_CASE("required larmor frequency") {
  json j = base();
  j["system"].erase("larmor_mhz");
  CHECK(error_path(j) == "system.larmor_mhz");
  try {
    (void)to_system(load_config(j));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("system.larmor_mhz") != std::string::npos);
  }
}

TEST_CASE("grids") {
  json j = base();
  j["command"] = "spectrum";
  SUBCASE("explicit array") {
    j["scan"] = {{"tau_ns", {200, 210, 230}}};
    CHECK(load_config(j).scan.tau_ns == std::vector<double>{200, 210, 230});
  }
  SUBCASE("start stop points") {
    j["scan"] = {{"tau_ns", {{"start", 200}, {"stop", 300}, {"points", 5}}}};
    CHECK(load_config(j).scan.tau_ns == std::vector<double>{200, 225, 250, 275, 300});
  }
  SUBCASE("empty") {
    j["scan"] = {{"tau_ns", json::array()}};
    CHECK(error_path(j, false) == "scan.tau_ns");
  }
  SUBCASE("non-monotone") {
    j["scan"] = {{"detuning_mhz", {0, 1, 0.5}}};
    CHECK(error_path(j, false) == "scan.detuning_mhz");
  }
  SUBCASE("incomplete range") {
    j["scan"] = {{"tau_ns", {{"start", 200}, {"stop", 300}}}};
    CHECK(error_path(j, false) == "scan.tau_ns");
  }
}

TEST_CASE("unknown and mistyped keys") {
  json j = base();
  j["system"]["larmor"] = 1.9;
  CHECK(error_path(j, false) == "system.larmor");
  j = base();
  j["bogus"] = 1;
  CHECK(error_path(j, false) == "bogus");
  j = base();
  j["sequence"]["n_pulses"] = "many";
  CHECK(error_path(j, false) == "sequence.n_pulses");
  j = base();
  j["sequence"]["n_pulses"] = 31;
  CHECK(error_path(j, false) == "sequence.n_pulses");
  j = base();
  j["schema_version"] = 2;
  CHECK(error_path(j, false) == "schema_version");
  j = base();
  j["sequence"]["branch"] = "sideways";
  CHECK(error_path(j) == "sequence.branch");
}

TEST_CASE("resolve derives timing") {
  const RunConfig c = resolve(load_config(base()));
  REQUIRE(c.sequence.t_p0_ns);
  CHECK(*c.sequence.t_p0_ns == doctest::Approx(40.0));
  CHECK(*c.sequence.delta_theta_deg == doctest::Approx(18.0));
  REQUIRE(c.sequence.tau_ns);
  CHECK(std::abs(*c.sequence.tau_ns - 289.5) < 1.5);
  CHECK(c.output.prefix == "resonances");

  const PulseGeometry g = to_geometry(c);
  CHECK(g.t_p == doctest::Approx(u::ns(44)));
  CHECK(to_system(c).larmor == doctest::Approx(u::mhz(1.9)));

  json j = base();
  j["sequence"]["delta_theta_deg"] = 20.0;
  CHECK(error_path(j) == "sequence.delta_theta_deg");
  j["sequence"]["delta_theta_deg"] = 18.0;
  CHECK(error_path(j) == "<no error>");
}

TEST_CASE("resolve is idempotent and dump round-trips") {
  json j = base();
  j["command"] = "spectrum";
  j["ensemble"] = {{"preset", "n14"}};
  j["scan"] = {{"mode", "tau"}, {"tau_ns", {{"start", 220}, {"stop", 300}, {"points", 9}}}};
  const RunConfig once = resolve(load_config(j));
  CHECK(resolve(once) == once);
  CHECK(load_config(dump_config(once)) == once);
  CHECK(load_config(json::parse(dump_config(once).dump())) == once);
}

TEST_CASE("nv frequency") {
  NvBlock nv;
  nv.field_gauss = 1765;
  CHECK(nv_frequency_mhz(nv) == doctest::Approx(2072.0));
  nv.field_gauss = 0;
  CHECK(nv_frequency_mhz(nv) == doctest::Approx(2870.0));
  nv.field_gauss = 1025;
  CHECK(std::abs(nv_frequency_mhz(nv)) < 1e-9);

  json j = base();
  j["nv"] = {{"field_gauss", 1765}, {"drive_mhz", 2071}};
  CHECK(*resolve(load_config(j)).system.detuning_mhz == doctest::Approx(1.0));
  j["system"]["detuning_mhz"] = 0.5;
  CHECK(error_path(j) == "system.detuning_mhz");
  j["system"]["detuning_mhz"] = 1.0;
  CHECK(error_path(j) == "<no error>");
  j = base();
  j["nv"] = json::object();
  CHECK(error_path(j, false) == "nv.field_gauss");
}

TEST_CASE("ensemble presets") {
  json j = base();
  j["ensemble"] = {{"preset", "custom"}, {"lines", {{{"offset_mhz", -1}, {"weight", 2}}, {{"offset_mhz", 1}, {"weight", 6}}}}};
  const RunConfig c = resolve(load_config(j));
  REQUIRE(c.ensemble.lines.size() == 2);
  CHECK(c.ensemble.lines[0].weight == doctest::Approx(0.25));
  CHECK(c.ensemble.lines[1].weight == doctest::Approx(0.75));
  CHECK_NOTHROW(to_ensemble(c).validate());

  j["ensemble"] = {{"preset", "n14"}};
  const auto e = to_ensemble(resolve(load_config(j)));
  CHECK(e.lines.size() == 3);
  CHECK(e.samples_per_line == 7);
  CHECK(u::to_mhz(e.broadening_fwhm) == doctest::Approx(1.0));
  CHECK(u::to_mhz(e.lines[0].offset) == doctest::Approx(2.2));

  j["ensemble"] = {{"preset", "n14"}, {"n14_mapping", "minus_negative"}};
  CHECK(u::to_mhz(to_ensemble(resolve(load_config(j))).lines[0].offset) == doctest::Approx(-2.2));
  j["ensemble"] = {{"preset", "wide"}};
  CHECK(error_path(j) == "ensemble.preset");
}

TEST_CASE("protocol families") {
  json j = base();
  j["sequence"] = {{"family", "pulsepol"}};
  RunConfig c = resolve(load_config(j));
  REQUIRE(c.sequence.tau_ns);
  CHECK(*c.sequence.tau_ns == doctest::Approx(3 * 263.1579).epsilon(1e-5));
  REQUIRE(c.sequence.repetitions);
  CHECK(*c.sequence.repetitions >= 1);
  CHECK(to_protocol(c).family == Family::PulsePol);

  j["sequence"] = {{"family", "custom"}, {"text", "wait 100ns; pulse x 40ns"}};
  c = resolve(load_config(j));
  CHECK(to_protocol(c).custom->segments.size() == 2);
  j["sequence"] = {{"family", "custom"}, {"text", "wait 100ns; pulse q 40ns"}};
  CHECK_THROWS_AS(to_protocol(resolve(load_config(j))), ConfigError);
}

TEST_CASE("config file loading") {
  const auto path = std::filesystem::temp_directory_path() / "polcpmg_cfg_test.json";
  {
    std::ofstream os(path);
    os << "// comment\n" << base().dump(2) << '\n';
  }
  CHECK(load_config_file(path).system.larmor_mhz == 1.9);
  {
    std::ofstream os(path);
    os << "{ not json";
  }
  CHECK_THROWS_AS(load_config_file(path), ConfigError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config_file(path), ConfigError);
}
