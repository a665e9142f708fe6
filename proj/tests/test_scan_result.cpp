#include "polcpmg/scan_result.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace polcpmg;

namespace {

ScanResult sample() {
  ScanResult r({{"tau", "ns", {200.0, 250.5, 1.0 / 3.0}}, {"detuning", "MHz", {-1.0, 2e-17}}},
               {{"signal", ""}, {"p0_half", "prob"}});
  for (std::size_t c = 0; c < r.cell_count(); ++c) {
    r.at(c, 0) = std::sin(0.1 + c);
    r.at(c, 1) = 1e-300 * c - 0.125;
  }
  r.meta = {{"note", "x,y"}, {"n", 32}};
  return r;
}

void check_equal(const ScanResult& a, const ScanResult& b) {
  REQUIRE(a.axes.size() == b.axes.size());
  for (std::size_t i = 0; i < a.axes.size(); ++i) {
    CHECK(a.axes[i].name == b.axes[i].name);
    CHECK(a.axes[i].unit == b.axes[i].unit);
    CHECK(a.axes[i].values == b.axes[i].values);
  }
  REQUIRE(a.fields.size() == b.fields.size());
  for (std::size_t i = 0; i < a.fields.size(); ++i) {
    CHECK(a.fields[i].name == b.fields[i].name);
    CHECK(a.fields[i].unit == b.fields[i].unit);
  }
  CHECK(a.values == b.values);
  CHECK(a.meta == b.meta);
}

}  // namespace

TEST_CASE("cell indexing") {
  const ScanResult r = sample();
  CHECK(r.cell_count() == 6);
  CHECK(r.cell_index({1, 1}) == 3);
  CHECK(r.cell_coords(5) == std::vector<std::size_t>{2, 1});
  CHECK(r.field_index("p0_half") == 1);
  CHECK_THROWS_AS(r.field_index("nope"), std::out_of_range);
  CHECK_THROWS_AS(r.cell_index({3, 0}), std::out_of_range);
  CHECK(r.column("signal").size() == 6);
}

TEST_CASE("validation") {
  ScanResult r = sample();
  CHECK_NOTHROW(r.validate());
  r.values.pop_back();
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  r = sample();
  r.values[2] = NAN;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  r = sample();
  r.axes[0].values.clear();
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
}

TEST_CASE("csv round trip is exact") {
  const ScanResult r = sample();
  check_equal(r, from_csv(to_csv(r)));
}

TEST_CASE("json round trip is exact") {
  const ScanResult r = sample();
  check_equal(r, from_json(nlohmann::json::parse(to_json(r).dump())));
}

TEST_CASE("file round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "polcpmg_scan_test";
  std::filesystem::create_directories(dir);
  const ScanResult r = sample();
  for (auto fmt : {OutputFormat::Csv, OutputFormat::Json}) {
    const auto path = dir / (std::string("r") + format_extension(fmt));
    write_scan(r, path, fmt);
    check_equal(r, read_scan(path));
  }
  CHECK_THROWS(read_scan(dir / "missing.csv"));
  CHECK_THROWS(write_scan(r, dir / "no" / "such" / "dir.csv", OutputFormat::Csv));
  std::filesystem::remove_all(dir);
}

TEST_CASE("schema version and malformed input") {
  std::string csv = to_csv(sample());
  std::string bumped = csv;
  bumped.replace(bumped.find("schema_version=1"), 16, "schema_version=2");
  CHECK_THROWS_AS(from_csv(bumped), SchemaError);

  nlohmann::json j = to_json(sample());
  j["schema_version"] = 99;
  CHECK_THROWS_AS(from_json(j), SchemaError);
  j.erase("schema_version");
  CHECK_THROWS_AS(from_json(j), SchemaError);

  CHECK_THROWS_AS(from_csv("# schema_version=1\n"), SchemaError);
  std::string truncated = csv.substr(0, csv.rfind('\n', csv.size() - 2) + 1);
  CHECK_THROWS_AS(from_csv(truncated), SchemaError);
  std::string garbled = csv;
  garbled.replace(garbled.rfind(',') + 1, 1, "x");
  CHECK_THROWS_AS(from_csv(garbled), SchemaError);
}

TEST_CASE("formats") {
  CHECK(parse_format("csv") == OutputFormat::Csv);
  CHECK(parse_format("json") == OutputFormat::Json);
  CHECK_THROWS_AS(parse_format("xml"), std::invalid_argument);
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}
