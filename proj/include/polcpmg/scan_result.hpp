#pragma once

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace polcpmg {

struct ScanAxis {
  std::string name;
  std::string unit;
  std::vector<double> values;
};

struct ScanField {
  std::string name;
  std::string unit;
};

// Rectangular grid of observables. Cells are stored row-major over the axes
// (last axis fastest); each cell holds one value per field.
struct ScanResult {
  static constexpr int kSchemaVersion = 1;

  std::vector<ScanAxis> axes;
  std::vector<ScanField> fields;
  std::vector<double> values;
  nlohmann::json meta = nlohmann::json::object();

  ScanResult() = default;
  ScanResult(std::vector<ScanAxis> axes, std::vector<ScanField> fields);

  std::size_t cell_count() const;
  std::size_t field_index(std::string_view name) const;
  std::size_t cell_index(const std::vector<std::size_t>& idx) const;
  std::vector<std::size_t> cell_coords(std::size_t cell) const;

  double& at(std::size_t cell, std::size_t field) { return values[cell * fields.size() + field]; }
  double at(std::size_t cell, std::size_t field) const { return values[cell * fields.size() + field]; }
  double& at(std::size_t cell, std::string_view field) { return at(cell, field_index(field)); }
  double at(std::size_t cell, std::string_view field) const { return at(cell, field_index(field)); }

  std::vector<double> column(std::string_view field) const;

  // Shape matches the axes and every value is finite.
  void validate() const;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OutputFormat { Csv, Json };
OutputFormat parse_format(std::string_view s);
const char* format_extension(OutputFormat f);

std::string to_csv(const ScanResult& r);
ScanResult from_csv(std::string_view text);
nlohmann::json to_json(const ScanResult& r);
ScanResult from_json(const nlohmann::json& j);

void write_scan(const ScanResult& r, const std::filesystem::path& path, OutputFormat fmt);
ScanResult read_scan(const std::filesystem::path& path);

// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace polcpmg
