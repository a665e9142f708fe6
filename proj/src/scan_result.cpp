#include "polcpmg/scan_result.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace polcpmg {

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, p);
}

ScanResult::ScanResult(std::vector<ScanAxis> ax, std::vector<ScanField> fs)
    : axes(std::move(ax)), fields(std::move(fs)) {
  values.assign(cell_count() * fields.size(), 0.0);
}

std::size_t ScanResult::cell_count() const {
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.values.size();
  return n;
}

std::size_t ScanResult::field_index(std::string_view name) const {
  for (std::size_t i = 0; i < fields.size(); ++i)
    if (fields[i].name == name) return i;
  throw std::out_of_range("ScanResult has no field '" + std::string(name) + "'");
}

std::size_t ScanResult::cell_index(const std::vector<std::size_t>& idx) const {
  if (idx.size() != axes.size()) throw std::out_of_range("cell_index: wrong number of coordinates");
  std::size_t c = 0;
  for (std::size_t a = 0; a < axes.size(); ++a) {
    if (idx[a] >= axes[a].values.size()) throw std::out_of_range("cell_index: coordinate out of range");
    c = c * axes[a].values.size() + idx[a];
  }
  return c;
}

std::vector<std::size_t> ScanResult::cell_coords(std::size_t cell) const {
  std::vector<std::size_t> idx(axes.size());
  for (std::size_t a = axes.size(); a-- > 0;) {
    idx[a] = cell % axes[a].values.size();
    cell /= axes[a].values.size();
  }
  return idx;
}

std::vector<double> ScanResult::column(std::string_view field) const {
  const std::size_t f = field_index(field);
  std::vector<double> out(cell_count());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = at(c, f);
  return out;
}

void ScanResult::validate() const {
  for (const auto& a : axes)
    if (a.values.empty()) throw std::invalid_argument("ScanResult: axis '" + a.name + "' is empty");
  if (values.size() != cell_count() * fields.size())
    throw std::invalid_argument("ScanResult: value count does not match axes x fields");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("ScanResult: non-finite value");
}

OutputFormat parse_format(std::string_view s) {
  if (s == "csv") return OutputFormat::Csv;
  if (s == "json") return OutputFormat::Json;
  throw std::invalid_argument("unknown output format '" + std::string(s) + "' (expected csv or json)");
}

const char* format_extension(OutputFormat f) { return f == OutputFormat::Csv ? ".csv" : ".json"; }

// CSV layout:
//   # schema_version=1
//   # shape=<n1>,<n2>,...
//   # meta=<single-line JSON>
//   <axis> (<unit>),...,<field> (<unit>),...
//   one row per cell
namespace {

std::string header_cell(const std::string& name, const std::string& unit) { return name + " (" + unit + ")"; }

std::pair<std::string, std::string> split_header(const std::string& cell) {
  const auto open = cell.rfind(" (");
  if (open == std::string::npos || cell.back() != ')') throw SchemaError("malformed CSV header cell '" + cell + "'");
  return {cell.substr(0, open), cell.substr(open + 2, cell.size() - open - 3)};
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw SchemaError("malformed number '" + s + "'");
  return v;
}

void check_version(int v) {
  if (v != ScanResult::kSchemaVersion)
    throw SchemaError("unsupported schema_version " + std::to_string(v) + " (reader supports " +
                      std::to_string(ScanResult::kSchemaVersion) + ")");
}

}  // namespace

std::string to_csv(const ScanResult& r) {
  r.validate();
  std::ostringstream os;
  os << "# schema_version=" << ScanResult::kSchemaVersion << '\n';
  os << "# shape=";
  for (std::size_t a = 0; a < r.axes.size(); ++a) os << (a ? "," : "") << r.axes[a].values.size();
  os << '\n';
  os << "# meta=" << r.meta.dump() << '\n';
  bool first = true;
  for (const auto& a : r.axes) {
    os << (first ? "" : ",") << header_cell(a.name, a.unit);
    first = false;
  }
  for (const auto& f : r.fields) {
    os << (first ? "" : ",") << header_cell(f.name, f.unit);
    first = false;
  }
  os << '\n';
  for (std::size_t c = 0; c < r.cell_count(); ++c) {
    const auto idx = r.cell_coords(c);
    first = true;
    for (std::size_t a = 0; a < r.axes.size(); ++a) {
      os << (first ? "" : ",") << format_double(r.axes[a].values[idx[a]]);
      first = false;
    }
    for (std::size_t f = 0; f < r.fields.size(); ++f) {
      os << (first ? "" : ",") << format_double(r.at(c, f));
      first = false;
    }
    os << '\n';
  }
  return os.str();
}

ScanResult from_csv(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  auto expect_prefix = [&](const std::string& prefix) {
    if (!std::getline(is, line) || line.rfind(prefix, 0) != 0)
      throw SchemaError("CSV is missing the '" + prefix + "' line");
    return line.substr(prefix.size());
  };
  check_version(static_cast<int>(parse_double(expect_prefix("# schema_version="))));
  std::vector<std::size_t> shape;
  const std::string shape_s = expect_prefix("# shape=");
  if (!shape_s.empty())
    for (const auto& s : split(shape_s, ',')) shape.push_back(static_cast<std::size_t>(parse_double(s)));
  ScanResult r;
  try {
    r.meta = nlohmann::json::parse(expect_prefix("# meta="));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("CSV meta line is not valid JSON: ") + e.what());
  }
  if (!std::getline(is, line)) throw SchemaError("CSV is missing the header row");
  const auto header = split(line, ',');
  if (header.size() < shape.size()) throw SchemaError("CSV header has fewer columns than axes");
  for (std::size_t i = 0; i < header.size(); ++i) {
    auto [name, unit] = split_header(header[i]);
    if (i < shape.size())
      r.axes.push_back({name, unit, std::vector<double>(shape[i], 0.0)});
    else
      r.fields.push_back({name, unit});
  }
  const std::size_t cells = r.cell_count();
  r.values.reserve(cells * r.fields.size());
  std::size_t c = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto row = split(line, ',');
    if (row.size() != header.size()) throw SchemaError("CSV row " + std::to_string(c) + " has wrong column count");
    if (c >= cells) throw SchemaError("CSV has more rows than the declared shape");
    const auto idx = r.cell_coords(c);
    for (std::size_t a = 0; a < r.axes.size(); ++a) r.axes[a].values[idx[a]] = parse_double(row[a]);
    for (std::size_t f = 0; f < r.fields.size(); ++f) r.values.push_back(parse_double(row[r.axes.size() + f]));
    ++c;
  }
  if (c != cells) throw SchemaError("CSV has fewer rows than the declared shape");
  r.validate();
  return r;
}

nlohmann::json to_json(const ScanResult& r) {
  r.validate();
  nlohmann::json j;
  j["schema_version"] = ScanResult::kSchemaVersion;
  j["axes"] = nlohmann::json::array();
  for (const auto& a : r.axes) j["axes"].push_back({{"name", a.name}, {"unit", a.unit}, {"values", a.values}});
  j["fields"] = nlohmann::json::array();
  for (const auto& f : r.fields) j["fields"].push_back({{"name", f.name}, {"unit", f.unit}});
  j["values"] = nlohmann::json::array();
  for (std::size_t c = 0; c < r.cell_count(); ++c) {
    nlohmann::json cell = nlohmann::json::array();
    for (std::size_t f = 0; f < r.fields.size(); ++f) cell.push_back(r.at(c, f));
    j["values"].push_back(std::move(cell));
  }
  j["meta"] = r.meta;
  return j;
}

ScanResult from_json(const nlohmann::json& j) {
  try {
    if (!j.contains("schema_version")) throw SchemaError("JSON scan result has no schema_version");
    check_version(j.at("schema_version").get<int>());
    ScanResult r;
    for (const auto& a : j.at("axes"))
      r.axes.push_back({a.at("name").get<std::string>(), a.at("unit").get<std::string>(),
                        a.at("values").get<std::vector<double>>()});
    for (const auto& f : j.at("fields"))
      r.fields.push_back({f.at("name").get<std::string>(), f.at("unit").get<std::string>()});
    for (const auto& cell : j.at("values")) {
      if (cell.size() != r.fields.size()) throw SchemaError("JSON cell has wrong number of fields");
      for (const auto& v : cell) r.values.push_back(v.get<double>());
    }
    r.meta = j.value("meta", nlohmann::json::object());
    r.validate();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed JSON scan result: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(e.what());
  }
}

void write_scan(const ScanResult& r, const std::filesystem::path& path, OutputFormat fmt) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  if (fmt == OutputFormat::Csv)
    os << to_csv(r);
  else
    os << to_json(r).dump(1) << '\n';
  if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

ScanResult read_scan(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  if (path.extension() == ".json") {
    try {
      return from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(std::string("invalid JSON: ") + e.what());
    }
  }
  return from_csv(text);
}

}  // namespace polcpmg
