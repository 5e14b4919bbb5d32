#include "pce/io.hpp"

#include "pce/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace pce::io {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t row, const std::string& column) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    std::ostringstream msg;
    msg << "row " << row << ", column '" << column << "': cannot parse '" << s << "'";
    throw InputError("csv", msg.str());
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("file", "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("json", path.string() + ": " + e.what());
  }
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("file", "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& csv, const std::filesystem::path& schema_json) {
  Schema schema = schema_from_json(read_json(schema_json));
  std::ifstream in(csv);
  if (!in) throw InputError("file", "cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError("csv", "empty dataset file");
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "z" || header[1] != "s" || header[2] != "y" || header[3] != "w")
    throw InputError("csv", "header must start with z,s,y,w");
  const std::size_t p = header.size() - 4;
  if (schema.covariate_names.empty() && p > 0) {
    for (std::size_t j = 0; j < p; ++j) schema.covariate_names.push_back(header[4 + j]);
  }
  if (schema.covariate_names.size() != p)
    throw InputError("csv", "covariate columns do not match schema");

  std::vector<ObservedUnit> units;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      std::ostringstream msg;
      msg << "row " << row << ": expected " << header.size() << " fields, got " << f.size();
      throw InputError("csv", msg.str());
    }
    ObservedUnit u;
    const double z = parse_double(f[0], row, "z");
    if (z != 0.0 && z != 1.0) throw InputError("csv", "row " + std::to_string(row) + ": z must be 0 or 1");
    u.z = static_cast<int>(z);
    u.s = parse_double(f[1], row, "s");
    u.y = parse_double(f[2], row, "y");
    u.w = parse_double(f[3], row, "w");
    u.x.reserve(p);
    for (std::size_t j = 0; j < p; ++j) u.x.push_back(parse_double(f[4 + j], row, header[4 + j]));
    units.push_back(std::move(u));
  }
  Dataset d(std::move(schema), std::move(units));
  d.validate();
  return d;
}

void write_dataset(const Dataset& d, const std::filesystem::path& csv,
                   const std::filesystem::path& schema_json) {
  std::ofstream out(csv, std::ios::binary);
  if (!out) throw InputError("file", "cannot write " + csv.string());
  out << "z,s,y,w";
  for (const auto& name : d.schema().covariate_names) out << ',' << name;
  out << '\n';
  for (const auto& u : d.units()) {
    out << u.z << ',' << format_double(u.s) << ',' << format_double(u.y) << ',' << format_double(u.w);
    for (double v : u.x) out << ',' << format_double(v);
    out << '\n';
  }
  write_json(schema_to_json(d.schema()), schema_json);
}

}  // namespace pce::io
