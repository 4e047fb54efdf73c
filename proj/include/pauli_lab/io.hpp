#pragma once

// Output formats: tidy CSV, binary field files (PLABFLD1) with a JSON sidecar,
// and detection datasets as CSV with a one-line JSON header.

#include "pauli_lab/grid.hpp"
#include "pauli_lab/inference.hpp"

#include "json.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace plab {

using json = nlohmann::ordered_json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal that round-trips to the same double.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_number(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw IoError("not a number: '" + s + "'");
  return v;
}

// ---------------------------------------------------------------------------
// CSV

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void row(std::initializer_list<double> values) { row(std::vector<double>(values)); }
  void row(const std::vector<double>& values) {
    if (values.size() != columns_.size()) throw std::invalid_argument("CsvWriter: row width does not match header");
    rows_.push_back(values);
  }
  std::size_t rows() const { return rows_.size(); }

  std::string str() const {
    std::string out;
    for (std::size_t c = 0; c < columns_.size(); ++c) out += (c ? "," : "") + columns_[c];
    out += '\n';
    for (const auto& r : rows_) {
      for (std::size_t c = 0; c < r.size(); ++c) {
        if (c) out += ',';
        out += format_number(r[c]);
      }
      out += '\n';
    }
    return out;
  }

  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<double>> rows_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void CsvWriter::write(const std::filesystem::path& path) const { write_text(path, str()); }

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Reads a numeric CSV; lines starting with '#' are skipped.
inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream is(text);
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_line(line);
    if (header) {
      t.columns = std::move(cells);
      header = false;
      continue;
    }
    if (cells.size() != t.columns.size()) throw IoError("CSV row width does not match header");
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(parse_number(c));
    t.rows.push_back(std::move(r));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Grid metadata

inline json grid_to_json(const Grid& g) {
  json j;
  j["dim"] = g.dim();
  j["extents"] = {g.extent(0), g.extent(1), g.extent(2)};
  j["cells"] = {g.cells(0), g.cells(1), g.cells(2)};
  j["boundary"] = to_string(g.boundary());
  return j;
}

inline Grid grid_from_json(const json& j) {
  const auto e = j.at("extents").get<std::array<double, 3>>();
  const auto c = j.at("cells").get<std::array<int, 3>>();
  return Grid(j.at("dim").get<int>(), {e[0], e[1], e[2]}, c, boundary_from_string(j.at("boundary").get<std::string>()));
}

// ---------------------------------------------------------------------------
// Binary fields: "PLABFLD1", u32 kind, u32 dim, u32 boundary, i32 cells[3],
// f64 extents[3], u64 value count, then little-endian f64 values. Spinors are
// stored as up.re, up.im, down.re, down.im per cell; vectors component-major.

enum class FieldKind : std::uint32_t { scalar = 0, vector = 1, spinor = 2 };

inline std::string to_string(FieldKind k) {
  switch (k) {
    case FieldKind::scalar: return "scalar";
    case FieldKind::vector: return "vector";
    case FieldKind::spinor: return "spinor";
  }
  return "?";
}

namespace detail {

inline constexpr char field_magic[8] = {'P', 'L', 'A', 'B', 'F', 'L', 'D', '1'};

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("field file truncated");
  unsigned char b[sizeof(T)];
  std::memcpy(b, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  pos += sizeof(T);
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

inline std::string encode_field(const Grid& g, FieldKind kind, const std::vector<double>& values) {
  std::string out(field_magic, 8);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kind));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.dim()));
  put_le<std::uint32_t>(out, g.periodic() ? 0u : 1u);
  for (int a = 0; a < 3; ++a) put_le<std::int32_t>(out, g.cells(a));
  for (int a = 0; a < 3; ++a) put_le<double>(out, g.extent(a));
  put_le<std::uint64_t>(out, values.size());
  for (double v : values) put_le<double>(out, v);
  return out;
}

struct DecodedField {
  Grid grid;
  FieldKind kind = FieldKind::scalar;
  std::vector<double> values;
};

inline DecodedField decode_field(const std::string& in) {
  if (in.size() < 8 || std::memcmp(in.data(), field_magic, 8) != 0) throw IoError("not a PLABFLD1 file");
  std::size_t pos = 8;
  DecodedField d;
  const auto kind = get_le<std::uint32_t>(in, pos);
  if (kind > 2) throw IoError("unknown field kind");
  d.kind = static_cast<FieldKind>(kind);
  const int dim = static_cast<int>(get_le<std::uint32_t>(in, pos));
  const auto bnd = get_le<std::uint32_t>(in, pos);
  std::array<int, 3> cells{};
  Vec3 ext{};
  for (int a = 0; a < 3; ++a) cells[a] = get_le<std::int32_t>(in, pos);
  for (int a = 0; a < 3; ++a) ext[a] = get_le<double>(in, pos);
  d.grid = Grid(dim, ext, cells, bnd == 0 ? Boundary::periodic : Boundary::dirichlet_zero);
  const auto n = get_le<std::uint64_t>(in, pos);
  const std::size_t per = d.kind == FieldKind::scalar ? 1 : d.kind == FieldKind::vector ? 3 : 4;
  if (n != per * d.grid.size()) throw IoError("field value count does not match grid");
  d.values.resize(n);
  for (auto& v : d.values) v = get_le<double>(in, pos);
  if (pos != in.size()) throw IoError("trailing bytes in field file");
  return d;
}

inline void write_field(const std::filesystem::path& path, const Grid& g, FieldKind kind,
                        const std::vector<double>& values, const json& metadata) {
  write_text(path, encode_field(g, kind, values));
  json side;
  side["format"] = "PLABFLD1";
  side["kind"] = to_string(kind);
  side["grid"] = grid_to_json(g);
  side["layout"] = kind == FieldKind::scalar   ? "row-major, axis 0 slowest"
                   : kind == FieldKind::vector ? "component-major (x, y, z), each row-major"
                                               : "per cell: up.re, up.im, down.re, down.im";
  side["metadata"] = metadata;
  write_json(path.string() + ".json", side);
}

inline DecodedField read_field(const std::filesystem::path& path, FieldKind expected) {
  auto d = decode_field(read_text(path));
  if (d.kind != expected) throw IoError(path.string() + ": expected a " + to_string(expected) + " field, found " + to_string(d.kind));
  return d;
}

}  // namespace detail

inline void write_field(const std::filesystem::path& path, const ScalarField& f, const json& metadata = json::object()) {
  detail::write_field(path, f.grid, FieldKind::scalar, f.values, metadata);
}

inline void write_field(const std::filesystem::path& path, const VectorField3& f, const json& metadata = json::object()) {
  std::vector<double> v;
  v.reserve(3 * f.size());
  for (const auto& c : f.components) v.insert(v.end(), c.begin(), c.end());
  detail::write_field(path, f.grid, FieldKind::vector, v, metadata);
}

inline void write_field(const std::filesystem::path& path, const SpinorField& f, const json& metadata = json::object()) {
  std::vector<double> v;
  v.reserve(4 * f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    v.push_back(f.up[i].real());
    v.push_back(f.up[i].imag());
    v.push_back(f.down[i].real());
    v.push_back(f.down[i].imag());
  }
  detail::write_field(path, f.grid, FieldKind::spinor, v, metadata);
}

inline ScalarField read_scalar_field(const std::filesystem::path& path) {
  auto d = detail::read_field(path, FieldKind::scalar);
  return ScalarField(d.grid, std::move(d.values));
}

inline VectorField3 read_vector_field(const std::filesystem::path& path) {
  const auto d = detail::read_field(path, FieldKind::vector);
  VectorField3 f(d.grid);
  const std::size_t n = d.grid.size();
  for (int a = 0; a < 3; ++a) std::copy(d.values.begin() + a * n, d.values.begin() + (a + 1) * n, f.components[a].begin());
  return f;
}

inline SpinorField read_spinor_field(const std::filesystem::path& path) {
  const auto d = detail::read_field(path, FieldKind::spinor);
  SpinorField f(d.grid);
  for (std::size_t i = 0; i < d.grid.size(); ++i) {
    f.up[i] = {d.values[4 * i], d.values[4 * i + 1]};
    f.down[i] = {d.values[4 * i + 2], d.values[4 * i + 3]};
  }
  return f;
}

// ---------------------------------------------------------------------------
// Detection datasets

inline std::string dataset_csv(const DetectionDataset& d) {
  json h;
  h["lattice"] = grid_to_json(d.lattice);
  h["times"] = d.times;
  h["N"] = d.N;
  h["seed"] = d.seed;
  json pos = json::array();
  for (const auto& x : d.positions) pos.push_back({x[0], x[1], x[2]});
  h["positions"] = pos;
  std::string out = "# " + h.dump() + "\ntau,color,cell,count\n";
  for (int tau = 0; tau < d.times; ++tau)
    for (int c = 0; c < 2; ++c)
      for (std::size_t j = 0; j < d.cells(); ++j) {
        out += std::to_string(tau) + ',' + std::to_string(color_value(c)) + ',' + std::to_string(j) + ',' +
               std::to_string(d.count(tau, c, j)) + '\n';
      }
  return out;
}

inline void write_dataset(const std::filesystem::path& path, const DetectionDataset& d) { write_text(path, dataset_csv(d)); }

inline DetectionDataset parse_dataset_csv(const std::string& text) {
  if (text.rfind("# ", 0) != 0) throw IoError("dataset CSV must start with a '# {json}' header line");
  const auto eol = text.find('\n');
  const json h = json::parse(text.substr(2, eol - 2));
  DetectionDataset d;
  d.lattice = grid_from_json(h.at("lattice"));
  d.times = h.at("times").get<int>();
  d.N = h.at("N").get<std::int64_t>();
  d.seed = h.at("seed").get<std::uint64_t>();
  for (const auto& p : h.at("positions")) d.positions.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
  d.counts.assign(2 * static_cast<std::size_t>(d.times) * d.cells(), 0);
  std::istringstream is(text.substr(eol + 1));
  std::string line;
  std::getline(is, line);
  if (line != "tau,color,cell,count") throw IoError("dataset CSV: unexpected column header");
  std::size_t seen = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != 4) throw IoError("dataset CSV: expected four columns");
    const int tau = std::stoi(cells[0]);
    const int c = color_index(std::stoi(cells[1]));
    const auto j = static_cast<std::size_t>(std::stoull(cells[2]));
    if (tau < 0 || tau >= d.times || j >= d.cells()) throw IoError("dataset CSV: index out of range");
    d.counts[(static_cast<std::size_t>(tau) * 2 + c) * d.cells() + j] = std::stoll(cells[3]);
    ++seen;
  }
  if (seen != d.counts.size()) throw IoError("dataset CSV: row count does not match header");
  return d;
}

inline DetectionDataset read_dataset(const std::filesystem::path& path) { return parse_dataset_csv(read_text(path)); }

}  // namespace plab
