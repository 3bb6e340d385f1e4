#include "artifacts.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lbill::io {

namespace {

fs::path header_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const char* data, std::size_t size) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(data, static_cast<std::streamsize>(size));
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

const char* class_name(StateClass c) { return c == StateClass::chaotic ? "chaotic" : "regular"; }

}  // namespace

std::string format_real(double x) {
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, result.ptr);
}

void write_text(const fs::path& path, std::string_view text) { write_bytes(path, text.data(), text.size()); }

std::string read_text(const fs::path& path) {
  const std::vector<char> bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_json(const fs::path& path, const json& value) { write_text(path, value.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw MissingArtifact("malformed JSON in " + path.string() + ": " + e.what());
  }
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) text_ += (i ? "," : "") + header[i];
  text_ += "\n";
}

CsvWriter& CsvWriter::add(double x) {
  row_.push_back(format_real(x));
  return *this;
}

CsvWriter& CsvWriter::add(long long x) {
  row_.push_back(std::to_string(x));
  return *this;
}

CsvWriter& CsvWriter::add(const std::string& x) {
  row_.push_back(x);
  return *this;
}

void CsvWriter::end_row() {
  if (row_.size() != columns_) throw Error("CsvWriter: row has " + std::to_string(row_.size()) + " fields");
  for (std::size_t i = 0; i < row_.size(); ++i) text_ += (i ? "," : "") + row_[i];
  text_ += "\n";
  row_.clear();
}

void CsvWriter::save(const fs::path& path) const { write_text(path, text_); }

std::size_t CsvTable::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw MissingArtifact("CSV column '" + name + "' not found");
}

std::vector<double> CsvTable::column(const std::string& name) const {
  const std::size_t c = column_index(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(std::stod(r.at(c)));
  return out;
}

CsvTable read_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw MissingArtifact("empty CSV " + path.string());
  table.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    table.rows.push_back(split_csv_line(line));
    if (table.rows.back().size() != table.header.size()) {
      throw MissingArtifact("ragged CSV row in " + path.string());
    }
  }
  return table;
}

void write_column(const fs::path& path, std::span<const double> values) {
  std::string text;
  for (double v : values) text += format_real(v) + "\n";
  write_text(path, text);
}

std::vector<double> read_column(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(std::stod(line));
  }
  return out;
}

void write_binary(const fs::path& path, std::span<const double> values) {
  write_bytes(path, reinterpret_cast<const char*>(values.data()), values.size_bytes());
}

std::vector<double> read_binary(const fs::path& path) {
  const std::vector<char> bytes = read_bytes(path);
  if (bytes.size() % sizeof(double) != 0) throw MissingArtifact("truncated float64 file " + path.string());
  std::vector<double> out(bytes.size() / sizeof(double));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

void save_chaotic_grid(const fs::path& path, const ChaoticGrid& grid) {
  write_bytes(path, reinterpret_cast<const char*>(grid.cells.data()), static_cast<std::size_t>(grid.cells.size()));
  json header = {{"dims", {grid.cells.rows(), grid.cells.cols()}},
                 {"lambda", grid.lambda},
                 {"L", grid.perimeter},
                 {"seed", grid.seed},
                 {"n_collisions", grid.n_collisions},
                 {"chi_c", grid.chi_c},
                 {"start", {grid.start.s, grid.start.p}},
                 {"layout", "int8 row-major, rows index s"}};
  write_json(header_path(path), header);
}

ChaoticGrid load_chaotic_grid(const fs::path& path) {
  const json header = read_json(header_path(path));
  const std::vector<char> bytes = read_bytes(path);
  ChaoticGrid grid;
  const auto rows = header.at("dims").at(0).get<Eigen::Index>();
  const auto cols = header.at("dims").at(1).get<Eigen::Index>();
  if (static_cast<Eigen::Index>(bytes.size()) != rows * cols) throw MissingArtifact("grid size mismatch in " + path.string());
  grid.cells.resize(rows, cols);
  std::memcpy(grid.cells.data(), bytes.data(), bytes.size());
  grid.lambda = header.at("lambda").get<double>();
  grid.perimeter = header.at("L").get<double>();
  grid.seed = header.at("seed").get<std::uint64_t>();
  grid.n_collisions = header.at("n_collisions").get<std::int64_t>();
  grid.chi_c = header.at("chi_c").get<double>();
  grid.start = {header.at("start").at(0).get<double>(), header.at("start").at(1).get<double>()};
  return grid;
}

void save_window(const fs::path& path, const SpectralWindow& window, int window_id) {
  std::vector<double> flat;
  json states = json::array();
  double perimeter = 0.0;
  for (const auto& level : window.levels) {
    states.push_back({{"k", level.k}, {"N_b", level.boundary_grid_size()}, {"offset", flat.size()},
                      {"tension", level.tension}});
    flat.insert(flat.end(), level.u_samples.begin(), level.u_samples.end());
    perimeter = level.perimeter;
  }
  write_binary(path, flat);
  json header = {{"window_id", window_id},
                 {"k_lo", window.k_lo},
                 {"k_hi", window.k_hi},
                 {"lambda", window.lambda},
                 {"L", perimeter},
                 {"parity", "even"},
                 {"normalization", "oint (r.n) u^2 ds = 2 k^2"},
                 {"states", states}};
  write_json(header_path(path), header);
}

SpectralWindow load_window(const fs::path& path) {
  const json header = read_json(header_path(path));
  const std::vector<double> flat = read_binary(path);
  SpectralWindow window;
  window.k_lo = header.at("k_lo").get<double>();
  window.k_hi = header.at("k_hi").get<double>();
  window.lambda = header.at("lambda").get<double>();
  const double perimeter = header.at("L").get<double>();
  for (const auto& s : header.at("states")) {
    EigenstateRecord r;
    r.k = s.at("k").get<double>();
    r.tension = s.at("tension").get<double>();
    r.lambda = window.lambda;
    r.perimeter = perimeter;
    const auto offset = s.at("offset").get<std::size_t>();
    const auto n = s.at("N_b").get<std::size_t>();
    if (offset + n > flat.size()) throw MissingArtifact("boundary function file too short: " + path.string());
    r.u_samples.assign(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                       flat.begin() + static_cast<std::ptrdiff_t>(offset + n));
    window.levels.push_back(std::move(r));
  }
  return window;
}

HusimiWriter::HusimiWriter(fs::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  out_.open(path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error("cannot write " + path_.string());
}

void HusimiWriter::add(const HusimiGrid& grid) {
  if (!ks_.empty() && !(grid.dims() == dims_)) throw DimensionMismatch("HusimiWriter: grids differ in size");
  dims_ = grid.dims();
  lambda_ = grid.lambda;
  ks_.push_back(grid.k);
  out_.write(reinterpret_cast<const char*>(grid.values.data()),
             static_cast<std::streamsize>(grid.values.size() * sizeof(double)));
  if (!out_) throw Error("write failed: " + path_.string());
}

void HusimiWriter::finish() {
  out_.close();
  json header = {{"dims", {dims_.n_q, dims_.n_p}},
                 {"lambda", lambda_},
                 {"k", ks_},
                 {"layout", "float64 row-major per state, rows index q"}};
  write_json(header_path(path_), header);
}

HusimiReader::HusimiReader(const fs::path& path) : path_(path) {
  const json header = read_json(header_path(path));
  dims_ = {header.at("dims").at(0).get<int>(), header.at("dims").at(1).get<int>()};
  lambda_ = header.at("lambda").get<double>();
  ks_ = header.at("k").get<std::vector<double>>();
  in_.open(path, std::ios::binary);
  if (!in_) throw MissingArtifact("cannot open " + path.string());
  const auto expected = ks_.size() * static_cast<std::size_t>(dims_.n_q) * static_cast<std::size_t>(dims_.n_p) * sizeof(double);
  if (fs::file_size(path) != expected) throw MissingArtifact("Husimi file size mismatch: " + path.string());
}

HusimiGrid HusimiReader::grid(std::size_t i) {
  HusimiGrid g;
  g.k = ks_.at(i);
  g.lambda = lambda_;
  g.values.resize(dims_.n_q, dims_.n_p);
  const auto bytes = static_cast<std::streamsize>(g.values.size() * sizeof(double));
  in_.seekg(static_cast<std::streamoff>(i) * bytes);
  in_.read(reinterpret_cast<char*>(g.values.data()), bytes);
  if (!in_) throw MissingArtifact("short read in " + path_.string());
  g.normalized = true;
  return g;
}

json to_json(const LocalizationRecord& r) {
  return {{"k", r.k}, {"A", r.a}, {"A_normalized", r.a_normalized}, {"nIPR", r.nipr}, {"M", r.m},
          {"class", class_name(r.classification)}};
}

LocalizationRecord localization_from_json(const json& j) {
  LocalizationRecord r;
  r.k = j.at("k").get<double>();
  r.a = j.at("A").get<double>();
  r.a_normalized = j.at("A_normalized").get<double>();
  r.nipr = j.at("nIPR").get<double>();
  r.m = j.at("M").get<double>();
  r.classification = j.at("class").get<std::string>() == "chaotic" ? StateClass::chaotic : StateClass::regular;
  return r;
}

void write_jsonl(const fs::path& path, std::span<const LocalizationRecord> records) {
  std::string text;
  for (const auto& r : records) text += to_json(r).dump() + "\n";
  write_text(path, text);
}

std::vector<LocalizationRecord> read_jsonl(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<LocalizationRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(localization_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw MissingArtifact("malformed JSON line in " + path.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace lbill::io
