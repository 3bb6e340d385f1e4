#ifndef LBILL_TOOLS_ARTIFACTS_HPP
#define LBILL_TOOLS_ARTIFACTS_HPP

// On-disk formats: CSV tables, flat binary arrays with JSON headers, JSON lines.

#include "lbill/classical.hpp"
#include "lbill/husimi.hpp"
#include "lbill/quantum.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace lbill::io {

namespace fs = std::filesystem;
using nlohmann::json;

/// Shortest decimal form that round-trips, so reruns write identical bytes.
std::string format_real(double x);

void write_text(const fs::path& path, std::string_view text);
std::string read_text(const fs::path& path);

void write_json(const fs::path& path, const json& value);
json read_json(const fs::path& path);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  CsvWriter& add(double x);
  CsvWriter& add(long long x);
  CsvWriter& add(int x) { return add(static_cast<long long>(x)); }
  CsvWriter& add(std::size_t x) { return add(static_cast<long long>(x)); }
  CsvWriter& add(const std::string& x);
  void end_row();
  void save(const fs::path& path) const;

 private:
  std::size_t columns_;
  std::string text_;
  std::vector<std::string> row_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column_index(const std::string& name) const;
  std::vector<double> column(const std::string& name) const;
};

CsvTable read_csv(const fs::path& path);

/// One value per line, no header.
void write_column(const fs::path& path, std::span<const double> values);
std::vector<double> read_column(const fs::path& path);

void write_binary(const fs::path& path, std::span<const double> values);
std::vector<double> read_binary(const fs::path& path);

/// int8 cells row-major plus `<path>.json` header.
void save_chaotic_grid(const fs::path& path, const ChaoticGrid& grid);
ChaoticGrid load_chaotic_grid(const fs::path& path);

/// Boundary functions of a window concatenated in one float64 file; the
/// header lists k, N_b and offset per state.
void save_window(const fs::path& path, const SpectralWindow& window, int window_id);
SpectralWindow load_window(const fs::path& path);

/// Husimi grids of a window concatenated in one float64 file, written one
/// state at a time; the header is written by finish().
class HusimiWriter {
 public:
  explicit HusimiWriter(fs::path path);
  void add(const HusimiGrid& grid);
  void finish();

 private:
  fs::path path_;
  std::ofstream out_;
  std::vector<double> ks_;
  GridDims dims_;
  double lambda_ = 0.0;
};

class HusimiReader {
 public:
  explicit HusimiReader(const fs::path& path);
  std::size_t size() const { return ks_.size(); }
  HusimiGrid grid(std::size_t i);

 private:
  fs::path path_;
  std::ifstream in_;
  std::vector<double> ks_;
  GridDims dims_;
  double lambda_ = 0.0;
};

json to_json(const LocalizationRecord& r);
LocalizationRecord localization_from_json(const json& j);
void write_jsonl(const fs::path& path, std::span<const LocalizationRecord> records);
std::vector<LocalizationRecord> read_jsonl(const fs::path& path);

}  // namespace lbill::io

#endif  // LBILL_TOOLS_ARTIFACTS_HPP
