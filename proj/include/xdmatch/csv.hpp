#pragma once

#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace xdm {

// Minimal comma-delimited reader: header row required, no quoting (the table
// formats carry opaque tokens that never contain commas). Errors name the
// file, 1-based line and 1-based column.
class CsvReader {
 public:
  CsvReader(const std::string& path, const std::vector<std::string>& expected_header);

  // false at EOF; otherwise fills `fields` with exactly one value per header
  // column.
  bool next_row(std::vector<std::string>& fields);

  const std::string& path() const { return path_; }
  int line() const { return line_; }

  [[noreturn]] void fail(int column, const std::string& what) const;

  // parse helpers with error context
  int64_t to_int(const std::string& field, int column) const;
  double to_double(const std::string& field, int column) const;

 private:
  std::string path_;
  std::ifstream in_;
  int line_ = 0;
  size_t n_columns_ = 0;
};

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  void write_row(const std::vector<std::string>& fields);
  void close();

 private:
  std::string path_;
  std::ofstream out_;
};

bool file_exists(const std::string& path);
std::string read_file(const std::string& path);

}  // namespace xdm
