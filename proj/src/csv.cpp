#include "xdmatch/csv.hpp"

#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "xdmatch/common.hpp"

namespace xdm {

namespace {

void split_line(const std::string& line, std::vector<std::string>& out) {
  out.clear();
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

CsvReader::CsvReader(const std::string& path, const std::vector<std::string>& expected_header)
    : path_(path), in_(path) {
  if (!in_) throw std::runtime_error("cannot open " + path);
  std::string header_line;
  if (!std::getline(in_, header_line)) throw std::runtime_error(path + ": empty file, header row required");
  ++line_;
  if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();
  std::vector<std::string> header;
  split_line(header_line, header);
  if (header != expected_header) {
    std::ostringstream want, got;
    for (const auto& h : expected_header) want << h << ",";
    for (const auto& h : header) got << h << ",";
    throw std::runtime_error(path + ": header mismatch: expected [" + want.str() + "] got [" + got.str() + "]");
  }
  n_columns_ = expected_header.size();
}

bool CsvReader::next_row(std::vector<std::string>& fields) {
  std::string l;
  while (std::getline(in_, l)) {
    ++line_;
    if (!l.empty() && l.back() == '\r') l.pop_back();
    if (l.empty()) continue;  // tolerate a trailing blank line
    split_line(l, fields);
    if (fields.size() != n_columns_) {
      fail(static_cast<int>(fields.size()),
           strfmt("expected %zu fields, got %zu", n_columns_, fields.size()));
    }
    return true;
  }
  return false;
}

void CsvReader::fail(int column, const std::string& what) const {
  throw std::runtime_error(strfmt("%s:%d:%d: ", path_.c_str(), line_, column) + what);
}

int64_t CsvReader::to_int(const std::string& field, int column) const {
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(field.c_str(), &end, 10);
  if (field.empty() || errno != 0 || end != field.c_str() + field.size()) {
    fail(column, "malformed integer '" + field + "'");
  }
  return v;
}

double CsvReader::to_double(const std::string& field, int column) const {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(field.c_str(), &end);
  if (field.empty() || errno != 0 || end != field.c_str() + field.size()) {
    fail(column, "malformed number '" + field + "'");
  }
  return v;
}

CsvWriter::CsvWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
  if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
}

void CsvWriter::write_row(const std::vector<std::string>& fields) {
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << fields[i];
  }
  out_ << '\n';
}

void CsvWriter::close() {
  out_.close();
  if (!out_) throw std::runtime_error("write failed: " + path_);
}

bool file_exists(const std::string& path) {
  std::error_code ec;
  return std::filesystem::exists(path, ec);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace xdm
