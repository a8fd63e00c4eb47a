#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "xdmatch/catalog.hpp"

namespace testutil {

inline std::filesystem::path fresh_dir(const std::string& name) {
  std::filesystem::path dir = std::filesystem::path("test_tmp") / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string join_csv(const std::vector<std::string>& fields) {
  std::string out;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  return out;
}

// Hand-built world: raw data rows per table, headers added on write.
struct MiniWorld {
  std::vector<std::string> dev_train, dev_test, cookies, ips, aggs, props;

  xdm::TableFiles write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    xdm::TableFiles files = xdm::world_tables(dir.string());
    auto dump = [](const std::string& path, const std::vector<std::string>& header,
                   const std::vector<std::string>& rows) {
      std::ofstream out(path, std::ios::binary);
      out << join_csv(header) << "\n";
      for (const auto& r : rows) out << r << "\n";
    };
    dump(files.device_train, xdm::kDeviceHeader, dev_train);
    dump(files.device_test, xdm::kDeviceHeader, dev_test);
    dump(files.cookies, xdm::kCookieHeader, cookies);
    dump(files.ip_observations, xdm::kIpObservationHeader, ips);
    dump(files.ip_aggregates, xdm::kIpAggregateHeader, aggs);
    dump(files.properties, xdm::kPropertyHeader, props);
    return files;
  }
};

// row builders with benign defaults
inline std::string dev_row(const std::string& handle, const std::string& id,
                           const std::string& tail = "t0,os0,cc0,1,a1,b1,1,2,3") {
  return handle + "," + id + "," + tail;
}

inline std::string cook_row(const std::string& handle, const std::string& id,
                            const std::string& tail = "cos0,bv0,cc0,1,a1,b1,1,2,3") {
  return handle + "," + id + "," + tail;
}

inline std::string ip_row(const std::string& id, bool is_device, const std::string& ip,
                          long long freq = 1, const std::string& counts = "0,0,0,0,0") {
  return id + "," + (is_device ? "1" : "0") + "," + ip + "," + std::to_string(freq) + "," + counts;
}

inline std::string agg_row(const std::string& ip, int is_cell = 0, long long total = 1,
                           const std::string& counts = "0,0,0") {
  return ip + "," + std::to_string(is_cell) + "," + std::to_string(total) + "," + counts;
}

inline std::string prop_row(const std::string& id, bool is_device, const std::string& prop,
                            long long count = 1) {
  return id + "," + (is_device ? "1" : "0") + "," + prop + "," + std::to_string(count);
}

}  // namespace testutil
