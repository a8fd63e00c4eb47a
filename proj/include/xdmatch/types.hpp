#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace xdm {

// Person identifier shared across devices and cookies. The sentinel token
// (by default the literal "-1") marks an unknown handle.
struct Handle {
  std::string value;
  bool known = false;
};

enum class OwnerKind : uint8_t { Device = 0, Cookie = 1 };

struct DeviceRecord {
  std::string device_id;
  Handle handle;
  int handle_idx = -1;  // catalog handle index, -1 when unknown
  bool is_test = false; // row came from the test device table
  double device_type = 0, device_os = 0, country = 0;
  double anon_c0 = 0, anon_c1 = 0, anon_c2 = 0;
  double anon_5 = 0, anon_6 = 0, anon_7 = 0;
};

struct CookieRecord {
  std::string cookie_id;
  Handle handle;
  int handle_idx = -1;
  double computer_os = 0, browser_version = 0, country = 0;
  double anon_c0 = 0, anon_c1 = 0, anon_c2 = 0;
  double anon_5 = 0, anon_6 = 0, anon_7 = 0;
};

// One (owner, ip) row. The owner is implicit in the per-owner observation
// lists the catalog keeps; lists stay sorted by ip index with one entry per ip.
struct IpObservation {
  int ip = -1;
  int64_t freq_count = 0;
  std::array<int64_t, 5> counts{};  // Count 1..Count 5
};

struct IpAggregate {
  bool is_cell = false;
  int64_t total_freq = 0;
  std::array<int64_t, 3> counts{};  // Count C0..C2
};

struct PropertyObservation {
  int property = -1;
  int64_t count = 0;
};

}  // namespace xdm
