#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xdmatch/catalog.hpp"

namespace xdm {

// Synthetic-world knobs. Defaults are sized so the first blocking rule fires
// for most devices while the fallback rules and the degree filters still see
// real traffic.
struct WorldConfig {
  int n_persons = 200;
  double device_lambda = 0.5;        // devices per person = 1 + Poisson(device_lambda)
  double cookie_lambda = 1.5;        // cookies per person = 1 + Poisson(cookie_lambda)
  double private_ip_lambda = 1.0;    // private ips per person = 1 + Poisson(private_ip_lambda)
  double member_ip_prob = 0.75;      // chance a member joins each extra private ip
  double drifter_prob = 0.04;        // member skips every private ip
  int public_ip_count = 30;          // high-degree ips shared across persons
  double public_ip_attach_prob = 0.16;
  int shared_ip_count = 16;          // mid-degree ips that land between the rule 1/2 windows
  double shared_ip_attach_prob = 0.04;
  int neighborhood_size = 3;         // persons per neighborhood
  double neighbor_ip_lambda = 0.3;   // ips per neighborhood = 1 + Poisson(neighbor_ip_lambda)
  double neighbor_attach_prob = 0.5; // low-degree ips shared inside a neighborhood
  double cell_ip_fraction = 0.3;     // of private ips
  double unknown_handle_fraction = 0.1;  // cookies with the handle masked
  double test_person_fraction = 0.5;
  int n_properties = 50;
  double props_lambda = 2.0;         // properties per member = Poisson(props_lambda)
  double categorical_missing_prob = 0.03;
  double numeric_missing_prob = 0.05;
  uint64_t seed = 42;

  void validate() const;
};

struct GroundTruth {
  // person handle token -> member ids
  std::map<std::string, std::vector<std::string>> person_devices;
  std::map<std::string, std::vector<std::string>> person_cookies;
  // device id -> every cookie of the owning person (masked handles included)
  std::map<std::string, std::vector<std::string>> device_truth;
  // cookie ids whose handle was masked in the emitted table
  std::vector<std::string> masked_cookies;
};

// Writes the six tables plus truth.csv into out_dir and returns the ground
// truth. Byte-identical output for identical configs.
GroundTruth generate_world(const WorldConfig& config, const std::string& out_dir);

struct VerifyReport {
  bool ok = true;
  std::vector<std::string> problems;
};

// Consistency checks implementable from the emitted files alone: aggregates
// match observation sums, handles are internally consistent, and truth rows
// form complete handle groups.
VerifyReport verify_world(const TableFiles& files, const std::string& truth_file);

}  // namespace xdm
