#pragma once

#include <string>
#include <vector>

#include "xdmatch/catalog.hpp"

namespace xdm {

struct BlockingThresholds {
  int r1_dev = 10;
  int r1_cook = 20;
  int r2_dev = 25;
  int r2_cook = 50;

  void validate() const;  // r1 < r2 on both axes
};

enum class Rule : uint8_t { R1 = 1, R2 = 2, R3 = 3, R4 = 4 };

const char* rule_name(Rule r);

// Eligible cookies for one device. cookie_ids holds internal indexes in
// ascending cookie-id order; via_handle is the subset Rule 5 added.
struct CandidateSet {
  int device = -1;
  std::vector<int> cookie_ids;
  Rule rule_used = Rule::R4;
  std::vector<int> via_handle;
};

// Table-driven fallback chain: rare-ip cookies with known handle first, wider
// degree limits next, then any known-handle sharer, then any sharer at all;
// finally the handle closure pass.
CandidateSet select_candidates(const Catalog& catalog, int device,
                               const BlockingThresholds& thresholds = {});
CandidateSet select_candidates(const Catalog& catalog, const std::string& device_id,
                               const BlockingThresholds& thresholds = {});

// Every cookie sharing an ip with the device, no degree filter and no handle
// closure. This is the wider pool the post-processor falls back to.
CandidateSet expand_candidates(const Catalog& catalog, int device);
CandidateSet expand_candidates(const Catalog& catalog, const std::string& device_id);

std::vector<CandidateSet> select_all_candidates(const Catalog& catalog,
                                                const BlockingThresholds& thresholds = {},
                                                int n_threads = 1);

struct CoverageReport {
  int64_t n_devices = 0;          // devices with a known handle
  int64_t n_covered = 0;          // their labeled cookies all appear in the candidate set
  double coverage = 0.0;
  int64_t total_pairs = 0;        // sum of candidate set sizes over all devices
  int64_t rule_counts[5] = {0, 0, 0, 0, 0};  // [1..4] devices per base rule
  int64_t empty_sets = 0;
};

CoverageReport coverage_report(const Catalog& catalog, const BlockingThresholds& thresholds = {});

void write_candidates_csv(const Catalog& catalog, const std::vector<CandidateSet>& sets,
                          const std::string& path);

}  // namespace xdm
