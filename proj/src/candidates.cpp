#include "xdmatch/candidates.hpp"

#include <algorithm>
#include <stdexcept>

#include "xdmatch/common.hpp"
#include "xdmatch/csv.hpp"

namespace xdm {

void BlockingThresholds::validate() const {
  if (!(r1_dev < r2_dev) || !(r1_cook < r2_cook)) {
    throw std::runtime_error("blocking thresholds must satisfy r1_dev < r2_dev and r1_cook < r2_cook");
  }
}

const char* rule_name(Rule r) {
  switch (r) {
    case Rule::R1: return "R1";
    case Rule::R2: return "R2";
    case Rule::R3: return "R3";
    case Rule::R4: return "R4";
  }
  return "?";
}

namespace {

// cookies on any of the given ips; known_only filters to known handles.
// Result sorted ascending by cookie id, unique.
std::vector<int> cookies_on_ips(const Catalog& cat, const std::vector<int>& ips, bool known_only) {
  std::vector<int> out;
  for (int ip : ips) {
    for (int c : cat.ip_cookies[ip]) {
      if (known_only && cat.cookies[c].handle_idx < 0) continue;
      out.push_back(c);
    }
  }
  std::sort(out.begin(), out.end(), [&cat](int a, int b) { return cat.cookie_id_less(a, b); });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<int> device_ip_list(const Catalog& cat, int device) {
  std::vector<int> ips;
  ips.reserve(cat.device_ips[device].size());
  for (const auto& o : cat.device_ips[device]) ips.push_back(o.ip);
  return ips;
}

}  // namespace

CandidateSet select_candidates(const Catalog& cat, int device, const BlockingThresholds& t) {
  if (device < 0 || device >= cat.n_devices()) throw std::runtime_error("unknown device index");
  t.validate();
  const std::vector<int> all_ips = device_ip_list(cat, device);

  std::vector<int> rare1, rare2;
  for (int ip : all_ips) {
    int dd = cat.device_degree(ip);
    int cd = cat.cookie_degree(ip);
    if (dd < t.r1_dev && cd < t.r1_cook) rare1.push_back(ip);
    if (dd < t.r2_dev && cd < t.r2_cook) rare2.push_back(ip);
  }

  CandidateSet result;
  result.device = device;
  result.rule_used = Rule::R1;
  result.cookie_ids = cookies_on_ips(cat, rare1, /*known_only=*/true);
  if (result.cookie_ids.empty()) {
    result.rule_used = Rule::R2;
    result.cookie_ids = cookies_on_ips(cat, rare2, /*known_only=*/true);
  }
  if (result.cookie_ids.empty()) {
    result.rule_used = Rule::R3;
    result.cookie_ids = cookies_on_ips(cat, all_ips, /*known_only=*/true);
  }
  if (result.cookie_ids.empty()) {
    result.rule_used = Rule::R4;
    result.cookie_ids = cookies_on_ips(cat, all_ips, /*known_only=*/false);
  }

  // Rule 5: close over handles. One pass reaches closure since handle-mates
  // of a mate share the same handle.
  std::vector<int> added;
  for (int c : result.cookie_ids) {
    int h = cat.cookies[c].handle_idx;
    if (h < 0) continue;
    for (int mate : cat.handle_cookies[h]) {
      if (!std::binary_search(result.cookie_ids.begin(), result.cookie_ids.end(), mate,
                              [&cat](int a, int b) { return cat.cookie_id_less(a, b); })) {
        added.push_back(mate);
      }
    }
  }
  if (!added.empty()) {
    std::sort(added.begin(), added.end(), [&cat](int a, int b) { return cat.cookie_id_less(a, b); });
    added.erase(std::unique(added.begin(), added.end()), added.end());
    result.via_handle = added;
    std::vector<int> merged;
    merged.reserve(result.cookie_ids.size() + added.size());
    std::merge(result.cookie_ids.begin(), result.cookie_ids.end(), added.begin(), added.end(),
               std::back_inserter(merged), [&cat](int a, int b) { return cat.cookie_id_less(a, b); });
    result.cookie_ids = std::move(merged);
  }
  return result;
}

CandidateSet select_candidates(const Catalog& cat, const std::string& device_id,
                               const BlockingThresholds& t) {
  return select_candidates(cat, cat.device_index(device_id), t);
}

CandidateSet expand_candidates(const Catalog& cat, int device) {
  if (device < 0 || device >= cat.n_devices()) throw std::runtime_error("unknown device index");
  CandidateSet result;
  result.device = device;
  result.rule_used = Rule::R4;
  result.cookie_ids = cookies_on_ips(cat, device_ip_list(cat, device), /*known_only=*/false);
  return result;
}

CandidateSet expand_candidates(const Catalog& cat, const std::string& device_id) {
  return expand_candidates(cat, cat.device_index(device_id));
}

std::vector<CandidateSet> select_all_candidates(const Catalog& cat, const BlockingThresholds& t,
                                                int n_threads) {
  std::vector<CandidateSet> sets(cat.n_devices());
  parallel_for(cat.n_devices(), n_threads,
               [&](int d) { sets[d] = select_candidates(cat, d, t); });
  return sets;
}

CoverageReport coverage_report(const Catalog& cat, const BlockingThresholds& t) {
  CoverageReport rep;
  for (int d = 0; d < cat.n_devices(); ++d) {
    CandidateSet set = select_candidates(cat, d, t);
    rep.total_pairs += static_cast<int64_t>(set.cookie_ids.size());
    if (set.cookie_ids.empty()) ++rep.empty_sets;
    else ++rep.rule_counts[static_cast<int>(set.rule_used)];

    int h = cat.devices[d].handle_idx;
    if (h < 0) continue;
    ++rep.n_devices;
    bool covered = true;
    if (h < static_cast<int>(cat.handle_cookies.size())) {
      for (int truth_cookie : cat.handle_cookies[h]) {
        if (!std::binary_search(set.cookie_ids.begin(), set.cookie_ids.end(), truth_cookie,
                                [&cat](int a, int b) { return cat.cookie_id_less(a, b); })) {
          covered = false;
          break;
        }
      }
    }
    if (covered) ++rep.n_covered;
  }
  rep.coverage = rep.n_devices == 0 ? 0.0 : double(rep.n_covered) / double(rep.n_devices);
  return rep;
}

void write_candidates_csv(const Catalog& cat, const std::vector<CandidateSet>& sets,
                          const std::string& path) {
  CsvWriter w(path);
  w.write_row({"device_id", "cookie_id", "rule_used", "via_handle"});
  for (const auto& set : sets) {
    for (int c : set.cookie_ids) {
      bool via = std::binary_search(set.via_handle.begin(), set.via_handle.end(), c,
                                    [&cat](int a, int b) { return cat.cookie_id_less(a, b); });
      w.write_row({cat.devices[set.device].device_id, cat.cookies[c].cookie_id,
                   rule_name(set.rule_used), via ? "1" : "0"});
    }
  }
  w.close();
}

}  // namespace xdm
