#pragma once

#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "xdmatch/candidates.hpp"
#include "xdmatch/catalog.hpp"

namespace xdm {

inline constexpr int kFeatureCount = 67;

// One device/cookie pair. values is 1-indexed through slot(); slot 27 is a
// numbering gap in the layout and stays 0.
struct FeatureRow {
  int device = -1;
  int cookie = -1;
  std::array<double, kFeatureCount> values{};
  std::optional<bool> label;

  double slot(int i) const { return values[static_cast<size_t>(i - 1)]; }
  void set_slot(int i, double v) { values[static_cast<size_t>(i - 1)] = v; }
};

// Which devices carry a usable handle right now. Starts as the training-set
// handles and grows by pseudo-labels during self-training.
class LabeledHandles {
 public:
  void set(const Catalog& catalog, int device, int handle);
  std::optional<int> handle_of(int device) const;
  // devices holding the handle, ascending by device id; nullptr when none
  const std::vector<int>* devices_with(int handle) const;
  size_t size() const { return by_device_.size(); }

 private:
  std::unordered_map<int, int> by_device_;
  std::unordered_map<int, std::vector<int>> devices_by_handle_;
};

// All training-table handles (devices with known handle).
LabeledHandles training_handles(const Catalog& catalog);

// The set algebra behind the relational slots. All vectors are sorted
// ascending (ip / property / device index).
struct PairContext {
  std::vector<int> i_d1, i_d2;  // device ips, and the rare subset
  std::vector<int> i_c1, i_c2;  // cookie ips, and the rare subset
  std::vector<int> p_d;         // device properties
  std::vector<int> inter;       // I: rare intersection, falling back to the full one
  std::vector<int> others;      // O: other devices labeled with the cookie's handle
  std::vector<int> i_o, p_o;    // union of ips / properties over O
};

PairContext build_context(const Catalog& catalog, int device, int cookie,
                          const LabeledHandles& labeled,
                          const BlockingThresholds& thresholds = {});

FeatureRow extract_features(const Catalog& catalog, int device, int cookie,
                            const PairContext& context);

// Recompute only the O-dependent slots (24..26) in place; everything else in
// the row is unaffected by new labels.
void refresh_o_features(const Catalog& catalog, FeatureRow& row, const LabeledHandles& labeled);

// One row per (device, candidate); rows ordered by device id then cookie id.
// label: known device handle -> equality with the cookie's known handle;
// unknown device handle -> unset.
std::vector<FeatureRow> build_dataset(const Catalog& catalog,
                                      const std::vector<CandidateSet>& candidate_sets,
                                      const LabeledHandles& labeled,
                                      const BlockingThresholds& thresholds = {},
                                      int n_threads = 1);

void write_dataset_csv(const Catalog& catalog, const std::vector<FeatureRow>& rows,
                       const std::string& path);

// Compact cache: header (magic, version, catalog hash + threshold key), then
// LE u64 row count and per row 67 f64 values + 1 label byte (0/1/2=unset).
void write_dataset_cache(const std::vector<FeatureRow>& rows, uint64_t key, const std::string& path);
std::optional<std::vector<FeatureRow>> read_dataset_cache(uint64_t key, const std::string& path);

uint64_t dataset_cache_key(const Catalog& catalog, const BlockingThresholds& thresholds);

}  // namespace xdm
