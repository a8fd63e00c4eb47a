#include "xdmatch/features.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "xdmatch/common.hpp"
#include "xdmatch/csv.hpp"

namespace xdm {

void LabeledHandles::set(const Catalog& catalog, int device, int handle) {
  auto [it, inserted] = by_device_.emplace(device, handle);
  if (!inserted) {
    if (it->second == handle) return;
    throw std::runtime_error("device already labeled with a different handle: " +
                             catalog.devices[device].device_id);
  }
  auto& list = devices_by_handle_[handle];
  auto pos = std::lower_bound(list.begin(), list.end(), device,
                              [&catalog](int a, int b) { return catalog.device_id_less(a, b); });
  list.insert(pos, device);
}

std::optional<int> LabeledHandles::handle_of(int device) const {
  auto it = by_device_.find(device);
  if (it == by_device_.end()) return std::nullopt;
  return it->second;
}

const std::vector<int>* LabeledHandles::devices_with(int handle) const {
  auto it = devices_by_handle_.find(handle);
  if (it == devices_by_handle_.end()) return nullptr;
  return &it->second;
}

LabeledHandles training_handles(const Catalog& catalog) {
  LabeledHandles labeled;
  for (int d = 0; d < catalog.n_devices(); ++d) {
    if (catalog.devices[d].handle_idx >= 0) labeled.set(catalog, d, catalog.devices[d].handle_idx);
  }
  return labeled;
}

namespace {

std::vector<int> intersect_sorted(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

size_t intersect_size(const std::vector<int>& a, const std::vector<int>& b) {
  size_t n = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) ++i;
    else if (b[j] < a[i]) ++j;
    else { ++n; ++i; ++j; }
  }
  return n;
}

const IpObservation* find_observation(const std::vector<IpObservation>& obs, int ip) {
  auto it = std::lower_bound(obs.begin(), obs.end(), ip,
                             [](const IpObservation& o, int v) { return o.ip < v; });
  if (it != obs.end() && it->ip == ip) return &*it;
  return nullptr;
}

void compute_o_sets(const Catalog& cat, int device, int cookie, const LabeledHandles& labeled,
                    std::vector<int>& others, std::vector<int>& i_o, std::vector<int>& p_o) {
  others.clear();
  i_o.clear();
  p_o.clear();
  int h = cat.cookies[cookie].handle_idx;
  if (h < 0) return;
  const std::vector<int>* holders = labeled.devices_with(h);
  if (holders == nullptr) return;
  for (int e : *holders) {
    if (e != device) others.push_back(e);
  }
  for (int e : others) {
    for (const auto& o : cat.device_ips[e]) i_o.push_back(o.ip);
    for (const auto& p : cat.device_props[e]) p_o.push_back(p.property);
  }
  std::sort(i_o.begin(), i_o.end());
  i_o.erase(std::unique(i_o.begin(), i_o.end()), i_o.end());
  std::sort(p_o.begin(), p_o.end());
  p_o.erase(std::unique(p_o.begin(), p_o.end()), p_o.end());
}

}  // namespace

PairContext build_context(const Catalog& cat, int device, int cookie,
                          const LabeledHandles& labeled, const BlockingThresholds& t) {
  if (device < 0 || device >= cat.n_devices()) throw std::runtime_error("unknown device index");
  if (cookie < 0 || cookie >= cat.n_cookies()) throw std::runtime_error("unknown cookie index");
  PairContext ctx;

  for (const auto& o : cat.device_ips[device]) {
    ctx.i_d1.push_back(o.ip);
    if (cat.device_degree(o.ip) < t.r1_dev && cat.cookie_degree(o.ip) < t.r1_cook) {
      ctx.i_d2.push_back(o.ip);
    }
  }
  for (const auto& o : cat.cookie_ips[cookie]) {
    ctx.i_c1.push_back(o.ip);
    if (cat.device_degree(o.ip) < t.r1_dev && cat.cookie_degree(o.ip) < t.r1_cook) {
      ctx.i_c2.push_back(o.ip);
    }
  }
  for (const auto& p : cat.device_props[device]) ctx.p_d.push_back(p.property);

  ctx.inter = intersect_sorted(ctx.i_d2, ctx.i_c2);
  if (ctx.inter.empty()) ctx.inter = intersect_sorted(ctx.i_d1, ctx.i_c1);

  compute_o_sets(cat, device, cookie, labeled, ctx.others, ctx.i_o, ctx.p_o);
  return ctx;
}

FeatureRow extract_features(const Catalog& cat, int device, int cookie, const PairContext& ctx) {
  const DeviceRecord& d = cat.devices[device];
  const CookieRecord& c = cat.cookies[cookie];
  FeatureRow row;
  row.device = device;
  row.cookie = cookie;

  row.set_slot(1, d.device_type);
  row.set_slot(2, d.device_os);
  row.set_slot(3, d.country);
  row.set_slot(4, d.anon_c0);
  row.set_slot(5, d.anon_c1);
  row.set_slot(6, d.anon_c2);
  row.set_slot(7, d.anon_5);
  row.set_slot(8, d.anon_6);
  row.set_slot(9, d.anon_7);
  row.set_slot(10, double(cat.device_ips[device].size()));
  row.set_slot(11, double(cat.device_props[device].size()));

  row.set_slot(12, c.computer_os);
  row.set_slot(13, c.browser_version);
  row.set_slot(14, c.country);
  row.set_slot(15, c.anon_c0);
  row.set_slot(16, c.anon_c1);
  row.set_slot(17, c.anon_c2);
  row.set_slot(18, c.anon_5);
  row.set_slot(19, c.anon_6);
  row.set_slot(20, c.anon_7);
  row.set_slot(21, double(cat.cookie_ips[cookie].size()));

  row.set_slot(22, double(intersect_size(ctx.i_d1, ctx.i_c1)));
  row.set_slot(23, double(intersect_size(ctx.i_d2, ctx.i_c2)));
  row.set_slot(24, double(ctx.others.size()));
  row.set_slot(25, double(intersect_size(ctx.i_d1, ctx.i_o)));
  row.set_slot(26, double(intersect_size(ctx.p_d, ctx.p_o)));
  row.set_slot(27, 0.0);

  const double n_inter = double(ctx.inter.size());
  double agg[5] = {0, 0, 0, 0, 0};
  double z_dev[6] = {0, 0, 0, 0, 0, 0};
  double z_cook[6] = {0, 0, 0, 0, 0, 0};
  for (int ip : ctx.inter) {
    const IpAggregate& a = cat.ip_aggregates[ip];
    agg[0] += a.is_cell ? 1.0 : 0.0;
    agg[1] += double(a.total_freq);
    for (int k = 0; k < 3; ++k) agg[2 + k] += double(a.counts[k]);
    if (const IpObservation* o = find_observation(cat.device_ips[device], ip)) {
      z_dev[0] += double(o->freq_count);
      for (int k = 0; k < 5; ++k) z_dev[1 + k] += double(o->counts[k]);
    }
    if (const IpObservation* o = find_observation(cat.cookie_ips[cookie], ip)) {
      z_cook[0] += double(o->freq_count);
      for (int k = 0; k < 5; ++k) z_cook[1 + k] += double(o->counts[k]);
    }
  }
  for (int k = 0; k < 5; ++k) {
    row.set_slot(28 + k, agg[k]);
    row.set_slot(33 + k, n_inter > 0 ? agg[k] / n_inter : 0.0);
  }
  for (int k = 0; k < 6; ++k) {
    row.set_slot(38 + k, z_dev[k]);
    row.set_slot(44 + k, n_inter > 0 ? z_dev[k] / n_inter : 0.0);
    row.set_slot(50 + k, z_cook[k]);
    row.set_slot(56 + k, n_inter > 0 ? z_cook[k] / n_inter : 0.0);
    row.set_slot(62 + k, z_dev[k] - z_cook[k]);
  }
  return row;
}

void refresh_o_features(const Catalog& cat, FeatureRow& row, const LabeledHandles& labeled) {
  std::vector<int> others, i_o, p_o;
  compute_o_sets(cat, row.device, row.cookie, labeled, others, i_o, p_o);
  std::vector<int> i_d1;
  for (const auto& o : cat.device_ips[row.device]) i_d1.push_back(o.ip);
  std::vector<int> p_d;
  for (const auto& p : cat.device_props[row.device]) p_d.push_back(p.property);
  row.set_slot(24, double(others.size()));
  row.set_slot(25, double(intersect_size(i_d1, i_o)));
  row.set_slot(26, double(intersect_size(p_d, p_o)));
}

std::vector<FeatureRow> build_dataset(const Catalog& cat,
                                      const std::vector<CandidateSet>& candidate_sets,
                                      const LabeledHandles& labeled,
                                      const BlockingThresholds& t, int n_threads) {
  // order sets by device id; cookie ids inside a set are already ascending
  std::vector<int> set_order(candidate_sets.size());
  for (size_t i = 0; i < set_order.size(); ++i) set_order[i] = static_cast<int>(i);
  std::sort(set_order.begin(), set_order.end(), [&](int a, int b) {
    return cat.device_id_less(candidate_sets[a].device, candidate_sets[b].device);
  });

  std::vector<size_t> offsets(set_order.size() + 1, 0);
  for (size_t i = 0; i < set_order.size(); ++i) {
    offsets[i + 1] = offsets[i] + candidate_sets[set_order[i]].cookie_ids.size();
  }

  std::vector<FeatureRow> rows(offsets.back());
  parallel_for(static_cast<int>(set_order.size()), n_threads, [&](int i) {
    const CandidateSet& set = candidate_sets[set_order[i]];
    size_t at = offsets[i];
    int device_handle = cat.devices[set.device].handle_idx;
    for (int cookie : set.cookie_ids) {
      PairContext ctx = build_context(cat, set.device, cookie, labeled, t);
      FeatureRow row = extract_features(cat, set.device, cookie, ctx);
      if (device_handle >= 0) {
        int ch = cat.cookies[cookie].handle_idx;
        row.label = (ch >= 0 && ch == device_handle);
      }
      rows[at++] = std::move(row);
    }
  });
  return rows;
}

void write_dataset_csv(const Catalog& cat, const std::vector<FeatureRow>& rows,
                       const std::string& path) {
  CsvWriter w(path);
  std::vector<std::string> header = {"device_id", "cookie_id"};
  for (int i = 1; i <= kFeatureCount; ++i) header.push_back(strfmt("f%d", i));
  header.push_back("label");
  w.write_row(header);
  std::vector<std::string> fields;
  for (const auto& row : rows) {
    fields.clear();
    fields.push_back(cat.devices[row.device].device_id);
    fields.push_back(cat.cookies[row.cookie].cookie_id);
    for (double v : row.values) fields.push_back(format_double(v));
    fields.push_back(row.label ? (*row.label ? "1" : "0") : "");
    w.write_row(fields);
  }
  w.close();
}

namespace {
constexpr char kCacheMagic[4] = {'X', 'D', 'F', 'C'};
constexpr uint32_t kCacheVersion = 1;
}  // namespace

uint64_t dataset_cache_key(const Catalog& cat, const BlockingThresholds& t) {
  Fnv1a h;
  h.add(cat.content_hash);
  h.add(t.r1_dev);
  h.add(t.r1_cook);
  h.add(t.r2_dev);
  h.add(t.r2_cook);
  return h.value();
}

void write_dataset_cache(const std::vector<FeatureRow>& rows, uint64_t key, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(kCacheMagic, 4);
  uint32_t version = kCacheVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&key), sizeof key);
  uint64_t n = rows.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  for (const auto& row : rows) {
    out.write(reinterpret_cast<const char*>(row.values.data()), sizeof(double) * kFeatureCount);
    uint8_t label = row.label ? (*row.label ? 1 : 0) : 2;
    out.write(reinterpret_cast<const char*>(&label), 1);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::optional<std::vector<FeatureRow>> read_dataset_cache(uint64_t key, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[4];
  uint32_t version = 0;
  uint64_t stored_key = 0, n = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&stored_key), sizeof stored_key);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || std::memcmp(magic, kCacheMagic, 4) != 0 || version != kCacheVersion || stored_key != key) {
    return std::nullopt;
  }
  std::vector<FeatureRow> rows(n);
  for (auto& row : rows) {
    in.read(reinterpret_cast<char*>(row.values.data()), sizeof(double) * kFeatureCount);
    uint8_t label = 2;
    in.read(reinterpret_cast<char*>(&label), 1);
    if (!in) return std::nullopt;
    if (label != 2) row.label = (label == 1);
  }
  return rows;
}

}  // namespace xdm
