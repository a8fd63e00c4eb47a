#include "xdmatch/catalog.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "xdmatch/common.hpp"
#include "xdmatch/csv.hpp"

namespace xdm {

const std::vector<std::string> kDeviceHeader = {
    "drawbridge_handle", "device_id", "device_type", "device_os", "country",
    "anonymous_c0", "anonymous_c1", "anonymous_c2", "anonymous_5", "anonymous_6", "anonymous_7"};
const std::vector<std::string> kCookieHeader = {
    "drawbridge_handle", "cookie_id", "computer_os", "browser_version", "country",
    "anonymous_c0", "anonymous_c1", "anonymous_c2", "anonymous_5", "anonymous_6", "anonymous_7"};
const std::vector<std::string> kIpObservationHeader = {
    "id", "is_device", "ip", "freq_count", "count_1", "count_2", "count_3", "count_4", "count_5"};
const std::vector<std::string> kIpAggregateHeader = {
    "ip", "is_cell", "total_freq", "count_c0", "count_c1", "count_c2"};
const std::vector<std::string> kPropertyHeader = {"id", "is_device", "property_id", "count"};

double Interner::code(const std::string& token) {
  if (token == missing_token_) return -1.0;
  auto it = map_.find(token);
  if (it != map_.end()) return it->second;
  double c = static_cast<double>(tokens_.size());
  map_.emplace(token, c);
  tokens_.push_back(token);
  return c;
}

std::optional<double> Interner::lookup(const std::string& token) const {
  if (token == missing_token_) return -1.0;
  auto it = map_.find(token);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

void Interner::save(const std::string& path) const {
  CsvWriter w(path);
  w.write_row({"token", "code"});
  w.write_row({missing_token_, "-1"});
  for (size_t i = 0; i < tokens_.size(); ++i) {
    w.write_row({tokens_[i], std::to_string(i)});
  }
  w.close();
}

void Interner::load(const std::string& path) {
  CsvReader r(path, {"token", "code"});
  map_.clear();
  tokens_.clear();
  std::vector<std::string> f;
  while (r.next_row(f)) {
    int64_t code = r.to_int(f[1], 2);
    if (code == -1) {
      missing_token_ = f[0];
      continue;
    }
    if (code != static_cast<int64_t>(tokens_.size())) {
      r.fail(2, "dictionary codes must be dense and in order");
    }
    map_.emplace(f[0], static_cast<double>(code));
    tokens_.push_back(f[0]);
  }
}

TableFiles world_tables(const std::string& dir) {
  auto join = [&dir](const char* name) {
    if (dir.empty()) return std::string(name);
    if (dir.back() == '/') return dir + name;
    return dir + "/" + name;
  };
  return TableFiles{join("dev_train.csv"), join("dev_test.csv"), join("cookies.csv"),
                    join("ip_obs.csv"),    join("ip_agg.csv"),   join("properties.csv")};
}

int Catalog::device_index(const std::string& id) const {
  auto it = device_by_id.find(id);
  if (it == device_by_id.end()) throw std::runtime_error("unknown device id: " + id);
  return it->second;
}

int Catalog::cookie_index(const std::string& id) const {
  auto it = cookie_by_id.find(id);
  if (it == cookie_by_id.end()) throw std::runtime_error("unknown cookie id: " + id);
  return it->second;
}

namespace {

// ranks[i] = position of id i when all ids are sorted lexicographically
template <typename GetId>
std::vector<int> id_ranks(int n, GetId get_id) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return get_id(a) < get_id(b); });
  std::vector<int> rank(n);
  for (int pos = 0; pos < n; ++pos) rank[order[pos]] = pos;
  return rank;
}

void hash_observations(Fnv1a& h, const std::vector<IpObservation>& obs) {
  h.add(static_cast<uint64_t>(obs.size()));
  for (const auto& o : obs) {
    h.add(o.ip);
    h.add(o.freq_count);
    for (int64_t c : o.counts) h.add(c);
  }
}

}  // namespace

void Catalog::rebuild_indexes() {
  device_rank = id_ranks(n_devices(), [this](int i) -> const std::string& { return devices[i].device_id; });
  cookie_rank = id_ranks(n_cookies(), [this](int i) -> const std::string& { return cookies[i].cookie_id; });

  ip_devices.assign(ip_tokens.size(), {});
  ip_cookies.assign(ip_tokens.size(), {});
  for (int d = 0; d < n_devices(); ++d)
    for (const auto& o : device_ips[d]) ip_devices[o.ip].push_back(d);
  for (int c = 0; c < n_cookies(); ++c)
    for (const auto& o : cookie_ips[c]) ip_cookies[o.ip].push_back(c);
  for (auto& v : ip_devices)
    std::sort(v.begin(), v.end(), [this](int a, int b) { return device_id_less(a, b); });
  for (auto& v : ip_cookies)
    std::sort(v.begin(), v.end(), [this](int a, int b) { return cookie_id_less(a, b); });

  handle_devices.assign(handle_tokens.size(), {});
  handle_cookies.assign(handle_tokens.size(), {});
  for (int d = 0; d < n_devices(); ++d)
    if (devices[d].handle_idx >= 0) handle_devices[devices[d].handle_idx].push_back(d);
  for (int c = 0; c < n_cookies(); ++c)
    if (cookies[c].handle_idx >= 0) handle_cookies[cookies[c].handle_idx].push_back(c);
  for (auto& v : handle_devices)
    std::sort(v.begin(), v.end(), [this](int a, int b) { return device_id_less(a, b); });
  for (auto& v : handle_cookies)
    std::sort(v.begin(), v.end(), [this](int a, int b) { return cookie_id_less(a, b); });

  Fnv1a h;
  h.add(static_cast<uint64_t>(devices.size()));
  for (const auto& d : devices) {
    h.add(d.device_id);
    h.add(d.handle.value);
    h.add(static_cast<int64_t>(d.is_test));
    for (double v : {d.device_type, d.device_os, d.country, d.anon_c0, d.anon_c1, d.anon_c2,
                     d.anon_5, d.anon_6, d.anon_7})
      h.add(v);
  }
  h.add(static_cast<uint64_t>(cookies.size()));
  for (const auto& c : cookies) {
    h.add(c.cookie_id);
    h.add(c.handle.value);
    for (double v : {c.computer_os, c.browser_version, c.country, c.anon_c0, c.anon_c1, c.anon_c2,
                     c.anon_5, c.anon_6, c.anon_7})
      h.add(v);
  }
  h.add(static_cast<uint64_t>(ip_tokens.size()));
  for (size_t i = 0; i < ip_tokens.size(); ++i) {
    h.add(ip_tokens[i]);
    h.add(static_cast<int64_t>(ip_aggregates[i].is_cell));
    h.add(ip_aggregates[i].total_freq);
    for (int64_t c : ip_aggregates[i].counts) h.add(c);
  }
  for (const auto& obs : device_ips) hash_observations(h, obs);
  for (const auto& obs : cookie_ips) hash_observations(h, obs);
  for (const auto& props : device_props) {
    h.add(static_cast<uint64_t>(props.size()));
    for (const auto& p : props) {
      h.add(p.property);
      h.add(p.count);
    }
  }
  for (const auto& props : cookie_props) {
    h.add(static_cast<uint64_t>(props.size()));
    for (const auto& p : props) {
      h.add(p.property);
      h.add(p.count);
    }
  }
  content_hash = h.value();
}

namespace {

struct Builder {
  Catalog cat;
  std::string sentinel;

  Handle make_handle(const std::string& token) {
    Handle h;
    h.value = token;
    h.known = (token != sentinel);
    return h;
  }

  int handle_index(const Handle& h) {
    if (!h.known) return -1;
    auto it = cat.handle_by_token.find(h.value);
    if (it != cat.handle_by_token.end()) return it->second;
    int idx = static_cast<int>(cat.handle_tokens.size());
    cat.handle_tokens.push_back(h.value);
    cat.handle_by_token.emplace(h.value, idx);
    return idx;
  }

  int ip_index(const std::string& token) {
    auto it = cat.ip_by_token.find(token);
    if (it != cat.ip_by_token.end()) return it->second;
    int idx = static_cast<int>(cat.ip_tokens.size());
    cat.ip_tokens.push_back(token);
    cat.ip_by_token.emplace(token, idx);
    return idx;
  }

  // missing numerics arrive as the empty string or the sentinel "-1"
  double numeric(const CsvReader& r, const std::string& field, int column) {
    if (field.empty() || field == "-1") return -1.0;
    return r.to_double(field, column);
  }

  double boolean(const CsvReader& r, const std::string& field, int column) {
    if (field.empty() || field == "-1") return -1.0;
    if (field == "0") return 0.0;
    if (field == "1") return 1.0;
    r.fail(column, "malformed boolean '" + field + "'");
  }

  void read_devices(const std::string& path, bool is_test) {
    CsvReader r(path, kDeviceHeader);
    std::vector<std::string> f;
    while (r.next_row(f)) {
      DeviceRecord d;
      d.handle = make_handle(f[0]);
      d.handle_idx = handle_index(d.handle);
      d.device_id = f[1];
      d.is_test = is_test;
      d.device_type = cat.dictionary.code(f[2]);
      d.device_os = cat.dictionary.code(f[3]);
      d.country = cat.dictionary.code(f[4]);
      d.anon_c0 = boolean(r, f[5], 6);
      d.anon_c1 = cat.dictionary.code(f[6]);
      d.anon_c2 = cat.dictionary.code(f[7]);
      d.anon_5 = numeric(r, f[8], 9);
      d.anon_6 = numeric(r, f[9], 10);
      d.anon_7 = numeric(r, f[10], 11);
      if (!cat.device_by_id.emplace(d.device_id, cat.n_devices()).second) {
        r.fail(2, "duplicate device_id '" + d.device_id + "'");
      }
      cat.devices.push_back(std::move(d));
    }
  }

  void read_cookies(const std::string& path) {
    CsvReader r(path, kCookieHeader);
    std::vector<std::string> f;
    while (r.next_row(f)) {
      CookieRecord c;
      c.handle = make_handle(f[0]);
      c.handle_idx = handle_index(c.handle);
      c.cookie_id = f[1];
      c.computer_os = cat.dictionary.code(f[2]);
      c.browser_version = cat.dictionary.code(f[3]);
      c.country = cat.dictionary.code(f[4]);
      c.anon_c0 = boolean(r, f[5], 6);
      c.anon_c1 = cat.dictionary.code(f[6]);
      c.anon_c2 = cat.dictionary.code(f[7]);
      c.anon_5 = numeric(r, f[8], 9);
      c.anon_6 = numeric(r, f[9], 10);
      c.anon_7 = numeric(r, f[10], 11);
      if (!cat.cookie_by_id.emplace(c.cookie_id, cat.n_cookies()).second) {
        r.fail(2, "duplicate cookie_id '" + c.cookie_id + "'");
      }
      cat.cookies.push_back(std::move(c));
    }
  }

  void read_ip_observations(const std::string& path) {
    cat.device_ips.assign(cat.devices.size(), {});
    cat.cookie_ips.assign(cat.cookies.size(), {});
    CsvReader r(path, kIpObservationHeader);
    std::vector<std::string> f;
    while (r.next_row(f)) {
      bool is_device = f[1] == "1";
      if (!is_device && f[1] != "0") r.fail(2, "malformed boolean '" + f[1] + "'");
      IpObservation o;
      o.ip = ip_index(f[2]);
      o.freq_count = r.to_int(f[3], 4);
      for (int k = 0; k < 5; ++k) o.counts[k] = r.to_int(f[4 + k], 5 + k);
      if (o.freq_count < 0) r.fail(4, "negative freq_count");
      if (is_device) {
        auto it = cat.device_by_id.find(f[0]);
        if (it == cat.device_by_id.end()) r.fail(1, "unknown device id '" + f[0] + "'");
        cat.device_ips[it->second].push_back(o);
      } else {
        auto it = cat.cookie_by_id.find(f[0]);
        if (it == cat.cookie_by_id.end()) r.fail(1, "unknown cookie id '" + f[0] + "'");
        cat.cookie_ips[it->second].push_back(o);
      }
    }
    // dedup per owner: one observation per ip, first row wins
    auto dedup = [](std::vector<IpObservation>& obs) {
      std::stable_sort(obs.begin(), obs.end(),
                       [](const IpObservation& a, const IpObservation& b) { return a.ip < b.ip; });
      obs.erase(std::unique(obs.begin(), obs.end(),
                            [](const IpObservation& a, const IpObservation& b) { return a.ip == b.ip; }),
                obs.end());
    };
    for (auto& obs : cat.device_ips) dedup(obs);
    for (auto& obs : cat.cookie_ips) dedup(obs);
  }

  void read_ip_aggregates(const std::string& path) {
    cat.ip_aggregates.assign(cat.ip_tokens.size(), IpAggregate{});
    cat.ip_aggregate_synthesized.assign(cat.ip_tokens.size(), 1);
    CsvReader r(path, kIpAggregateHeader);
    std::vector<std::string> f;
    while (r.next_row(f)) {
      int ip = ip_index(f[0]);
      if (static_cast<size_t>(ip) >= cat.ip_aggregates.size()) {
        cat.ip_aggregates.resize(ip + 1);
        cat.ip_aggregate_synthesized.resize(ip + 1, 1);
      }
      if (static_cast<size_t>(ip) < cat.ip_aggregate_synthesized.size() &&
          cat.ip_aggregate_synthesized[ip] == 0) {
        r.fail(1, "duplicate aggregate row for ip '" + f[0] + "'");
      }
      IpAggregate a;
      if (f[1] == "0") a.is_cell = false;
      else if (f[1] == "1") a.is_cell = true;
      else r.fail(2, "malformed boolean '" + f[1] + "'");
      a.total_freq = r.to_int(f[2], 3);
      for (int k = 0; k < 3; ++k) a.counts[k] = r.to_int(f[3 + k], 4 + k);
      cat.ip_aggregates[ip] = a;
      cat.ip_aggregate_synthesized[ip] = 0;
    }
  }

  void read_properties(const std::string& path) {
    cat.device_props.assign(cat.devices.size(), {});
    cat.cookie_props.assign(cat.cookies.size(), {});
    std::unordered_map<std::string, int> prop_index;
    CsvReader r(path, kPropertyHeader);
    std::vector<std::string> f;
    while (r.next_row(f)) {
      bool is_device = f[1] == "1";
      if (!is_device && f[1] != "0") r.fail(2, "malformed boolean '" + f[1] + "'");
      PropertyObservation p;
      auto it = prop_index.find(f[2]);
      if (it == prop_index.end()) {
        it = prop_index.emplace(f[2], static_cast<int>(prop_index.size())).first;
      }
      p.property = it->second;
      p.count = r.to_int(f[3], 4);
      if (is_device) {
        auto o = cat.device_by_id.find(f[0]);
        if (o == cat.device_by_id.end()) r.fail(1, "unknown device id '" + f[0] + "'");
        cat.device_props[o->second].push_back(p);
      } else {
        auto o = cat.cookie_by_id.find(f[0]);
        if (o == cat.cookie_by_id.end()) r.fail(1, "unknown cookie id '" + f[0] + "'");
        cat.cookie_props[o->second].push_back(p);
      }
    }
    auto dedup = [](std::vector<PropertyObservation>& props) {
      std::stable_sort(props.begin(), props.end(),
                       [](const PropertyObservation& a, const PropertyObservation& b) {
                         return a.property < b.property;
                       });
      props.erase(std::unique(props.begin(), props.end(),
                              [](const PropertyObservation& a, const PropertyObservation& b) {
                                return a.property == b.property;
                              }),
                  props.end());
    };
    for (auto& props : cat.device_props) dedup(props);
    for (auto& props : cat.cookie_props) dedup(props);
  }
};

}  // namespace

Catalog ingest(const TableFiles& files, const IngestOptions& options) {
  for (const std::string& p : {files.device_train, files.device_test, files.cookies,
                               files.ip_observations, files.ip_aggregates, files.properties}) {
    if (!file_exists(p)) throw std::runtime_error("missing input table: " + p);
  }
  Builder b;
  b.sentinel = options.handle_sentinel;
  b.cat.handle_sentinel = options.handle_sentinel;
  if (!options.dictionary_file.empty() && file_exists(options.dictionary_file)) {
    b.cat.dictionary.load(options.dictionary_file);
  }
  b.read_devices(files.device_train, /*is_test=*/false);
  b.read_devices(files.device_test, /*is_test=*/true);
  b.read_cookies(files.cookies);
  b.read_ip_observations(files.ip_observations);
  b.read_ip_aggregates(files.ip_aggregates);
  b.read_properties(files.properties);
  b.cat.rebuild_indexes();
  return std::move(b.cat);
}

namespace {

bool has_ip(const std::vector<IpObservation>& obs, int ip) {
  auto it = std::lower_bound(obs.begin(), obs.end(), ip,
                             [](const IpObservation& o, int v) { return o.ip < v; });
  return it != obs.end() && it->ip == ip;
}

}  // namespace

Catalog propagate_same_handle_ips(Catalog catalog) {
  for (size_t h = 0; h < catalog.handle_cookies.size(); ++h) {
    const auto& mates = catalog.handle_cookies[h];  // ascending by cookie id
    if (mates.size() < 2) continue;
    // union of (ip -> donated observation); the mate with the smallest cookie
    // id donates when several hold the same ip
    std::unordered_map<int, IpObservation> donors;
    for (int c : mates) {
      for (const auto& o : catalog.cookie_ips[c]) donors.emplace(o.ip, o);
    }
    for (int c : mates) {
      auto& own = catalog.cookie_ips[c];
      if (own.size() == donors.size()) continue;  // already holds the union
      std::vector<IpObservation> gained;
      for (const auto& [ip, obs] : donors) {
        if (!has_ip(own, ip)) gained.push_back(obs);
      }
      if (!gained.empty()) {
        own.insert(own.end(), gained.begin(), gained.end());
        std::sort(own.begin(), own.end(),
                  [](const IpObservation& a, const IpObservation& b) { return a.ip < b.ip; });
      }
    }
  }
  // propagated ips already exist in the ip universe, so aggregates are
  // untouched; only observation lists, indexes and degrees change
  catalog.rebuild_indexes();
  return catalog;
}

}  // namespace xdm
