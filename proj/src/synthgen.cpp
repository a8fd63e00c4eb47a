#include "xdmatch/synthgen.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "xdmatch/common.hpp"
#include "xdmatch/csv.hpp"

namespace xdm {

void WorldConfig::validate() const {
  if (n_persons < 1) throw std::runtime_error("n_persons must be >= 1");
  for (double p : {member_ip_prob, drifter_prob, public_ip_attach_prob, shared_ip_attach_prob,
                   neighbor_attach_prob, cell_ip_fraction, unknown_handle_fraction,
                   test_person_fraction, categorical_missing_prob, numeric_missing_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::runtime_error("world probabilities must be in [0,1]");
  }
  for (double l : {device_lambda, cookie_lambda, private_ip_lambda, props_lambda,
                   neighbor_ip_lambda}) {
    if (l < 0.0) throw std::runtime_error("world rates must be >= 0");
  }
  if (public_ip_count < 0 || shared_ip_count < 0 || n_properties < 1 || neighborhood_size < 1) {
    throw std::runtime_error("world counts must be non-negative (n_properties >= 1)");
  }
}

namespace {

struct MemberObs {
  std::vector<int> ips;                       // global ip indexes, ascending
  std::vector<std::array<int64_t, 6>> payload;  // freq + count_1..5 per ip
  std::map<int, int64_t> props;               // property index -> count
};

struct World {
  std::vector<std::string> ip_tokens;
  std::vector<bool> ip_is_cell;
  // per emitted member, aligned with ids
  std::vector<std::string> device_ids, cookie_ids;
  std::vector<MemberObs> device_obs, cookie_obs;
  std::vector<std::vector<std::string>> device_fields, cookie_fields;  // csv columns
  std::vector<bool> device_is_test;
};

std::string cat_or_missing(Rng& rng, const WorldConfig& cfg, std::string value) {
  if (rng.next_bool(cfg.categorical_missing_prob)) return "-1";
  return value;
}

std::string num_or_missing(Rng& rng, const WorldConfig& cfg, int64_t value) {
  if (rng.next_bool(cfg.numeric_missing_prob)) return "-1";
  return std::to_string(value);
}

}  // namespace

GroundTruth generate_world(const WorldConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  Rng rng(cfg.seed);
  World w;
  GroundTruth truth;

  auto alloc_ip = [&](const std::string& token, bool is_cell) {
    w.ip_tokens.push_back(token);
    w.ip_is_cell.push_back(is_cell);
    return static_cast<int>(w.ip_tokens.size()) - 1;
  };

  std::vector<int> public_ips, shared_ips;
  for (int i = 0; i < cfg.public_ip_count; ++i) {
    public_ips.push_back(alloc_ip(strfmt("ip_g%05d", i), false));
  }
  for (int i = 0; i < cfg.shared_ip_count; ++i) {
    shared_ips.push_back(alloc_ip(strfmt("ip_s%05d", i), false));
  }
  const int n_hoods = (cfg.n_persons + cfg.neighborhood_size - 1) / cfg.neighborhood_size;
  std::vector<std::vector<int>> hood_ips(n_hoods);
  for (int i = 0; i < n_hoods; ++i) {
    const int n = 1 + rng.next_poisson(cfg.neighbor_ip_lambda);
    for (int k = 0; k < n; ++k) {
      hood_ips[i].push_back(alloc_ip(strfmt("ip_n%06d", static_cast<int>(w.ip_tokens.size())), false));
    }
  }

  auto draw_payload = [&]() {
    std::array<int64_t, 6> p;
    p[0] = 1 + rng.next_poisson(3.0);  // freq_count
    for (int k = 1; k < 6; ++k) p[k] = rng.next_poisson(1.5);
    return p;
  };

  int dev_counter = 0, cook_counter = 0;
  for (int pi = 0; pi < cfg.n_persons; ++pi) {
    const std::string handle = strfmt("h_%05d", pi);
    const bool test_person = rng.next_bool(cfg.test_person_fraction);
    const int country = static_cast<int>(rng.next_index(8));
    const int platform = static_cast<int>(rng.next_index(4));
    const int c0_base = rng.next_bool(0.5) ? 1 : 0;
    const int c1_base = static_cast<int>(rng.next_index(4));
    const int num_base = static_cast<int>(rng.next_index(10));
    std::vector<int> favorites;
    for (int k = 0; k < 3; ++k) favorites.push_back(static_cast<int>(rng.next_index(cfg.n_properties)));

    const int n_dev = 1 + rng.next_poisson(cfg.device_lambda);
    const int n_cook = 1 + rng.next_poisson(cfg.cookie_lambda);
    const int n_priv = 1 + rng.next_poisson(cfg.private_ip_lambda);
    std::vector<int> private_ips;
    for (int k = 0; k < n_priv; ++k) {
      private_ips.push_back(alloc_ip(strfmt("ip_p%07d", static_cast<int>(w.ip_tokens.size())),
                                     rng.next_bool(cfg.cell_ip_fraction)));
    }

    const std::vector<int>& my_hood_ips = hood_ips[pi / cfg.neighborhood_size];

    auto attach_member = [&](MemberObs& obs) {
      std::vector<int> ips;
      if (!rng.next_bool(cfg.drifter_prob)) {
        ips.push_back(private_ips[0]);
        for (size_t k = 1; k < private_ips.size(); ++k) {
          if (rng.next_bool(cfg.member_ip_prob)) ips.push_back(private_ips[k]);
        }
      }
      for (int ip : my_hood_ips) {
        if (rng.next_bool(cfg.neighbor_attach_prob)) ips.push_back(ip);
      }
      for (int ip : shared_ips) {
        if (rng.next_bool(cfg.shared_ip_attach_prob)) ips.push_back(ip);
      }
      for (int ip : public_ips) {
        if (rng.next_bool(cfg.public_ip_attach_prob)) ips.push_back(ip);
      }
      std::sort(ips.begin(), ips.end());
      obs.ips = ips;
      for (size_t k = 0; k < ips.size(); ++k) obs.payload.push_back(draw_payload());
      const int n_props = rng.next_poisson(cfg.props_lambda);
      for (int k = 0; k < n_props; ++k) {
        int prop = rng.next_bool(0.7) ? favorites[rng.next_index(favorites.size())]
                                      : static_cast<int>(rng.next_index(cfg.n_properties));
        obs.props[prop] += 1 + rng.next_poisson(1.0);
      }
    };

    std::vector<std::string>& person_devs = truth.person_devices[handle];
    std::vector<std::string>& person_cooks = truth.person_cookies[handle];

    for (int k = 0; k < n_dev; ++k) {
      const std::string id = strfmt("dev_%07d", dev_counter++);
      person_devs.push_back(id);
      w.device_ids.push_back(id);
      w.device_is_test.push_back(test_person);
      MemberObs obs;
      attach_member(obs);
      w.device_obs.push_back(std::move(obs));
      std::vector<std::string> fields;
      fields.push_back(test_person ? "-1" : handle);
      fields.push_back(id);
      fields.push_back(cat_or_missing(rng, cfg, strfmt("type_%d", (int)rng.next_index(3))));
      fields.push_back(cat_or_missing(rng, cfg, strfmt("dos_%d_%d", platform, (int)rng.next_index(3))));
      int cc = rng.next_bool(0.05) ? (int)rng.next_index(8) : country;
      fields.push_back(cat_or_missing(rng, cfg, strfmt("cc_%d", cc)));
      int c0 = rng.next_bool(0.1) ? 1 - c0_base : c0_base;
      fields.push_back(std::to_string(c0));
      int c1 = rng.next_bool(0.7) ? c1_base : (int)rng.next_index(4);
      fields.push_back(cat_or_missing(rng, cfg, strfmt("c1_%d", c1)));
      fields.push_back(cat_or_missing(rng, cfg, strfmt("c2_%d", (int)rng.next_index(5))));
      fields.push_back(num_or_missing(rng, cfg, num_base + (int64_t)rng.next_index(3)));
      fields.push_back(num_or_missing(rng, cfg, (int64_t)rng.next_index(20)));
      fields.push_back(num_or_missing(rng, cfg, num_base + (int64_t)rng.next_index(5)));
      w.device_fields.push_back(std::move(fields));
    }

    for (int k = 0; k < n_cook; ++k) {
      const std::string id = strfmt("ck_%07d", cook_counter++);
      person_cooks.push_back(id);
      w.cookie_ids.push_back(id);
      MemberObs obs;
      attach_member(obs);
      w.cookie_obs.push_back(std::move(obs));
      const bool masked = rng.next_bool(cfg.unknown_handle_fraction);
      if (masked) truth.masked_cookies.push_back(id);
      std::vector<std::string> fields;
      fields.push_back(masked ? "-1" : handle);
      fields.push_back(id);
      fields.push_back(cat_or_missing(rng, cfg, strfmt("cos_%d_%d", platform, (int)rng.next_index(3))));
      fields.push_back(cat_or_missing(rng, cfg, strfmt("bv_%d", (int)rng.next_index(6))));
      int cc = rng.next_bool(0.05) ? (int)rng.next_index(8) : country;
      fields.push_back(cat_or_missing(rng, cfg, strfmt("cc_%d", cc)));
      int c0 = rng.next_bool(0.1) ? 1 - c0_base : c0_base;
      fields.push_back(std::to_string(c0));
      int c1 = rng.next_bool(0.7) ? c1_base : (int)rng.next_index(4);
      fields.push_back(cat_or_missing(rng, cfg, strfmt("c1_%d", c1)));
      fields.push_back(cat_or_missing(rng, cfg, strfmt("c2_%d", (int)rng.next_index(5))));
      fields.push_back(num_or_missing(rng, cfg, num_base + (int64_t)rng.next_index(3)));
      fields.push_back(num_or_missing(rng, cfg, (int64_t)rng.next_index(20)));
      fields.push_back(num_or_missing(rng, cfg, num_base + (int64_t)rng.next_index(5)));
      w.cookie_fields.push_back(std::move(fields));
    }

    for (const std::string& d : person_devs) truth.device_truth[d] = person_cooks;
  }

  // aggregates are exact sums over the emitted observations
  std::vector<int64_t> agg_freq(w.ip_tokens.size(), 0);
  std::vector<std::array<int64_t, 3>> agg_counts(w.ip_tokens.size(), {0, 0, 0});
  auto accumulate = [&](const MemberObs& obs) {
    for (size_t k = 0; k < obs.ips.size(); ++k) {
      agg_freq[obs.ips[k]] += obs.payload[k][0];
      for (int j = 0; j < 3; ++j) agg_counts[obs.ips[k]][j] += obs.payload[k][1 + j];
    }
  };
  for (const auto& obs : w.device_obs) accumulate(obs);
  for (const auto& obs : w.cookie_obs) accumulate(obs);

  const TableFiles files = world_tables(out_dir);
  {
    CsvWriter train(files.device_train), test(files.device_test);
    train.write_row(kDeviceHeader);
    test.write_row(kDeviceHeader);
    for (size_t i = 0; i < w.device_ids.size(); ++i) {
      (w.device_is_test[i] ? test : train).write_row(w.device_fields[i]);
    }
    train.close();
    test.close();
  }
  {
    CsvWriter out(files.cookies);
    out.write_row(kCookieHeader);
    for (const auto& fields : w.cookie_fields) out.write_row(fields);
    out.close();
  }
  {
    CsvWriter out(files.ip_observations);
    out.write_row(kIpObservationHeader);
    auto emit = [&](const std::string& id, bool is_device, const MemberObs& obs) {
      for (size_t k = 0; k < obs.ips.size(); ++k) {
        std::vector<std::string> row = {id, is_device ? "1" : "0", w.ip_tokens[obs.ips[k]],
                                        std::to_string(obs.payload[k][0])};
        for (int j = 1; j < 6; ++j) row.push_back(std::to_string(obs.payload[k][j]));
        out.write_row(row);
      }
    };
    for (size_t i = 0; i < w.device_ids.size(); ++i) emit(w.device_ids[i], true, w.device_obs[i]);
    for (size_t i = 0; i < w.cookie_ids.size(); ++i) emit(w.cookie_ids[i], false, w.cookie_obs[i]);
    out.close();
  }
  {
    CsvWriter out(files.ip_aggregates);
    out.write_row(kIpAggregateHeader);
    for (size_t i = 0; i < w.ip_tokens.size(); ++i) {
      out.write_row({w.ip_tokens[i], w.ip_is_cell[i] ? "1" : "0", std::to_string(agg_freq[i]),
                     std::to_string(agg_counts[i][0]), std::to_string(agg_counts[i][1]),
                     std::to_string(agg_counts[i][2])});
    }
    out.close();
  }
  {
    CsvWriter out(files.properties);
    out.write_row(kPropertyHeader);
    auto emit = [&](const std::string& id, bool is_device, const MemberObs& obs) {
      for (const auto& [prop, count] : obs.props) {
        out.write_row({id, is_device ? "1" : "0", strfmt("prop_%05d", prop), std::to_string(count)});
      }
    };
    for (size_t i = 0; i < w.device_ids.size(); ++i) emit(w.device_ids[i], true, w.device_obs[i]);
    for (size_t i = 0; i < w.cookie_ids.size(); ++i) emit(w.cookie_ids[i], false, w.cookie_obs[i]);
    out.close();
  }
  {
    CsvWriter out(out_dir.empty() ? "truth.csv" : out_dir + "/truth.csv");
    out.write_row({"device_id", "cookie_ids"});
    for (const auto& [device, cookies] : truth.device_truth) {
      std::vector<std::string> sorted = cookies;
      std::sort(sorted.begin(), sorted.end());
      std::string joined;
      for (size_t i = 0; i < sorted.size(); ++i) {
        if (i) joined += ' ';
        joined += sorted[i];
      }
      out.write_row({device, joined});
    }
    out.close();
  }
  return truth;
}

namespace {

struct RawTables {
  // device id -> (handle, is_test)
  std::unordered_map<std::string, std::pair<std::string, bool>> devices;
  std::unordered_map<std::string, std::string> cookie_handles;
  std::unordered_map<std::string, std::vector<std::string>> handle_to_cookies;
  std::unordered_map<std::string, int64_t> obs_freq_sum;
  std::unordered_map<std::string, std::array<int64_t, 3>> obs_count_sum;
};

}  // namespace

VerifyReport verify_world(const TableFiles& files, const std::string& truth_file) {
  VerifyReport rep;
  auto flag = [&rep](std::string msg) {
    rep.ok = false;
    if (rep.problems.size() < 200) rep.problems.push_back(std::move(msg));
  };

  RawTables raw;
  std::vector<std::string> f;
  for (int pass = 0; pass < 2; ++pass) {
    const bool is_test = pass == 1;
    CsvReader r(is_test ? files.device_test : files.device_train, kDeviceHeader);
    while (r.next_row(f)) {
      if (!raw.devices.emplace(f[1], std::make_pair(f[0], is_test)).second) {
        flag("duplicate device_id " + f[1]);
      }
      if (!is_test && f[0] == "-1") flag("train device with unknown handle: " + f[1]);
      if (is_test && f[0] != "-1") flag("test device with visible handle: " + f[1]);
    }
  }
  {
    CsvReader r(files.cookies, kCookieHeader);
    while (r.next_row(f)) {
      if (!raw.cookie_handles.emplace(f[1], f[0]).second) flag("duplicate cookie_id " + f[1]);
      if (f[0] != "-1") raw.handle_to_cookies[f[0]].push_back(f[1]);
    }
  }
  {
    CsvReader r(files.ip_observations, kIpObservationHeader);
    while (r.next_row(f)) {
      const bool is_device = f[1] == "1";
      if (is_device && raw.devices.find(f[0]) == raw.devices.end()) {
        flag("ip row for unknown device " + f[0]);
      }
      if (!is_device && raw.cookie_handles.find(f[0]) == raw.cookie_handles.end()) {
        flag("ip row for unknown cookie " + f[0]);
      }
      raw.obs_freq_sum[f[2]] += r.to_int(f[3], 4);
      auto& c = raw.obs_count_sum[f[2]];
      for (int k = 0; k < 3; ++k) c[k] += r.to_int(f[4 + k], 5 + k);
    }
  }
  {
    std::unordered_set<std::string> seen;
    CsvReader r(files.ip_aggregates, kIpAggregateHeader);
    while (r.next_row(f)) {
      if (!seen.insert(f[0]).second) flag("duplicate aggregate row for ip " + f[0]);
      const int64_t total = r.to_int(f[2], 3);
      auto it = raw.obs_freq_sum.find(f[0]);
      const int64_t want = it == raw.obs_freq_sum.end() ? 0 : it->second;
      if (total != want) {
        flag(strfmt("ip %s: aggregate total_freq %lld != observation sum %lld", f[0].c_str(),
                    (long long)total, (long long)want));
      }
      auto cit = raw.obs_count_sum.find(f[0]);
      for (int k = 0; k < 3; ++k) {
        const int64_t got = r.to_int(f[3 + k], 4 + k);
        const int64_t wantc = cit == raw.obs_count_sum.end() ? 0 : cit->second[k];
        if (got != wantc) {
          flag(strfmt("ip %s: aggregate count_c%d %lld != observation sum %lld", f[0].c_str(), k,
                      (long long)got, (long long)wantc));
        }
      }
    }
    for (const auto& [ip, sum] : raw.obs_freq_sum) {
      if (seen.find(ip) == seen.end() && sum != 0) flag("observed ip missing from aggregates: " + ip);
    }
  }
  {
    CsvReader r(files.properties, kPropertyHeader);
    while (r.next_row(f)) {
      const bool is_device = f[1] == "1";
      if (is_device && raw.devices.find(f[0]) == raw.devices.end()) {
        flag("property row for unknown device " + f[0]);
      }
      if (!is_device && raw.cookie_handles.find(f[0]) == raw.cookie_handles.end()) {
        flag("property row for unknown cookie " + f[0]);
      }
    }
  }

  // truth: every device appears once; known-handle cookies in a device's set
  // share one handle, the set holds that handle's complete cookie group, and
  // train devices carry exactly that handle
  std::unordered_set<std::string> devices_in_truth;
  {
    CsvReader r(truth_file, {"device_id", "cookie_ids"});
    while (r.next_row(f)) {
      const std::string& device = f[0];
      if (!devices_in_truth.insert(device).second) flag("duplicate truth row for device " + device);
      auto dit = raw.devices.find(device);
      if (dit == raw.devices.end()) {
        flag("truth row for unknown device " + device);
        continue;
      }
      std::set<std::string> set;
      {
        std::istringstream ss(f[1]);
        std::string id;
        while (ss >> id) set.insert(id);
      }
      std::string group_handle;
      bool mixed = false;
      for (const std::string& c : set) {
        auto cit = raw.cookie_handles.find(c);
        if (cit == raw.cookie_handles.end()) {
          flag("truth cookie not in cookie table: " + c);
          continue;
        }
        if (cit->second == "-1") continue;
        if (group_handle.empty()) group_handle = cit->second;
        else if (group_handle != cit->second) mixed = true;
      }
      if (mixed) flag("truth set for " + device + " mixes known handles");
      if (!group_handle.empty()) {
        for (const std::string& mate : raw.handle_to_cookies[group_handle]) {
          if (set.find(mate) == set.end()) {
            flag("truth set for " + device + " misses handle mate " + mate);
          }
        }
        if (!dit->second.second && dit->second.first != group_handle) {
          flag("train device " + device + " handle differs from its truth cookies");
        }
      }
    }
  }
  for (const auto& [device, info] : raw.devices) {
    if (devices_in_truth.find(device) == devices_in_truth.end()) {
      flag("device missing from truth: " + device);
    }
  }
  return rep;
}

}  // namespace xdm
