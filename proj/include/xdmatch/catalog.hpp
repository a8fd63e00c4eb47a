#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "xdmatch/types.hpp"

namespace xdm {

// Dictionary encoding for categorical tokens, global across all columns,
// dense codes in first-seen order. The missing token maps to the reserved
// code -1, which the learner routes with its default-direction trick.
class Interner {
 public:
  explicit Interner(std::string missing_token = "-1") : missing_token_(std::move(missing_token)) {}

  double code(const std::string& token);
  std::optional<double> lookup(const std::string& token) const;
  const std::string& token(int code) const { return tokens_.at(static_cast<size_t>(code)); }
  size_t size() const { return tokens_.size(); }
  const std::string& missing_token() const { return missing_token_; }

  void save(const std::string& path) const;   // two-column CSV: token,code
  void load(const std::string& path);

 private:
  std::unordered_map<std::string, double> map_;
  std::vector<std::string> tokens_;  // code -> token
  std::string missing_token_;
};

struct TableFiles {
  std::string device_train;
  std::string device_test;
  std::string cookies;
  std::string ip_observations;
  std::string ip_aggregates;
  std::string properties;
};

// Conventional file names under a world directory.
TableFiles world_tables(const std::string& dir);

struct IngestOptions {
  std::string handle_sentinel = "-1";
  std::string dictionary_file;  // optional: pre-load so two worlds encode identically
};

// Immutable world: records, per-owner observation lists and every inverted
// index the blocking and feature modules need. Construction is single
// threaded; afterwards the catalog is read-only and safe to share.
class Catalog {
 public:
  std::vector<DeviceRecord> devices;
  std::vector<CookieRecord> cookies;

  // interned ip universe; one aggregate per ip (zero-filled when the
  // aggregate table had no row for it)
  std::vector<std::string> ip_tokens;
  std::vector<IpAggregate> ip_aggregates;
  std::vector<uint8_t> ip_aggregate_synthesized;

  // observations per owner, sorted by ip index, deduplicated
  std::vector<std::vector<IpObservation>> device_ips;
  std::vector<std::vector<IpObservation>> cookie_ips;
  std::vector<std::vector<PropertyObservation>> device_props;
  std::vector<std::vector<PropertyObservation>> cookie_props;

  // known handles only
  std::vector<std::string> handle_tokens;
  std::vector<std::vector<int>> handle_devices;  // sorted by device id
  std::vector<std::vector<int>> handle_cookies;  // sorted by cookie id

  // ip -> owners, sorted by owner id
  std::vector<std::vector<int>> ip_devices;
  std::vector<std::vector<int>> ip_cookies;

  std::unordered_map<std::string, int> device_by_id;
  std::unordered_map<std::string, int> cookie_by_id;
  std::unordered_map<std::string, int> ip_by_token;
  std::unordered_map<std::string, int> handle_by_token;

  // lexicographic rank of each id; all "sorted by id" orderings use these
  std::vector<int> device_rank;
  std::vector<int> cookie_rank;

  Interner dictionary;
  std::string handle_sentinel = "-1";
  uint64_t content_hash = 0;

  int n_devices() const { return static_cast<int>(devices.size()); }
  int n_cookies() const { return static_cast<int>(cookies.size()); }
  int n_ips() const { return static_cast<int>(ip_tokens.size()); }

  int device_degree(int ip) const { return static_cast<int>(ip_devices[ip].size()); }
  int cookie_degree(int ip) const { return static_cast<int>(ip_cookies[ip].size()); }

  int device_index(const std::string& id) const;   // throws on unknown id
  int cookie_index(const std::string& id) const;

  bool device_id_less(int a, int b) const { return device_rank[a] < device_rank[b]; }
  bool cookie_id_less(int a, int b) const { return cookie_rank[a] < cookie_rank[b]; }

  // rebuild inverted indexes, ranks and the content hash from the record and
  // observation state; used after ingestion and after ip propagation
  void rebuild_indexes();
};

Catalog ingest(const TableFiles& files, const IngestOptions& options = {});

// Same-handle ip propagation over cookie pairs: every cookie acquires copies
// of the observations its handle-mates have on ips it lacks. When several
// mates hold the same ip, the one with the smallest cookie id donates.
// Idempotent; indexes and degrees are rebuilt before returning.
Catalog propagate_same_handle_ips(Catalog catalog);

extern const std::vector<std::string> kDeviceHeader;
extern const std::vector<std::string> kCookieHeader;
extern const std::vector<std::string> kIpObservationHeader;
extern const std::vector<std::string> kIpAggregateHeader;
extern const std::vector<std::string> kPropertyHeader;

}  // namespace xdm
