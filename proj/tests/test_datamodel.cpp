#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "helpers.hpp"
#include "xdmatch/candidates.hpp"
#include "xdmatch/catalog.hpp"
#include "xdmatch/features.hpp"

using namespace xdm;
using namespace testutil;

namespace {

Catalog tiny_catalog(const std::filesystem::path& dir, const MiniWorld& world) {
  return ingest(world.write(dir));
}

}  // namespace

TEST_CASE("sentinel handle marks unknown") {
  MiniWorld w;
  w.dev_train = {dev_row("h1", "d1"), dev_row("-1", "d2")};
  w.cookies = {cook_row("-1", "c1")};
  Catalog cat = tiny_catalog(fresh_dir("dm_sentinel"), w);
  CHECK(cat.devices[cat.device_index("d1")].handle.known);
  CHECK(cat.devices[cat.device_index("d1")].handle.value == "h1");
  CHECK_FALSE(cat.devices[cat.device_index("d2")].handle.known);
  CHECK(cat.devices[cat.device_index("d2")].handle_idx == -1);
  CHECK_FALSE(cat.cookies[0].handle.known);
}

TEST_CASE("configurable handle sentinel") {
  MiniWorld w;
  w.dev_train = {dev_row("unknown", "d1"), dev_row("-1", "d2")};
  w.cookies = {cook_row("h2", "c1")};
  IngestOptions opts;
  opts.handle_sentinel = "unknown";
  Catalog cat = ingest(w.write(fresh_dir("dm_sentinel2")), opts);
  CHECK_FALSE(cat.devices[cat.device_index("d1")].handle.known);
  // "-1" is an ordinary handle token under this sentinel
  CHECK(cat.devices[cat.device_index("d2")].handle.known);
}

TEST_CASE("cookie with three ip observations lands in three indexes") {
  MiniWorld w;
  w.dev_train = {dev_row("h1", "d1")};
  w.cookies = {cook_row("h1", "c1")};
  w.ips = {ip_row("c1", false, "ip1"), ip_row("c1", false, "ip2"), ip_row("c1", false, "ip3")};
  w.aggs = {agg_row("ip1"), agg_row("ip2"), agg_row("ip3")};
  Catalog cat = tiny_catalog(fresh_dir("dm_three"), w);
  const int c1 = cat.cookie_index("c1");
  CHECK(cat.cookie_ips[c1].size() == 3);
  int memberships = 0;
  for (int ip = 0; ip < cat.n_ips(); ++ip) {
    for (int c : cat.ip_cookies[ip]) {
      if (c == c1) ++memberships;
    }
  }
  CHECK(memberships == 3);
}

TEST_CASE("duplicate (owner, ip) rows collapse to the first") {
  MiniWorld w;
  w.dev_train = {dev_row("h1", "d1")};
  w.cookies = {cook_row("h1", "c1")};
  w.ips = {ip_row("c1", false, "ip1", 5, "1,2,3,4,5"), ip_row("c1", false, "ip1", 9, "9,9,9,9,9")};
  w.aggs = {agg_row("ip1", 0, 14)};
  Catalog cat = tiny_catalog(fresh_dir("dm_dedup"), w);
  const int c1 = cat.cookie_index("c1");
  REQUIRE(cat.cookie_ips[c1].size() == 1);
  CHECK(cat.cookie_ips[c1][0].freq_count == 5);
  CHECK(cat.cookie_ips[c1][0].counts[0] == 1);
}

TEST_CASE("ip missing from the aggregate table synthesizes zeros") {
  MiniWorld w;
  w.dev_train = {dev_row("h1", "d1")};
  w.cookies = {cook_row("h1", "c1")};
  w.ips = {ip_row("d1", true, "ip1", 4, "1,1,1,1,1"), ip_row("c1", false, "ip1", 2, "2,0,0,0,0")};
  // no aggregate row at all
  Catalog cat = tiny_catalog(fresh_dir("dm_zeroagg"), w);
  const int ip1 = cat.ip_by_token.at("ip1");
  CHECK(cat.ip_aggregate_synthesized[ip1] == 1);
  CHECK(cat.ip_aggregates[ip1].total_freq == 0);

  // the aggregate-vector slots evaluate to zero for a pair meeting on that ip
  LabeledHandles labeled = training_handles(cat);
  const int d1 = cat.device_index("d1"), c1 = cat.cookie_index("c1");
  PairContext ctx = build_context(cat, d1, c1, labeled);
  REQUIRE(ctx.inter.size() == 1);
  FeatureRow row = extract_features(cat, d1, c1, ctx);
  for (int s = 28; s <= 37; ++s) CHECK(row.slot(s) == 0.0);
  // the joint-behavior slots still see the observations
  CHECK(row.slot(38) == 4.0);
  CHECK(row.slot(50) == 2.0);
}

TEST_CASE("malformed rows name file, line and column") {
  MiniWorld w;
  w.dev_train = {dev_row("h1", "d1"), "h2,d2,t0,os0,cc0,1,a1,b1,1,notanumber,3"};
  w.cookies = {cook_row("h1", "c1")};
  auto dir = fresh_dir("dm_badrow");
  auto files = w.write(dir);
  try {
    ingest(files);
    FAIL("expected error");
  } catch (const std::exception& e) {
    std::string msg = e.what();
    CHECK(msg.find("dev_train.csv") != std::string::npos);
    CHECK(msg.find(":3:") != std::string::npos);  // line 3 (header + 2 rows)
    CHECK(msg.find("10") != std::string::npos);   // column 10
  }
}

TEST_CASE("duplicate ids are rejected") {
  {
    MiniWorld w;
    w.dev_train = {dev_row("h1", "d1"), dev_row("h2", "d1")};
    w.cookies = {cook_row("h1", "c1")};
    CHECK_THROWS_WITH_AS(ingest(w.write(fresh_dir("dm_dupdev"))),
                         doctest::Contains("duplicate device_id"), std::runtime_error);
  }
  {
    MiniWorld w;
    w.dev_train = {dev_row("h1", "d1")};
    w.cookies = {cook_row("h1", "c1"), cook_row("h2", "c1")};
    CHECK_THROWS_WITH_AS(ingest(w.write(fresh_dir("dm_dupcook"))),
                         doctest::Contains("duplicate cookie_id"), std::runtime_error);
  }
}

TEST_CASE("missing numerics and categoricals take the reserved code") {
  MiniWorld w;
  w.dev_train = {"h1,d1,-1,os0,cc0,-1,a1,b1,-1,,3"};
  w.cookies = {cook_row("h1", "c1")};
  Catalog cat = tiny_catalog(fresh_dir("dm_missing"), w);
  const DeviceRecord& d = cat.devices[cat.device_index("d1")];
  CHECK(d.device_type == -1.0);
  CHECK(d.anon_c0 == -1.0);
  CHECK(d.anon_5 == -1.0);
  CHECK(d.anon_6 == -1.0);
  CHECK(d.anon_7 == 3.0);
}

TEST_CASE("interner: dense first-seen codes and round trip") {
  Interner in;
  CHECK(in.code("alpha") == 0.0);
  CHECK(in.code("beta") == 1.0);
  CHECK(in.code("alpha") == 0.0);
  CHECK(in.code("-1") == -1.0);
  auto dir = fresh_dir("dm_interner");
  in.save((dir / "dict.csv").string());
  Interner loaded;
  loaded.load((dir / "dict.csv").string());
  CHECK(loaded.code("beta") == 1.0);
  CHECK(loaded.code("alpha") == 0.0);
  CHECK(loaded.code("gamma") == 2.0);
  CHECK(loaded.lookup("nope") == std::nullopt);
}

TEST_CASE("re-ingesting the same files is deterministic") {
  MiniWorld w;
  w.dev_train = {dev_row("h1", "d1"), dev_row("h2", "d2")};
  w.cookies = {cook_row("h1", "c1"), cook_row("h2", "c2")};
  w.ips = {ip_row("d1", true, "ip1"), ip_row("c1", false, "ip1"), ip_row("c2", false, "ip2")};
  w.aggs = {agg_row("ip1", 0, 2), agg_row("ip2")};
  auto dir = fresh_dir("dm_determ");
  auto files = w.write(dir);
  Catalog a = ingest(files);
  Catalog b = ingest(files);
  CHECK(a.content_hash == b.content_hash);
}

TEST_CASE("same-handle ip propagation copies payloads both ways") {
  MiniWorld w;
  w.dev_train = {dev_row("h1", "d1")};
  w.cookies = {cook_row("hA", "cA"), cook_row("hA", "cB")};
  w.ips = {ip_row("cA", false, "ip1", 5, "1,2,3,4,5"), ip_row("cB", false, "ip2", 7, "6,7,8,9,1")};
  w.aggs = {agg_row("ip1", 0, 5), agg_row("ip2", 0, 7)};
  Catalog cat = propagate_same_handle_ips(tiny_catalog(fresh_dir("dm_prop"), w));
  const int cA = cat.cookie_index("cA"), cB = cat.cookie_index("cB");
  REQUIRE(cat.cookie_ips[cA].size() == 2);
  REQUIRE(cat.cookie_ips[cB].size() == 2);
  const int ip1 = cat.ip_by_token.at("ip1"), ip2 = cat.ip_by_token.at("ip2");
  auto find_obs = [&](int cookie, int ip) -> const IpObservation& {
    for (const auto& o : cat.cookie_ips[cookie]) {
      if (o.ip == ip) return o;
    }
    FAIL("observation not found");
    static IpObservation dummy;
    return dummy;
  };
  // cB gained cA's ip1 observation unchanged
  CHECK(find_obs(cB, ip1).freq_count == 5);
  CHECK(find_obs(cB, ip1).counts[4] == 5);
  CHECK(find_obs(cA, ip2).freq_count == 7);
  // indexes and degrees rebuilt
  CHECK(cat.cookie_degree(ip1) == 2);
  CHECK(cat.cookie_degree(ip2) == 2);
}

TEST_CASE("propagation leaves unknown handles and shared ips alone") {
  MiniWorld w;
  w.dev_train = {dev_row("h1", "d1")};
  w.cookies = {cook_row("-1", "cA"), cook_row("-1", "cB"), cook_row("hX", "cC"), cook_row("hX", "cD")};
  w.ips = {ip_row("cA", false, "ip1"), ip_row("cB", false, "ip2"),
           ip_row("cC", false, "ip3", 2, "1,1,1,1,1"), ip_row("cD", false, "ip3", 9, "2,2,2,2,2")};
  w.aggs = {agg_row("ip1"), agg_row("ip2"), agg_row("ip3", 0, 11)};
  Catalog cat = propagate_same_handle_ips(tiny_catalog(fresh_dir("dm_prop_unknown"), w));
  // unknown-handle cookies never gain or donate
  CHECK(cat.cookie_ips[cat.cookie_index("cA")].size() == 1);
  CHECK(cat.cookie_ips[cat.cookie_index("cB")].size() == 1);
  // both mates already on ip3: counters stay distinct, nothing merged
  CHECK(cat.cookie_ips[cat.cookie_index("cC")][0].freq_count == 2);
  CHECK(cat.cookie_ips[cat.cookie_index("cD")][0].freq_count == 9);
}

TEST_CASE("three same-handle cookies on disjoint ips end with the union") {
  MiniWorld w;
  w.dev_train = {dev_row("h1", "d1")};
  w.cookies = {cook_row("hA", "c1"), cook_row("hA", "c2"), cook_row("hA", "c3")};
  w.ips = {ip_row("c1", false, "ipA"), ip_row("c2", false, "ipB"), ip_row("c3", false, "ipC")};
  w.aggs = {agg_row("ipA"), agg_row("ipB"), agg_row("ipC")};
  Catalog cat = propagate_same_handle_ips(tiny_catalog(fresh_dir("dm_prop3"), w));

  // oracle: the per-handle union of observed ips
  std::vector<int> expected;
  for (const char* t : {"ipA", "ipB", "ipC"}) expected.push_back(cat.ip_by_token.at(t));
  std::sort(expected.begin(), expected.end());
  for (const char* id : {"c1", "c2", "c3"}) {
    std::vector<int> got;
    for (const auto& o : cat.cookie_ips[cat.cookie_index(id)]) got.push_back(o.ip);
    CHECK(got == expected);
  }
}

TEST_CASE("propagation is idempotent") {
  MiniWorld w;
  w.dev_train = {dev_row("h1", "d1")};
  w.cookies = {cook_row("hA", "c1"), cook_row("hA", "c2"), cook_row("hB", "c3")};
  w.ips = {ip_row("c1", false, "ipA", 3, "1,0,2,0,1"), ip_row("c2", false, "ipB"),
           ip_row("c3", false, "ipA"), ip_row("d1", true, "ipA")};
  w.aggs = {agg_row("ipA", 1, 5), agg_row("ipB")};
  Catalog once = propagate_same_handle_ips(tiny_catalog(fresh_dir("dm_idem"), w));
  Catalog twice = propagate_same_handle_ips(once);
  CHECK(once.content_hash == twice.content_hash);
  REQUIRE(once.cookie_ips.size() == twice.cookie_ips.size());
  for (size_t c = 0; c < once.cookie_ips.size(); ++c) {
    REQUIRE(once.cookie_ips[c].size() == twice.cookie_ips[c].size());
  }
}

TEST_CASE("degree counts equal index sizes and memberships") {
  MiniWorld w;
  w.dev_train = {dev_row("h1", "d1"), dev_row("h2", "d2")};
  w.cookies = {cook_row("h1", "c1"), cook_row("-1", "c2")};
  w.ips = {ip_row("d1", true, "ip1"), ip_row("d2", true, "ip1"), ip_row("c1", false, "ip1"),
           ip_row("c2", false, "ip1"), ip_row("c2", false, "ip2")};
  w.aggs = {agg_row("ip1", 0, 4), agg_row("ip2")};
  Catalog cat = tiny_catalog(fresh_dir("dm_degree"), w);
  for (int ip = 0; ip < cat.n_ips(); ++ip) {
    int dev_members = 0, cook_members = 0;
    for (int d = 0; d < cat.n_devices(); ++d) {
      for (const auto& o : cat.device_ips[d]) dev_members += o.ip == ip;
    }
    for (int c = 0; c < cat.n_cookies(); ++c) {
      for (const auto& o : cat.cookie_ips[c]) cook_members += o.ip == ip;
    }
    CHECK(cat.device_degree(ip) == dev_members);
    CHECK(cat.cookie_degree(ip) == cook_members);
  }
  // unknown handles never enter handle indexes
  for (const auto& list : cat.handle_cookies) {
    for (int c : list) CHECK(cat.cookies[c].handle.known);
  }
}

TEST_CASE("ip rows referencing unknown owners are rejected") {
  MiniWorld w;
  w.dev_train = {dev_row("h1", "d1")};
  w.cookies = {cook_row("h1", "c1")};
  w.ips = {ip_row("ghost", true, "ip1")};
  w.aggs = {agg_row("ip1")};
  CHECK_THROWS_WITH_AS(ingest(w.write(fresh_dir("dm_ghost"))),
                       doctest::Contains("unknown device id"), std::runtime_error);
}
