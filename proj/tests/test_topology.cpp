// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>

#include "hetplan/errors.hpp"
#include "hetplan/topology.hpp"
#include "test_util.hpp"

using namespace hetplan;

namespace {

const char* kSingleA100 = R"({
  "devices": [{"id": "a100-00", "gpu_model": "A100", "comp_tflops": 312,
               "mem_gb": 40, "hbm_gbps": 2039, "intra_node_gbps": 600,
               "node": "n0", "region": "local"}]
})";

}  // namespace

TEST_CASE("topology loading applies the documented unit conversions") {
  const auto topo = parse_topology_json(kSingleA100);
  REQUIRE(topo.size() == 1);
  const Device& d = topo.device(0);
  CHECK(d.comp() == 3.12e14);
  CHECK(d.mem() == 4.0e10);
  CHECK(d.hbm() == 2.039e12);
  CHECK(d.intra_node_bw() == 6.0e11);

  const auto l4 = parse_topology_json(R"({
    "devices": [{"id": "l4-00", "gpu_model": "L4", "comp_tflops": 121,
                 "mem_gb": 24, "hbm_gbps": 300, "intra_node_gbps": 64,
                 "node": "n0", "region": "local"}]})");
  CHECK(l4.device(0).comp() == 1.21e14);
  CHECK(l4.device(0).mem() == 2.4e10);
}

TEST_CASE("topology schema violations are rejected") {
  CHECK_THROWS_AS(parse_topology_json(R"({"devices": []})"), InputError);
  CHECK_THROWS_AS(parse_topology_json(R"({"devices": [{"id": "x"}]})"),
                  InputError);
  // non-positive attribute
  CHECK_THROWS_AS(parse_topology_json(R"({
    "devices": [{"id": "a", "gpu_model": "A100", "comp_tflops": 0,
                 "mem_gb": 40, "hbm_gbps": 2039, "intra_node_gbps": 600,
                 "node": "n0", "region": "local"}]})"),
                  InputError);
  // two regions without a link rule
  std::vector<Device> devs(2);
  for (int i = 0; i < 2; ++i) {
    devs[i].id = "d" + std::to_string(i);
    devs[i].gpu_model = "A100";
    devs[i].comp_tflops = 312;
    devs[i].mem_gb = 40;
    devs[i].hbm_gbps = 2039;
    devs[i].intra_node_gbps = 600;
    devs[i].node = "n" + std::to_string(i);
    devs[i].region = "r" + std::to_string(i);
  }
  CHECK_THROWS_AS(DeviceTopology::make(devs, {}, {}), InputError);
}

TEST_CASE("effective link resolution: self, intra-node, scenario links") {
  ScenarioOptions opts;
  opts.seed = 7;
  const auto s2 = generate_scenario(2, opts);
  REQUIRE(s2.size() == 64);

  // self link carries no transfer cost
  const Link self = s2.effective_link("a100-00", "a100-00");
  CHECK(self.latency_s == 0.0);
  CHECK(std::isinf(self.bandwidth_bps));

  // Ohio <-> Virginia: 10 ms, 5 Gbps
  const Link cross = s2.effective_link("a100-00", "l40s-00");
  CHECK(cross.latency_s == 0.010);
  CHECK(cross.bandwidth_bps == 6.25e8);

  // links involving edge GPUs cap at 1 Gbps
  CHECK(s2.effective_link("a100-00", "l4-00").bandwidth_bps == 1.25e8);
  CHECK(s2.effective_link("a100-00", "l4-00").latency_s == 0.010);
  CHECK(s2.effective_link("l40s-00", "l4-00").bandwidth_bps == 1.25e8);

  // same-node pair resolves to the min intra-node bandwidth
  const auto s1 = generate_scenario(1, opts);
  const Link intra = s1.effective_link("a100-00", "a100-01");
  CHECK(intra.bandwidth_bps == 6.0e11);
  CHECK(intra.latency_s == kIntraNodeLatencyS);

  CHECK_THROWS_AS(s1.effective_link("a100-00", "nope"), InputError);
}

TEST_CASE("scenario 2 with an empty edge subset keeps plain region links") {
  ScenarioOptions opts;
  opts.seed = 7;
  opts.edge_models.clear();
  const auto topo = generate_scenario(2, opts);
  // A100 (ohio) <-> L4 (virginia, no longer edge)
  const Link l = topo.effective_link("a100-00", "l4-00");
  CHECK(l.latency_s == 0.010);
  CHECK(l.bandwidth_bps == 6.25e8);
}

TEST_CASE("scenarios 3 and 4 sample links within their stated ranges") {
  ScenarioOptions opts;
  opts.seed = 7;
  const auto s3 = generate_scenario(3, opts);
  int cross_checked = 0;
  for (int a = 0; a < s3.size(); ++a) {
    for (int b = a + 1; b < s3.size(); ++b) {
      if (s3.device(a).region != s3.device(b).region) {
        const Link& l = s3.link(a, b);
        CHECK(l.latency_s >= 0.005);
        CHECK(l.latency_s <= 0.030);
        CHECK(l.bandwidth_bps >= 2.375e8);
        CHECK(l.bandwidth_bps <= 6.25e8);
        ++cross_checked;
      }
    }
  }
  CHECK(cross_checked > 0);

  const auto s4 = generate_scenario(4, opts);
  for (int a = 0; a < s4.size(); ++a) {
    for (int b = a + 1; b < s4.size(); ++b) {
      if (s4.device(a).region != s4.device(b).region) {
        const Link& l = s4.link(a, b);
        CHECK(l.latency_s >= 0.005);
        CHECK(l.latency_s <= 0.060);
        CHECK(l.bandwidth_bps >= 1.125e8);
        CHECK(l.bandwidth_bps <= 6.25e8);
      }
    }
  }

  // scenario 4 reaches below scenario 3's bandwidth floor by construction
  CHECK(1.125e8 < 2.375e8);

  CHECK_THROWS_AS(generate_scenario(9, opts), UsageError);
  ScenarioOptions single;
  single.inventory = {{1, "A100"}};
  single.seed = 0;
  const auto s1 = generate_scenario(1, single);
  CHECK(s1.size() == 1);
  CHECK(s1.region_links().empty());
}

TEST_CASE("links are symmetric") {
  Rng rng(3);
  ScenarioOptions opts;
  opts.seed = 9;
  const auto topo = generate_scenario(3, opts);
  for (int i = 0; i < 200; ++i) {
    const int a = static_cast<int>(rng.bounded(topo.size()));
    const int b = static_cast<int>(rng.bounded(topo.size()));
    const Link& ab = topo.link(a, b);
    const Link& ba = topo.link(b, a);
    CHECK(ab.latency_s == ba.latency_s);
    CHECK(ab.bandwidth_bps == ba.bandwidth_bps);
  }
}

TEST_CASE("topology serialization round-trips every stored attribute") {
  Rng rng(17);
  for (int round = 0; round < 25; ++round) {
    const auto topo = testutil::random_topology(rng);
    const auto back = parse_topology_json(serialize_topology(topo));
    REQUIRE(back.size() == topo.size());
    for (int i = 0; i < topo.size(); ++i) {
      const Device& a = topo.device(i);
      const Device& b = back.device(i);
      CHECK(a.id == b.id);
      CHECK(a.gpu_model == b.gpu_model);
      CHECK(a.comp_tflops == b.comp_tflops);
      CHECK(a.mem_gb == b.mem_gb);
      CHECK(a.hbm_gbps == b.hbm_gbps);
      CHECK(a.intra_node_gbps == b.intra_node_gbps);
      CHECK(a.node == b.node);
      CHECK(a.region == b.region);
    }
    REQUIRE(back.region_links().size() == topo.region_links().size());
    for (std::size_t i = 0; i < topo.region_links().size(); ++i) {
      CHECK(topo.region_links()[i].latency_ms ==
            back.region_links()[i].latency_ms);
      CHECK(topo.region_links()[i].bandwidth_gbps ==
            back.region_links()[i].bandwidth_gbps);
    }
    CHECK(topo.defaults().intra_region_latency_ms ==
          back.defaults().intra_region_latency_ms);
    CHECK(topo.defaults().intra_region_bandwidth_gbps ==
          back.defaults().intra_region_bandwidth_gbps);
  }
}

TEST_CASE("inventory parsing") {
  const auto items = parse_inventory("24xA100,24xL40S,16xL4");
  REQUIRE(items.size() == 3);
  CHECK(items[0].count == 24);
  CHECK(items[0].gpu_model == "A100");
  CHECK(items[2].gpu_model == "L4");
  CHECK_THROWS_AS(parse_inventory("A100"), UsageError);
  CHECK_THROWS_AS(parse_inventory(""), UsageError);
  CHECK_THROWS_AS(generate_scenario(
                      1, ScenarioOptions{{{4, "H100"}}, 0, 8, {}}),
                  InputError);
}
