// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <set>

#include "hetplan/errors.hpp"
#include "hetplan/search.hpp"
#include "test_util.hpp"

using namespace hetplan;

namespace {

SearchKnobs quiet_knobs(std::int64_t budget, std::uint64_t seed) {
  SearchKnobs k;
  k.budget = budget;
  k.seed = seed;
  k.balance_data = false;
  k.balance_layers = false;
  return k;
}

DeviceTopology two_regions_four_devices() {
  std::vector<Device> devs(4);
  for (int i = 0; i < 4; ++i) {
    devs[i].id = "dev-" + std::to_string(i);
    devs[i].gpu_model = "synthetic";
    devs[i].comp_tflops = 10;
    devs[i].mem_gb = 640;
    devs[i].hbm_gbps = 1000;
    devs[i].intra_node_gbps = 600;
    devs[i].region = i < 2 ? "east" : "west";
    devs[i].node = devs[i].region + "-n" + std::to_string(i % 2);
  }
  return DeviceTopology::make(
      devs, {{"east", "west", 50.0, 1.0}},
      TopologyDefaults{0.05, 100.0});
}

}  // namespace

TEST_CASE("level-1/2/4 enumerations match the counting identities") {
  const auto grpo = testutil::full_workflow(RlAlgorithm::kGrpo, RunMode::kSync,
                                            testutil::tiny_model(),
                                            testutil::tiny_batch());
  CHECK(enumerate_task_groupings(grpo).size() == 15);
  const auto ppo = testutil::full_workflow(RlAlgorithm::kPpo, RunMode::kSync,
                                           testutil::tiny_model(),
                                           testutil::tiny_batch());
  CHECK(enumerate_task_groupings(ppo).size() == 203);

  CHECK(enumerate_gpu_groupings(4, 2).size() == 3);
  CHECK(enumerate_gpu_groupings(7, 1).size() == 1);
  CHECK(enumerate_gpu_groupings(4, 4).size() == 1);
  CHECK_THROWS_AS(enumerate_gpu_groupings(2, 3), InputError);

  const auto m = testutil::tiny_model(4, 8, 8);
  const auto b = testutil::tiny_batch();
  auto layouts = enumerate_layouts(4, m, b, 4);
  REQUIRE(layouts.size() == 6);
  auto triple = [](const ParallelLayout& l) {
    return std::vector<int>{l.dp, l.pp, l.tp};
  };
  CHECK(triple(layouts[0]) == std::vector<int>{1, 1, 4});
  CHECK(triple(layouts[1]) == std::vector<int>{1, 2, 2});
  CHECK(triple(layouts[2]) == std::vector<int>{1, 4, 1});
  CHECK(triple(layouts[3]) == std::vector<int>{2, 1, 2});
  CHECK(triple(layouts[4]) == std::vector<int>{2, 2, 1});
  CHECK(triple(layouts[5]) == std::vector<int>{4, 1, 1});

  CHECK(enumerate_layouts(1, m, b, 8).size() == 1);

  // pp filter: nl = 2 excludes (1,4,1)
  const auto m2 = testutil::tiny_model(4, 8, 2);
  for (const auto& l : enumerate_layouts(4, m2, b, 4)) {
    CHECK(l.pp <= 2);
  }
  // tp cap
  for (const auto& l : enumerate_layouts(4, m, b, 1)) {
    CHECK(l.tp == 1);
  }
}

TEST_CASE("medium assignment honors counts and locality bias") {
  const auto topo = testutil::uniform_topology(4, 1e13, 1e12, 64.0, 2);
  GpuGrouping gg{{2, 2}};
  Rng rng(9);
  for (int round = 0; round < 20; ++round) {
    const auto groups = random_medium_assignment(gg, topo, 1.0, rng);
    REQUIRE(groups.size() == 2);
    for (const auto& g : groups) {
      REQUIRE(g.size() == 2);
      // bias 1.0 on 2-GPU nodes: every group is exactly one node
      CHECK(topo.device(topo.device_index(g[0])).node ==
            topo.device(topo.device_index(g[1])).node);
    }
  }
  // one group takes the whole pool
  const auto whole = random_medium_assignment(GpuGrouping{{4}}, topo, 1.0, rng);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].size() == 4);

  // bias 0: still a valid partition, deterministic under the seed
  Rng r1(5), r2(5);
  const auto a = random_medium_assignment(gg, topo, 0.0, r1);
  const auto b = random_medium_assignment(gg, topo, 0.0, r2);
  CHECK(a == b);
  std::set<std::string> all;
  for (const auto& g : a) {
    for (const auto& id : g) {
      CHECK(all.insert(id).second);
    }
  }
  CHECK(all.size() == 4);
}

TEST_CASE("fine assignment prefers co-resident tensor shards") {
  const auto topo = testutil::uniform_topology(4, 1e13, 1e12, 64.0, 2);
  const auto layout = make_layout(1, 2, 2, 4);
  const std::vector<std::string> devs{"dev-0", "dev-1", "dev-2", "dev-3"};
  Rng rng(3);
  for (int round = 0; round < 10; ++round) {
    const auto flat = random_fine_assignment(devs, layout, topo, rng);
    REQUIRE(flat.size() == 4);
    for (int j = 0; j < 2; ++j) {
      const auto& a = flat[layout.flat(0, j, 0)];
      const auto& b = flat[layout.flat(0, j, 1)];
      CHECK(topo.device(topo.device_index(a)).node ==
            topo.device(topo.device_index(b)).node);
    }
  }
  CHECK_THROWS_AS(random_fine_assignment({"dev-0", "dev-1", "dev-2"},
                                         make_layout(2, 2, 1, 4), topo, rng),
                  InputError);
  // single device: forced bijection
  const auto one = random_fine_assignment({"dev-0"}, make_layout(1, 1, 1, 4),
                                          topo, rng);
  CHECK(one == std::vector<std::string>{"dev-0"});
}

TEST_CASE("ga search: budget 1 on a single-point space returns the only plan") {
  const auto wf = testutil::subset_workflow({2}, testutil::tiny_model(4, 8, 2),
                                            testutil::tiny_batch());
  const auto topo = testutil::uniform_topology(1, 1e13, 1e12, 64.0, 1);
  TaskGrouping tg{{{2}}};
  GpuGrouping gg{{1}};
  const auto res = ga_search(tg, gg, wf, topo, 1, Rng(1), quiet_knobs(1, 1));
  REQUIRE(res.plan.has_value());
  CHECK(res.evals == 1);
  CHECK(res.cost == end_to_end_cost(*res.plan, wf, topo).end_to_end_s);
}

TEST_CASE("ga search finds the brute-force optimum on a two-task toy") {
  // two inference tasks of different weight; one device is 2x faster
  std::map<int, ModelSpec> models{{2, testutil::tiny_model(8, 16, 2)},
                                  {3, testutil::tiny_model(8, 16, 8)}};
  const auto wf = testutil::subset_workflow_models(
      models, testutil::tiny_batch(4, 1, 16, 0, 1), RunMode::kSync, 0.0);
  std::vector<Device> devs(2);
  for (int i = 0; i < 2; ++i) {
    devs[i].id = "dev-" + std::to_string(i);
    devs[i].gpu_model = i == 0 ? "fast" : "slow";
    devs[i].comp_tflops = i == 0 ? 20.0 : 10.0;
    devs[i].mem_gb = 640;
    devs[i].hbm_gbps = 1000;
    devs[i].intra_node_gbps = 600;
    devs[i].node = "n" + std::to_string(i);
    devs[i].region = "r0";
  }
  const auto topo = DeviceTopology::make(devs, {}, {});

  // brute force over the arm's two assignments
  auto dedicated = [&](const std::string& for2, const std::string& for3) {
    Plan p;
    p.task_grouping.groups = {{2}, {3}};
    p.gpu_grouping.counts = {1, 1};
    p.layouts[2] = make_layout(1, 1, 1, 2);
    p.layouts[3] = make_layout(1, 1, 1, 8);
    p.assignment[2] = {for2};
    p.assignment[3] = {for3};
    return end_to_end_cost(p, wf, topo).end_to_end_s;
  };
  const double arm_best = std::min(dedicated("dev-0", "dev-1"),
                                   dedicated("dev-1", "dev-0"));

  TaskGrouping tg{{{2}, {3}}};
  GpuGrouping gg{{1, 1}};
  const auto res = ga_search(tg, gg, wf, topo, 8, Rng(7), quiet_knobs(8, 7));
  REQUIRE(res.plan.has_value());
  CHECK(res.evals == 8);  // the slice is consumed exactly
  CHECK(res.cost == doctest::Approx(arm_best).epsilon(1e-12));
  // the heavy task ends up on the fast GPU
  CHECK(res.plan->assignment.at(3) == std::vector<std::string>{"dev-0"});

  // the full search over all groupings can only do at least as well
  const auto ex = exhaustive_search(wf, topo, quiet_knobs(0, 0));
  REQUIRE(ex.plan.has_value());
  CHECK(ex.cost <= arm_best + 1e-15);
}

TEST_CASE("level-5 swaps pull dp peers into one region") {
  const auto wf = testutil::subset_workflow({6}, testutil::tiny_model(8, 16, 2),
                                            testutil::tiny_batch(8, 1, 16, 0, 1));
  const auto topo = two_regions_four_devices();
  const auto ex = exhaustive_search(wf, topo, quiet_knobs(0, 0));
  REQUIRE(ex.plan.has_value());
  TaskGrouping tg{{{6}}};
  GpuGrouping gg{{4}};
  const auto res = ga_search(tg, gg, wf, topo, 64, Rng(11), quiet_knobs(64, 11));
  REQUIRE(res.plan.has_value());
  CHECK(res.cost == doctest::Approx(ex.cost).epsilon(1e-12));
}

TEST_CASE("nested sha budget arithmetic matches the hand-traced values") {
  const auto wf = testutil::full_workflow(RlAlgorithm::kGrpo, RunMode::kSync,
                                          testutil::tiny_model(4, 8, 2),
                                          testutil::tiny_batch());
  const auto topo = testutil::uniform_topology(4, 1e13, 1e12, 64.0, 2);
  const auto all_tgs = enumerate_task_groupings(wf);

  // |TG| = 4, B = 64 -> b_0 = floor(64 / (4 * 2)) = 8
  std::vector<TaskGrouping> four(all_tgs.begin(), all_tgs.begin() + 4);
  auto res = nested_sha_search(wf, topo, quiet_knobs(64, 1), &four);
  REQUIRE(!res.state.b_m.empty());
  CHECK(res.state.b_m[0] == 8);
  CHECK(res.state.consumed <= 64);

  // |TG| = 8, B = 128 -> b_0 = floor(128 / (8 * 3)) = 5
  std::vector<TaskGrouping> eight(all_tgs.begin(), all_tgs.begin() + 8);
  res = nested_sha_search(wf, topo, quiet_knobs(128, 1), &eight);
  CHECK(res.state.b_m[0] == 5);
  CHECK(res.state.consumed <= 128);
}

TEST_CASE("singleton arms degenerate to a plain ga run") {
  const auto wf = testutil::subset_workflow({2}, testutil::tiny_model(4, 8, 2),
                                            testutil::tiny_batch());
  const auto topo = testutil::uniform_topology(1, 1e13, 1e12, 64.0, 1);
  const auto res = nested_sha_search(wf, topo, quiet_knobs(5, 3));
  CHECK(res.state.b_m == std::vector<std::int64_t>{5});
  CHECK(res.state.consumed == 5);
  REQUIRE(res.plan.has_value());
  CHECK(res.state.task_groupings == 1);
}

TEST_CASE("search accounting, halving shape and determinism") {
  const auto wf = testutil::full_workflow(RlAlgorithm::kGrpo, RunMode::kSync,
                                          testutil::tiny_model(4, 8, 4),
                                          testutil::tiny_batch(8, 1, 8, 4, 1));
  const auto topo = testutil::uniform_topology(4, 1e13, 1e12, 64.0, 2);
  const auto knobs = quiet_knobs(60, 42);
  const auto res = nested_sha_search(wf, topo, knobs);

  CHECK(res.state.consumed <= knobs.budget);
  std::int64_t arm_total = 0;
  for (const auto& arm : res.state.arms) {
    arm_total += arm.evals;
  }
  CHECK(arm_total == res.state.consumed);

  // incumbent trace is strictly decreasing in cost, non-decreasing in evals
  for (std::size_t i = 1; i < res.state.trace.size(); ++i) {
    CHECK(res.state.trace[i].second < res.state.trace[i - 1].second);
    CHECK(res.state.trace[i].first >= res.state.trace[i - 1].first);
  }

  for (const auto& ev : res.state.halvings) {
    CHECK(ev.after == (ev.before + 1) / 2);
    CHECK(ev.survivor_worst <= ev.eliminated_best);
  }

  // determinism: identical inputs, byte-identical plan
  const auto res2 = nested_sha_search(wf, topo, knobs);
  REQUIRE(res.plan.has_value());
  REQUIRE(res2.plan.has_value());
  CHECK(serialize_plan(*res.plan, &res.breakdown) ==
        serialize_plan(*res2.plan, &res2.breakdown));
  CHECK(res.plan->provenance.seed == 42);
  CHECK(res.plan->provenance.budget == res.state.consumed);

  CHECK_THROWS_AS(nested_sha_search(wf, topo, quiet_knobs(0, 1)), UsageError);
}

TEST_CASE("exhaustive search enumerates tiny spaces exactly") {
  // one task, one device: a single plan
  const auto wf1 = testutil::subset_workflow({2}, testutil::tiny_model(4, 8, 2),
                                             testutil::tiny_batch());
  const auto topo1 = testutil::uniform_topology(1, 1e13, 1e12, 64.0, 1);
  const auto ex1 = exhaustive_search(wf1, topo1, quiet_knobs(0, 0));
  CHECK(ex1.explored == 1);
  REQUIRE(ex1.plan.has_value());

  // one training task (nl=2) on two identical same-node devices:
  // layouts (1,1,2), (1,2,1), (2,1,1); assignments collapse by symmetry
  const auto wf2 = testutil::subset_workflow({6}, testutil::tiny_model(4, 8, 2),
                                             testutil::tiny_batch());
  const auto topo2 = testutil::uniform_topology(2, 1e13, 1e12, 64.0, 2);
  const auto ex2 = exhaustive_search(wf2, topo2, quiet_knobs(0, 0));
  CHECK(ex2.explored == 3);
  REQUIRE(ex2.plan.has_value());
  // cross-check the minimum against direct evaluation of each layout
  double manual = std::numeric_limits<double>::infinity();
  for (const auto& l : enumerate_layouts(2, testutil::tiny_model(4, 8, 2),
                                         wf2.batch, 2)) {
    Plan p;
    p.task_grouping.groups = {{6}};
    p.gpu_grouping.counts = {2};
    p.layouts[6] = l;
    p.assignment[6] = {"dev-0", "dev-1"};
    manual = std::min(manual, end_to_end_cost(p, wf2, topo2).end_to_end_s);
  }
  CHECK(ex2.cost == doctest::Approx(manual).epsilon(1e-12));

  // guard: three tasks on sixteen devices blows the cap
  const auto wf3 = testutil::subset_workflow(
      {1, 2, 6}, testutil::tiny_model(4, 8, 2), testutil::tiny_batch());
  const auto topo3 = testutil::uniform_topology(16, 1e13, 1e12, 64.0, 8);
  CHECK_THROWS_AS(exhaustive_search(wf3, topo3, quiet_knobs(0, 0)),
                  InputError);
}

TEST_CASE("sha with full budget matches the exhaustive optimum") {
  std::map<int, ModelSpec> models{{2, testutil::tiny_model(8, 16, 2)},
                                  {6, testutil::tiny_model(8, 16, 4)}};
  const auto wf = testutil::subset_workflow_models(
      models, testutil::tiny_batch(4, 1, 8, 0, 1), RunMode::kSync, 0.0);
  const auto topo = two_regions_four_devices();
  const auto ex = exhaustive_search(wf, topo, quiet_knobs(0, 0));
  REQUIRE(ex.plan.has_value());
  auto knobs = quiet_knobs(4 * ex.explored, 5);
  const auto res = nested_sha_search(wf, topo, knobs);
  REQUIRE(res.plan.has_value());
  CHECK(res.breakdown.end_to_end_s ==
        doctest::Approx(ex.cost).epsilon(1e-12));
}

TEST_CASE("knobs parsing applies defaults and validates") {
  const auto k = parse_knobs_json(R"({"budget": 123, "seed": 9,
    "population": 8, "locality_bias": 0.5, "quantize_gpu_counts": 2,
    "level1_filter": "adjacent", "balance_data": false})");
  CHECK(k.budget == 123);
  CHECK(k.seed == 9);
  CHECK(k.seed_set);
  CHECK(k.population == 8);
  CHECK(k.quantize_gpu_counts == 2);
  CHECK(k.level1_filter == "adjacent");
  CHECK(!k.balance_data);
  CHECK(k.balance_layers);  // untouched default

  CHECK(!parse_knobs_json("{}").seed_set);
  CHECK_THROWS_AS(parse_knobs_json(R"({"locality_bias": 2.0})"), InputError);
  CHECK_THROWS_AS(parse_knobs_json(R"({"level1_filter": "on"})"), InputError);
  CHECK_THROWS_AS(parse_knobs_json("nope"), InputError);
}

TEST_CASE("adjacent level-1 filter keeps dependency-coupled groups only") {
  const auto wf = testutil::full_workflow(RlAlgorithm::kGrpo, RunMode::kSync,
                                          testutil::tiny_model(),
                                          testutil::tiny_batch());
  std::function<bool(const TaskGrouping&)> keep_all;
  const auto all = enumerate_task_groupings(wf, keep_all);
  const auto filtered = enumerate_task_groupings(wf, [&](const TaskGrouping& tg) {
    for (const auto& group : tg.groups) {
      if (group.size() < 2) {
        continue;
      }
      bool adj = false;
      for (int a : group) {
        for (int b : group) {
          adj |= wf.dep_edges.count({a, b}) != 0;
        }
      }
      if (!adj) {
        return false;
      }
    }
    return true;
  });
  CHECK(filtered.size() < all.size());
  // {2,3} are independent inferences: grouping {{1},{2,3},{6}} must be gone
  for (const auto& tg : filtered) {
    for (const auto& g : tg.groups) {
      CHECK(g != std::vector<int>{2, 3});
    }
  }
}
