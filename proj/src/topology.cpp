// SPDX-License-Identifier: Apache-2.0
#include "hetplan/topology.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "hetplan/errors.hpp"
#include "hetplan/rng.hpp"

namespace hetplan {

using json = nlohmann::json;

void Device::validate() const {
  if (id.empty()) {
    throw InputError("device id must be non-empty");
  }
  if (comp_tflops <= 0 || mem_gb <= 0 || hbm_gbps <= 0 ||
      intra_node_gbps <= 0) {
    throw InputError("device '" + id +
                     "' has a non-positive attribute (comp/mem/hbm/intra)");
  }
  if (node.empty() || region.empty()) {
    throw InputError("device '" + id + "' needs node and region labels");
  }
}

namespace {

std::pair<std::string, std::string> ordered_pair(const std::string& a,
                                                 const std::string& b) {
  return a <= b ? std::make_pair(a, b) : std::make_pair(b, a);
}

}  // namespace

DeviceTopology DeviceTopology::make(std::vector<Device> devices,
                                    std::vector<RegionLink> region_links,
                                    TopologyDefaults defaults) {
  if (devices.empty()) {
    throw InputError("topology must list at least one device");
  }
  DeviceTopology topo;
  topo.devices_ = std::move(devices);
  topo.region_links_ = std::move(region_links);
  topo.defaults_ = defaults;

  if (topo.defaults_.intra_region_latency_ms < 0 ||
      topo.defaults_.intra_region_bandwidth_gbps <= 0) {
    throw InputError("intra-region defaults must be non-negative latency and "
                     "positive bandwidth");
  }

  std::map<std::string, int> node_sizes;
  for (int i = 0; i < topo.size(); ++i) {
    const Device& d = topo.devices_[i];
    d.validate();
    if (!topo.index_.emplace(d.id, i).second) {
      throw InputError("duplicate device id '" + d.id + "'");
    }
    topo.max_node_size_ =
        std::max(topo.max_node_size_, ++node_sizes[d.node]);
  }

  std::map<std::pair<std::string, std::string>, Link> region_matrix;
  for (const RegionLink& rl : topo.region_links_) {
    if (rl.latency_ms < 0 || rl.bandwidth_gbps <= 0) {
      throw InputError("region link " + rl.src + "<->" + rl.dst +
                       " must have latency >= 0 and bandwidth > 0");
    }
    auto key = ordered_pair(rl.src, rl.dst);
    Link l{rl.latency_ms * kMilli, rl.bandwidth_gbps * kGbitPerSec};
    if (!region_matrix.emplace(key, l).second) {
      throw InputError("duplicate region link " + rl.src + "<->" + rl.dst);
    }
  }

  const int n = topo.size();
  topo.matrix_.resize(static_cast<std::size_t>(n) * n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const Device& da = topo.devices_[a];
      const Device& db = topo.devices_[b];
      Link l;
      if (a == b) {
        l = Link{0.0, std::numeric_limits<double>::infinity()};
      } else if (da.node == db.node && da.region == db.region) {
        l = Link{kIntraNodeLatencyS,
                 std::min(da.intra_node_bw(), db.intra_node_bw())};
      } else if (da.region == db.region) {
        l = Link{topo.defaults_.intra_region_latency_ms * kMilli,
                 topo.defaults_.intra_region_bandwidth_gbps * kGbitPerSec};
      } else {
        auto it = region_matrix.find(ordered_pair(da.region, db.region));
        if (it == region_matrix.end()) {
          throw InputError("no link rule between regions '" + da.region +
                           "' and '" + db.region + "' (devices " + da.id +
                           ", " + db.id + ")");
        }
        l = it->second;
      }
      topo.matrix_[static_cast<std::size_t>(a) * n + b] = l;
    }
  }
  return topo;
}

int DeviceTopology::device_index(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) {
    throw InputError("unknown device id '" + id + "'");
  }
  return it->second;
}

bool DeviceTopology::has_device(const std::string& id) const {
  return index_.count(id) != 0;
}

Link DeviceTopology::effective_link(const std::string& a,
                                    const std::string& b) const {
  return link(device_index(a), device_index(b));
}

DeviceTopology parse_topology_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("topology JSON parse error: ") + e.what());
  }
  try {
    std::vector<Device> devices;
    for (const json& jd : j.at("devices")) {
      Device d;
      d.id = jd.at("id").get<std::string>();
      d.gpu_model = jd.at("gpu_model").get<std::string>();
      d.comp_tflops = jd.at("comp_tflops").get<double>();
      d.mem_gb = jd.at("mem_gb").get<double>();
      d.hbm_gbps = jd.at("hbm_gbps").get<double>();
      d.intra_node_gbps = jd.at("intra_node_gbps").get<double>();
      d.node = jd.at("node").get<std::string>();
      d.region = jd.at("region").get<std::string>();
      devices.push_back(std::move(d));
    }
    std::vector<RegionLink> links;
    if (j.contains("region_links")) {
      for (const json& jl : j.at("region_links")) {
        RegionLink rl;
        rl.src = jl.at("src").get<std::string>();
        rl.dst = jl.at("dst").get<std::string>();
        rl.latency_ms = jl.at("latency_ms").get<double>();
        rl.bandwidth_gbps = jl.at("bandwidth_gbps").get<double>();
        links.push_back(std::move(rl));
      }
    }
    TopologyDefaults defaults;
    if (j.contains("defaults")) {
      const json& jd = j.at("defaults");
      defaults.intra_region_latency_ms =
          jd.value("intra_region_latency_ms", defaults.intra_region_latency_ms);
      defaults.intra_region_bandwidth_gbps = jd.value(
          "intra_region_bandwidth_gbps", defaults.intra_region_bandwidth_gbps);
    }
    return DeviceTopology::make(std::move(devices), std::move(links),
                                defaults);
  } catch (const json::exception& e) {
    throw InputError(std::string("topology JSON schema error: ") + e.what());
  }
}

DeviceTopology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open topology file: " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_topology_json(ss.str());
}

std::string serialize_topology(const DeviceTopology& topo) {
  json jdevs = json::array();
  for (const Device& d : topo.devices()) {
    jdevs.push_back({{"id", d.id},
                     {"gpu_model", d.gpu_model},
                     {"comp_tflops", d.comp_tflops},
                     {"mem_gb", d.mem_gb},
                     {"hbm_gbps", d.hbm_gbps},
                     {"intra_node_gbps", d.intra_node_gbps},
                     {"node", d.node},
                     {"region", d.region}});
  }
  json jlinks = json::array();
  for (const RegionLink& rl : topo.region_links()) {
    jlinks.push_back({{"src", rl.src},
                      {"dst", rl.dst},
                      {"latency_ms", rl.latency_ms},
                      {"bandwidth_gbps", rl.bandwidth_gbps}});
  }
  json j = {{"devices", jdevs},
            {"region_links", jlinks},
            {"defaults",
             {{"intra_region_latency_ms",
               topo.defaults().intra_region_latency_ms},
              {"intra_region_bandwidth_gbps",
               topo.defaults().intra_region_bandwidth_gbps}}}};
  return j.dump(2) + "\n";
}

void save_topology(const DeviceTopology& topo, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw InputError("cannot write topology file: " + path);
  }
  out << serialize_topology(topo);
}

namespace {

struct GpuSpec {
  double comp_tflops, mem_gb, hbm_gbps, intra_node_gbps;
};

const std::map<std::string, GpuSpec>& gpu_catalog() {
  static const std::map<std::string, GpuSpec> catalog = {
      {"A100", {312.0, 40.0, 2039.0, 600.0}},
      {"L40S", {366.0, 48.0, 864.0, 64.0}},
      {"L4", {121.0, 24.0, 300.0, 64.0}},
  };
  return catalog;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<Device> build_inventory_devices(
    const std::vector<InventoryItem>& inventory) {
  std::vector<Device> devices;
  std::map<std::string, int> per_model;
  for (const InventoryItem& item : inventory) {
    auto it = gpu_catalog().find(item.gpu_model);
    if (it == gpu_catalog().end()) {
      throw InputError("unknown GPU model '" + item.gpu_model +
                       "' (known: A100, L40S, L4)");
    }
    if (item.count < 1) {
      throw InputError("inventory counts must be >= 1");
    }
    for (int k = 0; k < item.count; ++k) {
      Device d;
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%02d", per_model[item.gpu_model]++);
      d.id = lower(item.gpu_model) + "-" + buf;
      d.gpu_model = item.gpu_model;
      d.comp_tflops = it->second.comp_tflops;
      d.mem_gb = it->second.mem_gb;
      d.hbm_gbps = it->second.hbm_gbps;
      d.intra_node_gbps = it->second.intra_node_gbps;
      devices.push_back(std::move(d));
    }
  }
  return devices;
}

}  // namespace

std::vector<InventoryItem> parse_inventory(const std::string& text) {
  std::vector<InventoryItem> items;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    auto x = part.find('x');
    if (x == std::string::npos) {
      x = part.find('*');
    }
    if (x == std::string::npos || x == 0 || x + 1 >= part.size()) {
      throw UsageError("bad inventory entry '" + part +
                       "' (expected COUNTxMODEL, e.g. 24xA100)");
    }
    InventoryItem item;
    try {
      item.count = std::stoi(part.substr(0, x));
    } catch (const std::exception&) {
      throw UsageError("bad inventory count in '" + part + "'");
    }
    item.gpu_model = part.substr(x + 1);
    items.push_back(std::move(item));
  }
  if (items.empty()) {
    throw UsageError("empty inventory");
  }
  return items;
}

std::vector<InventoryItem> default_inventory() {
  return {{24, "A100"}, {24, "L40S"}, {16, "L4"}};
}

DeviceTopology generate_scenario(int scenario_id, const ScenarioOptions& opts) {
  if (scenario_id < 1 || scenario_id > 4) {
    throw UsageError("scenario id must be 1..4");
  }
  std::vector<Device> devices = build_inventory_devices(opts.inventory);
  std::vector<RegionLink> links;
  TopologyDefaults defaults;

  if (scenario_id == 1) {
    // single region; same-model GPUs packed into nodes of node_size
    std::map<std::string, int> per_model;
    for (Device& d : devices) {
      int k = per_model[d.gpu_model]++;
      d.region = "local";
      d.node = lower(d.gpu_model) + "-node-" +
               std::to_string(k / std::max(1, opts.node_size));
    }
    return DeviceTopology::make(std::move(devices), std::move(links),
                                defaults);
  }

  // Scenarios 2-4 place individual GPUs, one machine each.
  for (Device& d : devices) {
    d.node = "host-" + d.id;
  }

  if (scenario_id == 2) {
    auto is_edge = [&](const Device& d) {
      return std::find(opts.edge_models.begin(), opts.edge_models.end(),
                       d.gpu_model) != opts.edge_models.end();
    };
    // First non-edge model lands in Ohio, every other non-edge model in
    // Virginia; edge models sit behind Virginia's last-mile links.
    std::set<std::string> used;
    std::string ohio_model;
    for (Device& d : devices) {
      if (is_edge(d)) {
        d.region = "virginia-edge";
      } else {
        if (ohio_model.empty()) {
          ohio_model = d.gpu_model;
        }
        d.region = d.gpu_model == ohio_model ? "ohio" : "virginia";
      }
      used.insert(d.region);
    }
    auto add_link = [&](const std::string& a, const std::string& b,
                        double ms, double gbps) {
      if (used.count(a) && used.count(b)) {
        links.push_back({a, b, ms, gbps});
      }
    };
    add_link("ohio", "virginia", 10.0, 5.0);
    add_link("ohio", "virginia-edge", 10.0, 1.0);
    add_link("virginia", "virginia-edge", defaults.intra_region_latency_ms,
             1.0);
    return DeviceTopology::make(std::move(devices), std::move(links),
                                defaults);
  }

  // Scenarios 3 and 4: eight regions, seeded uniform inter-region links.
  const std::vector<std::string> regions =
      scenario_id == 3
          ? std::vector<std::string>{"paris", "stockholm", "london", "ireland",
                                     "spain", "zurich", "frankfurt", "milan"}
          : std::vector<std::string>{"virginia", "ohio", "paris", "stockholm",
                                     "london", "ireland", "spain", "zurich"};
  for (std::size_t i = 0; i < devices.size(); ++i) {
    devices[i].region = regions[i % regions.size()];
  }
  const double delay_lo = 5.0, delay_hi = scenario_id == 3 ? 30.0 : 60.0;
  const double bw_lo = scenario_id == 3 ? 1.9 : 0.9, bw_hi = 5.0;
  Rng rng(opts.seed);
  for (std::size_t a = 0; a < regions.size(); ++a) {
    for (std::size_t b = a + 1; b < regions.size(); ++b) {
      links.push_back({regions[a], regions[b],
                       rng.uniform(delay_lo, delay_hi),
                       rng.uniform(bw_lo, bw_hi)});
    }
  }
  return DeviceTopology::make(std::move(devices), std::move(links), defaults);
}

}  // namespace hetplan
