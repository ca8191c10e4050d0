// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

namespace hetplan {

// Unit conventions of the topology file, chosen so Table-style GPU specs can
// be copied verbatim: device attributes use decimal GB and GB/s (x1e9);
// network bandwidth uses Gbps (x1.25e8 bytes/s); latency in ms (x1e-3 s).
inline constexpr double kTflops = 1e12;
inline constexpr double kGigabyte = 1e9;
inline constexpr double kGbitPerSec = 1.25e8;
inline constexpr double kMilli = 1e-3;

// Same-node link latency; the profile format carries no intra-node latency,
// but zero would make every intra-node ring tie.
inline constexpr double kIntraNodeLatencyS = 5e-6;

struct Device {
  std::string id;
  std::string gpu_model;
  double comp_tflops = 0;     // FP16 TFLOPS
  double mem_gb = 0;          // GB
  double hbm_gbps = 0;        // GB/s
  double intra_node_gbps = 0; // GB/s
  std::string node;
  std::string region;

  double comp() const { return comp_tflops * kTflops; }
  double mem() const { return mem_gb * kGigabyte; }
  double hbm() const { return hbm_gbps * kGigabyte; }
  double intra_node_bw() const { return intra_node_gbps * kGigabyte; }
  void validate() const;
};

// Resolved point-to-point channel, SI units.
struct Link {
  double latency_s = 0;
  double bandwidth_bps = std::numeric_limits<double>::infinity();
};

struct RegionLink {
  std::string src;
  std::string dst;
  double latency_ms = 0;
  double bandwidth_gbps = 0;
};

struct TopologyDefaults {
  double intra_region_latency_ms = 0.1;
  double intra_region_bandwidth_gbps = 100.0;
};

class DeviceTopology {
 public:
  DeviceTopology() = default;
  // Validates everything and precomputes the link matrix. Throws InputError
  // on schema violations, non-positive attributes, duplicate ids, or device
  // pairs with no applicable link rule.
  static DeviceTopology make(std::vector<Device> devices,
                             std::vector<RegionLink> region_links,
                             TopologyDefaults defaults);

  int size() const { return static_cast<int>(devices_.size()); }
  const std::vector<Device>& devices() const { return devices_; }
  const Device& device(int i) const { return devices_[i]; }
  int device_index(const std::string& id) const;  // throws for unknown id
  bool has_device(const std::string& id) const;

  const Link& link(int a, int b) const { return matrix_[a * size() + b]; }
  Link effective_link(const std::string& a, const std::string& b) const;

  int max_devices_per_node() const { return max_node_size_; }

  const std::vector<RegionLink>& region_links() const { return region_links_; }
  const TopologyDefaults& defaults() const { return defaults_; }

 private:
  std::vector<Device> devices_;
  std::vector<RegionLink> region_links_;
  TopologyDefaults defaults_;
  std::unordered_map<std::string, int> index_;
  std::vector<Link> matrix_;
  int max_node_size_ = 0;
};

DeviceTopology parse_topology_json(const std::string& text);
DeviceTopology load_topology(const std::string& path);
std::string serialize_topology(const DeviceTopology& topo);
void save_topology(const DeviceTopology& topo, const std::string& path);

struct InventoryItem {
  int count = 0;
  std::string gpu_model;
};

// "24xA100,24xL40S,16xL4"
std::vector<InventoryItem> parse_inventory(const std::string& text);
std::vector<InventoryItem> default_inventory();

struct ScenarioOptions {
  std::vector<InventoryItem> inventory = default_inventory();
  std::uint64_t seed = 0;
  int node_size = 8;  // scenario 1 packs same-model GPUs into nodes
  // Scenario 2: GPU models placed at the network edge (1 Gbps links).
  std::vector<std::string> edge_models = {"L4"};
};

// Synthetic evaluation topologies:
//   1  single region, no injected latency/bandwidth caps
//   2  two regions (10 ms / 5 Gbps) plus an edge subset at 1 Gbps
//   3  eight regions, delay U[5,30] ms, bandwidth U[1.9,5.0] Gbps
//   4  eight regions, delay U[5,60] ms, bandwidth U[0.9,5.0] Gbps
DeviceTopology generate_scenario(int scenario_id, const ScenarioOptions& opts);

}  // namespace hetplan
