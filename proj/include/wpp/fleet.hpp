#pragma once

#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wpp/calibration.hpp"
#include "wpp/error.hpp"
#include "wpp/knobs.hpp"
#include "wpp/mode_engine.hpp"

namespace wpp {

enum class Level { Gpu, Node, Rack, Facility };

constexpr std::string_view to_string(Level level) {
  switch (level) {
    case Level::Gpu:      return "gpu";
    case Level::Node:     return "node";
    case Level::Rack:     return "rack";
    case Level::Facility: return "facility";
  }
  return "unknown";
}

inline std::optional<Level> parse_level(std::string_view text) {
  for (auto l : {Level::Gpu, Level::Node, Level::Rack, Level::Facility}) {
    if (to_string(l) == text) return l;
  }
  return std::nullopt;
}

struct NodeSpec {
  int gpus_per_node = 8;
  int cpus_per_node = 2;
  double non_gpu_power_watts = 3000.0;
};

// facility -> racks -> nodes -> GPUs. Ids are positional: rack<i>, node<j>,
// gpu<k> with global node and GPU numbering.
class Hierarchy {
 public:
  Hierarchy() = default;

  Hierarchy(int racks, int nodes_per_rack, int gpus_per_node) {
    if (racks < 1 || nodes_per_rack < 1 || gpus_per_node < 1)
      throw Error(Errc::InvalidRequest, "hierarchy dimensions must be >= 1");
    for (int r = 0; r < racks; ++r) {
      rack_nodes_.emplace_back();
      for (int n = 0; n < nodes_per_rack; ++n) {
        const int node = static_cast<int>(node_rack_.size());
        node_rack_.push_back(r);
        rack_nodes_.back().push_back(node);
        node_gpus_.emplace_back();
        for (int g = 0; g < gpus_per_node; ++g) {
          node_gpus_.back().push_back(static_cast<int>(gpu_node_.size()));
          gpu_node_.push_back(node);
        }
      }
    }
  }

  static Hierarchy from(const FleetConfig& f) { return {f.racks, f.nodes_per_rack, f.gpus_per_node}; }

  int racks() const { return static_cast<int>(rack_nodes_.size()); }
  int nodes() const { return static_cast<int>(node_rack_.size()); }
  int gpus() const { return static_cast<int>(gpu_node_.size()); }

  const std::vector<int>& rack_nodes(int rack) const { return rack_nodes_.at(rack); }
  const std::vector<int>& node_gpus(int node) const { return node_gpus_.at(node); }
  int node_of_gpu(int gpu) const { return gpu_node_.at(gpu); }
  int rack_of_node(int node) const { return node_rack_.at(node); }

  static std::string gpu_id(int i) { return "gpu" + std::to_string(i); }
  static std::string node_id(int i) { return "node" + std::to_string(i); }
  static std::string rack_id(int i) { return "rack" + std::to_string(i); }
  static std::string facility_id() { return "facility"; }

  std::string id(Level level, int index) const {
    switch (level) {
      case Level::Gpu:      return gpu_id(index);
      case Level::Node:     return node_id(index);
      case Level::Rack:     return rack_id(index);
      case Level::Facility: return facility_id();
    }
    return {};
  }

  int count(Level level) const {
    switch (level) {
      case Level::Gpu:      return gpus();
      case Level::Node:     return nodes();
      case Level::Rack:     return racks();
      case Level::Facility: return 1;
    }
    return 0;
  }

  // Resolves "gpu12", "node3", "rack0", "facility"; throws UnknownHierarchyNode.
  int index_of(Level level, std::string_view id) const {
    if (level == Level::Facility) {
      if (id == facility_id() || id.empty()) return 0;
      throw Error(Errc::UnknownHierarchyNode, std::string(id));
    }
    const std::string_view prefix = to_string(level);
    if (id.substr(0, prefix.size()) == prefix) {
      const std::string_view digits = id.substr(prefix.size());
      if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string_view::npos &&
          digits.size() < 9) {
        const int i = std::stoi(std::string(digits));
        if (i < count(level) && std::string(id) == this->id(level, i)) return i;
      }
    }
    throw Error(Errc::UnknownHierarchyNode, std::string(id));
  }

 private:
  std::vector<std::vector<int>> rack_nodes_;
  std::vector<std::vector<int>> node_gpus_;
  std::vector<int> node_rack_;
  std::vector<int> gpu_node_;
};

// Instantaneous facility power: every GPU plus each node's non-GPU draw.
struct PowerFrame {
  std::vector<double> gpu_watts;
  std::vector<double> node_other_watts;

  bool operator==(const PowerFrame&) const = default;
};

// Power per entity at `level`. Sums are built bottom-up from the frame, so
// each parent equals the sum of its children by construction.
inline std::vector<double> rollup(const PowerFrame& frame, const Hierarchy& h, Level level) {
  if (static_cast<int>(frame.gpu_watts.size()) != h.gpus() ||
      static_cast<int>(frame.node_other_watts.size()) != h.nodes())
    throw Error(Errc::UnknownHierarchyNode, "frame does not match hierarchy");
  if (level == Level::Gpu) return frame.gpu_watts;
  std::vector<double> node(h.nodes(), 0.0);
  for (int n = 0; n < h.nodes(); ++n) {
    double sum = 0.0;
    for (int g : h.node_gpus(n)) sum += frame.gpu_watts[g];
    node[n] = sum + frame.node_other_watts[n];
  }
  if (level == Level::Node) return node;
  std::vector<double> rack(h.racks(), 0.0);
  for (int r = 0; r < h.racks(); ++r) {
    double sum = 0.0;
    for (int n : h.rack_nodes(r)) sum += node[n];
    rack[r] = sum;
  }
  if (level == Level::Rack) return rack;
  return {std::accumulate(rack.begin(), rack.end(), 0.0)};
}

inline double rollup_one(const PowerFrame& frame, const Hierarchy& h, Level level, std::string_view id) {
  const int index = h.index_of(level, id);
  return rollup(frame, h, level).at(index);
}

// Programmed device state: every knob of the architecture at a concrete value.
struct GpuState {
  GpuArch arch = GpuArch::B200;
  std::map<std::string, KnobValue> knobs;

  static GpuState defaults(GpuArch arch, const KnobDictionary& dict) {
    GpuState s;
    s.arch = arch;
    for (const auto& [id, knob] : dict.all()) s.knobs[id] = knob.default_value;
    return s;
  }

  const KnobValue& get(std::string_view knob) const {
    auto it = knobs.find(std::string(knob));
    if (it == knobs.end()) throw Error(Errc::UnknownKnob, std::string(knob));
    return it->second;
  }

  double number(std::string_view knob) const { return std::get<double>(get(knob)); }

  bool operator==(const GpuState&) const = default;
};

// The device ends up at its defaults overlaid with the config's entries;
// knobs the config does not mention return to their defaults.
inline GpuState apply_config(const GpuState& /*current*/, const EffectiveConfig& config, GpuArch arch,
                             const KnobDictionary& dict) {
  GpuState next = GpuState::defaults(arch, dict);
  for (const auto& [knob, entry] : config.entries) {
    dict.validate(knob, entry.value);
    next.knobs[knob] = entry.value;
  }
  return next;
}

}  // namespace wpp
