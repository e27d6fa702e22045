#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "wpp/error.hpp"
#include "wpp/knobs.hpp"

namespace wpp {

// A named bundle of knob assignments. Higher priority wins both conflicts
// (whole-mode) and overlaps (per-knob).
struct PerformanceMode {
  std::string id;
  std::string display_name;
  int priority = 0;
  std::set<std::string> conflicts;
  std::map<std::string, KnobValue> assignments;
  std::string provenance;

  bool operator==(const PerformanceMode&) const = default;
};

struct ConfigEntry {
  KnobValue value;
  std::string mode_id;

  bool operator==(const ConfigEntry&) const = default;
};

struct DiscardRecord {
  std::string mode_id;
  std::string lost_to;

  bool operator==(const DiscardRecord&) const = default;
};

struct OverlapRecord {
  std::string knob_id;
  std::string loser;
  std::string winner;

  bool operator==(const OverlapRecord&) const = default;
};

struct EffectiveConfig {
  std::map<std::string, ConfigEntry> entries;
  std::vector<DiscardRecord> discarded;
  std::vector<OverlapRecord> overlaps;
  std::vector<std::string> active_modes;  // descending priority

  bool has_discards() const { return !discarded.empty(); }
  bool empty() const { return entries.empty() && active_modes.empty(); }
  bool operator==(const EffectiveConfig&) const = default;
};

struct PriorityRow {
  std::string mode_id;
  int priority = 0;
  std::set<std::string> conflicts;

  bool operator==(const PriorityRow&) const = default;
};

class ModeRegistry {
 public:
  explicit ModeRegistry(KnobDictionary knobs = {}) : knobs_(std::move(knobs)) {}

  const std::string& register_mode(PerformanceMode mode) {
    if (mode.id.empty()) throw Error(Errc::InvalidMode, "mode id must not be empty");
    if (declared_.count(mode.id)) throw Error(Errc::DuplicateModeId, mode.id);
    if (mode.conflicts.count(mode.id))
      throw Error(Errc::InvalidMode, mode.id + " lists itself as a conflict");
    for (const auto& [id, other] : declared_) {
      if (other.priority == mode.priority) {
        throw Error(Errc::DuplicatePriority,
                    mode.id + " reuses priority " + std::to_string(mode.priority) + " of " + id);
      }
    }
    for (const auto& [knob, value] : mode.assignments) knobs_.validate(knob, value);

    auto [it, inserted] = declared_.emplace(mode.id, std::move(mode));
    normalize();
    return it->first;
  }

  void unregister_mode(const std::string& id) {
    if (!declared_.erase(id)) throw Error(Errc::UnknownMode, id);
    enabled_.erase(id);
    normalize();
  }

  const std::set<std::string>& set_enabled(const std::string& id, bool on) {
    if (!declared_.count(id)) throw Error(Errc::UnknownMode, id);
    if (on) {
      enabled_.insert(id);
    } else {
      enabled_.erase(id);
    }
    return enabled_;
  }

  bool contains(const std::string& id) const { return declared_.count(id) != 0; }

  // The mode with its symmetrized conflict mask.
  const PerformanceMode& mode(const std::string& id) const {
    auto it = effective_.find(id);
    if (it == effective_.end()) throw Error(Errc::UnknownMode, id);
    return it->second;
  }

  bool conflicting(const std::string& a, const std::string& b) const {
    return mode(a).conflicts.count(b) != 0;
  }

  const std::map<std::string, PerformanceMode>& modes() const { return effective_; }
  const std::set<std::string>& enabled() const { return enabled_; }
  const KnobDictionary& knobs() const { return knobs_; }

 private:
  // effective(m) = declared(m) plus every registered mode that declares m.
  void normalize() {
    effective_ = declared_;
    for (const auto& [id, mode] : declared_) {
      for (const auto& target : mode.conflicts) {
        auto it = effective_.find(target);
        if (it != effective_.end()) it->second.conflicts.insert(id);
      }
    }
  }

  KnobDictionary knobs_;
  std::map<std::string, PerformanceMode> declared_;
  std::map<std::string, PerformanceMode> effective_;
  std::set<std::string> enabled_;
};

// Two-phase arbitration over the enabled modes.
//   1. Walk by descending priority; a mode survives iff it conflicts with no
//      earlier survivor, otherwise it is discarded against the first
//      (highest-priority) survivor it conflicts with.
//   2. Merge survivors per knob; the highest-priority assigner wins and every
//      lower survivor assigning the same knob is reported as an overlap.
// Modes blocked only by already-discarded modes are never revived.
inline EffectiveConfig arbitrate(const ModeRegistry& registry) {
  std::vector<const PerformanceMode*> order;
  for (const auto& id : registry.enabled()) order.push_back(&registry.mode(id));
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->priority > b->priority; });

  EffectiveConfig config;
  std::vector<const PerformanceMode*> survivors;
  for (const auto* candidate : order) {
    auto blocker = std::find_if(survivors.begin(), survivors.end(), [&](const auto* s) {
      return candidate->conflicts.count(s->id) != 0;
    });
    if (blocker == survivors.end()) {
      survivors.push_back(candidate);
      config.active_modes.push_back(candidate->id);
    } else {
      config.discarded.push_back({candidate->id, (*blocker)->id});
    }
  }

  for (const auto* mode : survivors) {
    for (const auto& [knob, value] : mode->assignments) {
      auto [it, inserted] = config.entries.try_emplace(knob, ConfigEntry{value, mode->id});
      if (!inserted) config.overlaps.push_back({knob, mode->id, it->second.mode_id});
    }
  }
  return config;
}

inline std::vector<PriorityRow> query_priorities(const ModeRegistry& registry) {
  std::vector<PriorityRow> rows;
  rows.reserve(registry.modes().size());
  for (const auto& [id, mode] : registry.modes()) rows.push_back({id, mode.priority, mode.conflicts});
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.priority > b.priority; });
  return rows;
}

// Human-readable conflict report. Ordering follows the config (priority
// order, then knob id), so identical configs render byte-identical text.
inline std::string explain(const EffectiveConfig& config) {
  std::ostringstream os;
  if (config.active_modes.empty()) {
    os << "active modes: none (device defaults)\n";
  } else {
    os << "active modes (highest priority first):\n";
    for (std::size_t i = 0; i < config.active_modes.size(); ++i)
      os << "  " << (i + 1) << ". " << config.active_modes[i] << "\n";
  }
  if (config.discarded.empty() && config.overlaps.empty()) {
    os << "no conflicts\n";
    return os.str();
  }
  if (!config.discarded.empty()) {
    os << "discarded modes:\n";
    for (const auto& d : config.discarded)
      os << "  " << d.mode_id << ": conflict-lost-to " << d.lost_to
         << " (conflicting mode with higher priority; its configuration was not applied)\n";
  }
  if (!config.overlaps.empty()) {
    os << "knob overlaps:\n";
    for (const auto& o : config.overlaps) {
      os << "  " << o.knob_id << ": " << o.loser << " overridden by " << o.winner << " (value "
         << format_value(config.entries.at(o.knob_id).value) << ")\n";
    }
  }
  return os.str();
}

}  // namespace wpp
