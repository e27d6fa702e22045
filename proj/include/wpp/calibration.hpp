#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "wpp/error.hpp"
#include "wpp/knobs.hpp"
#include "wpp/profile.hpp"
#include "wpp/response.hpp"

namespace wpp {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// Knob value in a recipe: either one value for every architecture or a map
// keyed by architecture name.
struct RecipeValue {
  std::optional<KnobValue> common;
  std::map<GpuArch, KnobValue> per_arch;

  std::optional<KnobValue> for_arch(GpuArch arch) const {
    auto it = per_arch.find(arch);
    if (it != per_arch.end()) return it->second;
    return common;
  }
};

using RecipeAssignments = std::map<std::string, RecipeValue>;

struct ModeRecipe {
  std::string id;
  std::string display_name;
  int priority = 0;
  std::set<std::string> conflicts;
  RecipeAssignments assignments;
  std::map<std::string, RecipeAssignments> hint_adjustments;  // keyed by hint token
  std::string provenance;
};

struct ProfileRecipe {
  ProfileId id = ProfileId::MaxQTraining;
  ProfileStatus status = ProfileStatus::Released;
  std::string description;
  std::vector<std::string> modes;  // base first, then modifiers
};

struct FleetConfig {
  GpuArch arch = GpuArch::B200;
  int racks = 2;
  int nodes_per_rack = 4;
  int gpus_per_node = 8;
  int cpus_per_node = 2;
  double non_gpu_power_watts = 3000.0;
  double gpu_idle_watts = 100.0;
  std::optional<double> facility_cap_watts;  // defaults to full-load draw
  double tick_seconds = 1.0;
  std::string epoch = "2025-01-01T00:00:00Z";
  double noise_fraction = 0.0;
  std::uint64_t seed = 1;
};

enum class Role { Admin, Tenant };

struct Principal {
  Role role = Role::Tenant;
  std::string identity;
};

struct AuthConfig {
  std::map<std::string, Principal> tokens;
};

struct CalibrationDocument {
  int schema_version = kSchemaVersion;
  std::vector<Knob> extension_knobs;
  std::vector<ModeRecipe> modes;
  std::vector<ProfileRecipe> profiles;
  std::map<std::string, WorkloadClass> applications;
  ResponseTable response;
  FleetConfig fleet;
  AuthConfig auth;
};

namespace detail {

inline KnobValue knob_value_from_json(const json& j, const std::string& where) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw Error(Errc::CatalogInvalid, where + ": knob value must be number, boolean or token");
}

inline json knob_value_to_json(const KnobValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  return std::get<std::string>(v);
}

inline RecipeAssignments assignments_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::CatalogInvalid, where + ": assignments must be an object");
  RecipeAssignments out;
  for (const auto& [knob, value] : j.items()) {
    RecipeValue rv;
    if (value.is_object()) {
      for (const auto& [arch_name, v] : value.items()) {
        auto arch = parse_arch(arch_name);
        if (!arch) throw Error(Errc::CatalogInvalid, where + ": unknown architecture " + arch_name);
        rv.per_arch[*arch] = knob_value_from_json(v, where + "." + knob);
      }
    } else {
      rv.common = knob_value_from_json(value, where + "." + knob);
    }
    out[knob] = std::move(rv);
  }
  return out;
}

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw Error(Errc::CatalogInvalid, where + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::CatalogInvalid, where + "." + key + ": " + e.what());
  }
}

}  // namespace detail

inline CalibrationDocument parse_calibration(const json& root) {
  using detail::require;
  CalibrationDocument doc;
  if (!root.is_object()) throw Error(Errc::CatalogInvalid, "document root must be an object");
  doc.schema_version = require<int>(root, "schema_version", "document");
  if (doc.schema_version != kSchemaVersion) {
    throw Error(Errc::CatalogInvalid,
                "unsupported schema_version " + std::to_string(doc.schema_version));
  }

  for (const auto& k : root.value("extension_knobs", json::array())) {
    const std::string where = "extension_knobs";
    Knob knob;
    knob.id = require<std::string>(k, "id", where);
    auto kind = parse_value_kind(require<std::string>(k, "kind", where));
    if (!kind) throw Error(Errc::CatalogInvalid, where + ": bad kind for " + knob.id);
    knob.kind = *kind;
    knob.min = k.value("min", 0.0);
    knob.max = k.value("max", 0.0);
    knob.tokens = k.value("tokens", std::vector<std::string>{});
    knob.default_value = detail::knob_value_from_json(k.at("default"), where + "." + knob.id);
    knob.unit_note = k.value("note", "");
    doc.extension_knobs.push_back(std::move(knob));
  }

  for (const auto& m : require<json>(root, "modes", "document")) {
    ModeRecipe mode;
    mode.id = require<std::string>(m, "id", "modes");
    const std::string where = "modes." + mode.id;
    mode.display_name = m.value("display_name", mode.id);
    mode.priority = require<int>(m, "priority", where);
    mode.conflicts = m.value("conflicts", std::set<std::string>{});
    mode.assignments = detail::assignments_from_json(require<json>(m, "assignments", where), where);
    const json adjustments = m.value("hint_adjustments", json::object());
    for (const auto& [hint, adj] : adjustments.items()) {
      WorkloadHints probe;
      if (!add_hint(probe, hint)) throw Error(Errc::CatalogInvalid, where + ": unknown hint " + hint);
      mode.hint_adjustments[canonical_name(hint)] =
          detail::assignments_from_json(adj, where + ".hint_adjustments." + hint);
    }
    mode.provenance = m.value("provenance", "");
    doc.modes.push_back(std::move(mode));
  }

  for (const auto& p : require<json>(root, "profiles", "document")) {
    ProfileRecipe profile;
    const auto name = require<std::string>(p, "id", "profiles");
    auto id = parse_profile_id(name);
    if (!id) throw Error(Errc::CatalogInvalid, "profiles: unknown profile id " + name);
    profile.id = *id;
    auto status = parse_status(require<std::string>(p, "status", "profiles." + name));
    if (!status) throw Error(Errc::CatalogInvalid, "profiles." + name + ": bad status");
    profile.status = *status;
    profile.description = p.value("description", "");
    profile.modes = require<std::vector<std::string>>(p, "modes", "profiles." + name);
    doc.profiles.push_back(std::move(profile));
  }

  const json applications = root.value("applications", json::object());
  for (const auto& [app, cls_name] : applications.items()) {
    auto cls = parse_workload_class(cls_name.get<std::string>());
    if (!cls) throw Error(Errc::CatalogInvalid, "applications." + app + ": unknown class");
    doc.applications[app] = *cls;
  }

  for (const auto& r : root.value("response", json::array())) {
    ResponseEntry e;
    auto arch = parse_arch(require<std::string>(r, "arch", "response"));
    if (!arch) throw Error(Errc::CatalogInvalid, "response: unknown arch");
    e.arch = *arch;
    e.workload = require<std::string>(r, "workload", "response");
    e.point = canonical_name(require<std::string>(r, "point", "response"));
    if (e.point != kDefaultPoint && e.point != kFrequencyScalingPoint && !parse_profile_id(e.point))
      throw Error(Errc::CatalogInvalid, "response: unknown operating point " + e.point);
    e.perf_factor = require<double>(r, "perf_factor", "response." + e.workload);
    e.system_power_factor = require<double>(r, "system_power_factor", "response." + e.workload);
    if (r.contains("gpu_power_factor")) e.gpu_power_factor = r.at("gpu_power_factor").get<double>();
    e.source = r.value("source", "");
    doc.response.add(std::move(e));
  }

  if (root.contains("fleet")) {
    const auto& f = root.at("fleet");
    auto arch = parse_arch(f.value("arch", "B200"));
    if (!arch) throw Error(Errc::CatalogInvalid, "fleet: unknown arch");
    doc.fleet.arch = *arch;
    doc.fleet.racks = f.value("racks", doc.fleet.racks);
    doc.fleet.nodes_per_rack = f.value("nodes_per_rack", doc.fleet.nodes_per_rack);
    doc.fleet.gpus_per_node = f.value("gpus_per_node", doc.fleet.gpus_per_node);
    doc.fleet.cpus_per_node = f.value("cpus_per_node", doc.fleet.cpus_per_node);
    doc.fleet.non_gpu_power_watts = f.value("non_gpu_power_watts", doc.fleet.non_gpu_power_watts);
    doc.fleet.gpu_idle_watts = f.value("gpu_idle_watts", doc.fleet.gpu_idle_watts);
    if (f.contains("facility_cap_watts")) doc.fleet.facility_cap_watts = f.at("facility_cap_watts").get<double>();
    doc.fleet.tick_seconds = f.value("tick_seconds", doc.fleet.tick_seconds);
    doc.fleet.epoch = f.value("epoch", doc.fleet.epoch);
    doc.fleet.noise_fraction = f.value("noise_fraction", doc.fleet.noise_fraction);
    doc.fleet.seed = f.value("seed", doc.fleet.seed);
    if (doc.fleet.racks < 1 || doc.fleet.nodes_per_rack < 1 || doc.fleet.gpus_per_node < 1)
      throw Error(Errc::CatalogInvalid, "fleet: racks, nodes_per_rack and gpus_per_node must be >= 1");
  }

  if (root.contains("auth")) {
    const json tokens = root.at("auth").value("tokens", json::object());
    for (const auto& [token, entry] : tokens.items()) {
      Principal p;
      const auto role = entry.value("role", "tenant");
      if (role != "admin" && role != "tenant") throw Error(Errc::CatalogInvalid, "auth: bad role " + role);
      p.role = role == "admin" ? Role::Admin : Role::Tenant;
      p.identity = entry.value("identity", token);
      doc.auth.tokens[token] = p;
    }
  }
  return doc;
}

inline CalibrationDocument load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::RecipeFileMissing, path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::CatalogInvalid, path.string() + ": " + e.what());
  }
  return parse_calibration(root);
}

}  // namespace wpp
