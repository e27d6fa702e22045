#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wpp/calibration.hpp"
#include "wpp/mode_engine.hpp"
#include "wpp/profile.hpp"

namespace wpp {

struct ProfileListing {
  ProfileId id = ProfileId::MaxQTraining;
  ProfileStatus status = ProfileStatus::Released;
  std::string description;

  bool operator==(const ProfileListing&) const = default;
};

// Immutable after construction. Construction validates every recipe against
// every architecture and every hint combination, so a catalog that loads is
// one whose profiles all register and arbitrate cleanly.
class ProfileCatalog {
 public:
  explicit ProfileCatalog(CalibrationDocument doc) : doc_(std::move(doc)) { validate(); }

  static ProfileCatalog load(const std::filesystem::path& path) {
    return ProfileCatalog(load_calibration(path));
  }

  std::vector<ProfileListing> list_profiles(std::optional<ProfileStatus> status = std::nullopt) const {
    std::vector<ProfileListing> out;
    for (auto id : kAllProfiles) {
      const auto& recipe = profile(id);
      if (status && recipe.status != *status) continue;
      out.push_back({id, recipe.status, recipe.description});
    }
    return out;
  }

  const ProfileRecipe& profile(ProfileId id) const {
    for (const auto& p : doc_.profiles) {
      if (p.id == id) return p;
    }
    throw Error(Errc::UnknownProfile, std::string(to_string(id)));
  }

  const ModeRecipe& mode_recipe(const std::string& id) const {
    for (const auto& m : doc_.modes) {
      if (m.id == id) return m;
    }
    throw Error(Errc::UnknownMode, id);
  }

  std::vector<PerformanceMode> profile_modes(ProfileId id, const WorkloadHints& hints,
                                             GpuArch arch) const {
    std::vector<PerformanceMode> out;
    for (const auto& mode_id : profile(id).modes) {
      out.push_back(instantiate(mode_recipe(mode_id), hints, arch, std::string(to_string(id))));
    }
    return out;
  }

  // Every catalog mode at its default (hint-free) values.
  std::vector<PerformanceMode> all_modes(GpuArch arch) const {
    std::vector<PerformanceMode> out;
    for (const auto& m : doc_.modes) out.push_back(instantiate(m, {}, arch, "catalog"));
    return out;
  }

  KnobDictionary knobs(GpuArch arch) const {
    KnobDictionary dict = standard_knobs(arch);
    for (const auto& k : doc_.extension_knobs) dict.add(k);
    return dict;
  }

  // Registry holding exactly one profile's modes, all enabled.
  ModeRegistry seed_registry(ProfileId id, const WorkloadHints& hints, GpuArch arch) const {
    ModeRegistry registry(knobs(arch));
    for (auto& mode : profile_modes(id, hints, arch)) {
      const std::string mode_id = registry.register_mode(std::move(mode));
      registry.set_enabled(mode_id, true);
    }
    return registry;
  }

  std::optional<WorkloadClass> application_class(const std::string& application) const {
    auto it = doc_.applications.find(application);
    if (it == doc_.applications.end()) return std::nullopt;
    return it->second;
  }

  const ResponseTable& response() const { return doc_.response; }
  const FleetConfig& fleet() const { return doc_.fleet; }
  const AuthConfig& auth() const { return doc_.auth; }
  const CalibrationDocument& document() const { return doc_; }

 private:
  PerformanceMode instantiate(const ModeRecipe& recipe, const WorkloadHints& hints, GpuArch arch,
                              const std::string& origin) const {
    PerformanceMode mode;
    mode.id = recipe.id;
    mode.display_name = recipe.display_name;
    mode.priority = recipe.priority;
    mode.conflicts = recipe.conflicts;
    mode.provenance = origin + " recipe (schema v" + std::to_string(doc_.schema_version) + ")";

    auto resolve_into = [&](const RecipeAssignments& src, const std::string& where) {
      for (const auto& [knob, value] : src) {
        auto v = value.for_arch(arch);
        if (!v) {
          throw Error(Errc::CatalogInvalid, where + "." + knob + " has no value for " +
                                                std::string(to_string(arch)));
        }
        mode.assignments[knob] = *v;
      }
    };
    resolve_into(recipe.assignments, recipe.id);
    std::vector<std::string> tokens;
    if (hints.boundedness) tokens.emplace_back(canonical_name(to_string(*hints.boundedness)));
    if (hints.interconnect) tokens.emplace_back(canonical_name(to_string(*hints.interconnect)));
    for (const auto& token : tokens) {
      auto it = recipe.hint_adjustments.find(token);
      if (it != recipe.hint_adjustments.end()) resolve_into(it->second, recipe.id + "/" + token);
    }
    return mode;
  }

  void validate() const {
    std::set<ProfileId> seen;
    for (const auto& p : doc_.profiles) {
      if (!seen.insert(p.id).second)
        throw Error(Errc::CatalogInvalid, "profile listed twice: " + std::string(to_string(p.id)));
      const auto expected = is_hpc(class_of(p.id)) ? ProfileStatus::InDevelopment : ProfileStatus::Released;
      if (p.status != expected) {
        throw Error(Errc::CatalogInvalid, std::string(to_string(p.id)) + " must be " +
                                              std::string(to_string(expected)));
      }
      if (p.modes.empty())
        throw Error(Errc::CatalogInvalid, std::string(to_string(p.id)) + " has no modes");
    }
    if (seen.size() != kAllProfiles.size())
      throw Error(Errc::CatalogInvalid, "catalog must define all eight profiles");

    // Priorities are unique catalog-wide so that any mix of profiles can
    // share one device registry.
    std::set<std::string> ids;
    std::set<int> priorities;
    for (const auto& m : doc_.modes) {
      if (!ids.insert(m.id).second) throw Error(Errc::CatalogInvalid, "duplicate mode " + m.id);
      if (!priorities.insert(m.priority).second)
        throw Error(Errc::CatalogInvalid, "duplicate priority in mode " + m.id);
    }
    for (const auto& m : doc_.modes) {
      for (const auto& c : m.conflicts) {
        if (!ids.count(c)) throw Error(Errc::CatalogInvalid, m.id + " conflicts with unknown mode " + c);
      }
    }
    for (const auto& p : doc_.profiles) {
      for (const auto& mode_id : p.modes) {
        if (!ids.count(mode_id))
          throw Error(Errc::CatalogInvalid, std::string(to_string(p.id)) + " uses unknown mode " + mode_id);
      }
    }

    const std::vector<std::optional<Boundedness>> bounds = {std::nullopt, Boundedness::MemoryBound,
                                                            Boundedness::ComputeBound};
    const std::vector<std::optional<Interconnect>> links = {std::nullopt, Interconnect::NvlinkHeavy,
                                                            Interconnect::NvlinkLight};
    for (auto arch : {GpuArch::B200, GpuArch::H100}) {
      for (const auto& p : doc_.profiles) {
        for (const auto& b : bounds) {
          for (const auto& l : links) {
            WorkloadHints hints{b, l};
            ModeRegistry registry;
            try {
              registry = seed_registry(p.id, hints, arch);
            } catch (const Error& e) {
              throw Error(Errc::CatalogInvalid, std::string(to_string(p.id)) + " on " +
                                                    std::string(to_string(arch)) + ": " + e.what());
            }
            if (arbitrate(registry).has_discards()) {
              throw Error(Errc::CatalogInvalid,
                          std::string(to_string(p.id)) + " recipe is not internally conflict-free");
            }
          }
        }
      }
    }
  }

  CalibrationDocument doc_;
};

}  // namespace wpp
