#pragma once

#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>

#include "wpp/error.hpp"

namespace wpp {

enum class WorkloadClass { AiTraining, AiInference, HpcCompute, HpcMemory };
enum class Goal { MaxQ, MaxP };
enum class Boundedness { MemoryBound, ComputeBound };
enum class Interconnect { NvlinkHeavy, NvlinkLight };

struct WorkloadHints {
  std::optional<Boundedness> boundedness;
  std::optional<Interconnect> interconnect;

  bool empty() const { return !boundedness && !interconnect; }
  bool operator==(const WorkloadHints&) const = default;
};

enum class ProfileId {
  MaxPTraining,
  MaxPInference,
  MaxQTraining,
  MaxQInference,
  MaxPHpcCompute,
  MaxPHpcMemory,
  MaxQHpcCompute,
  MaxQHpcMemory,
};

enum class ProfileStatus { Released, InDevelopment };

// Catalog order: released AI profiles first, then the HPC set.
inline constexpr std::array<ProfileId, 8> kAllProfiles = {
    ProfileId::MaxPTraining,   ProfileId::MaxPInference, ProfileId::MaxQTraining,
    ProfileId::MaxQInference,  ProfileId::MaxPHpcCompute, ProfileId::MaxPHpcMemory,
    ProfileId::MaxQHpcCompute, ProfileId::MaxQHpcMemory,
};

inline constexpr std::array<WorkloadClass, 4> kAllClasses = {
    WorkloadClass::AiTraining, WorkloadClass::AiInference, WorkloadClass::HpcCompute,
    WorkloadClass::HpcMemory};

constexpr std::string_view to_string(ProfileId id) {
  switch (id) {
    case ProfileId::MaxPTraining:   return "MAX_P_TRAINING";
    case ProfileId::MaxPInference:  return "MAX_P_INFERENCE";
    case ProfileId::MaxQTraining:   return "MAX_Q_TRAINING";
    case ProfileId::MaxQInference:  return "MAX_Q_INFERENCE";
    case ProfileId::MaxPHpcCompute: return "MAX_P_HPC_COMPUTE";
    case ProfileId::MaxPHpcMemory:  return "MAX_P_HPC_MEMORY";
    case ProfileId::MaxQHpcCompute: return "MAX_Q_HPC_COMPUTE";
    case ProfileId::MaxQHpcMemory:  return "MAX_Q_HPC_MEMORY";
  }
  return "UNKNOWN";
}

constexpr std::string_view to_string(WorkloadClass c) {
  switch (c) {
    case WorkloadClass::AiTraining:  return "ai_training";
    case WorkloadClass::AiInference: return "ai_inference";
    case WorkloadClass::HpcCompute:  return "hpc_compute";
    case WorkloadClass::HpcMemory:   return "hpc_memory";
  }
  return "unknown";
}

constexpr std::string_view to_string(Goal g) { return g == Goal::MaxQ ? "max_q" : "max_p"; }

constexpr std::string_view to_string(ProfileStatus s) {
  return s == ProfileStatus::Released ? "released" : "in_development";
}

constexpr std::string_view to_string(Boundedness b) {
  return b == Boundedness::MemoryBound ? "memory_bound" : "compute_bound";
}

constexpr std::string_view to_string(Interconnect i) {
  return i == Interconnect::NvlinkHeavy ? "nvlink_heavy" : "nvlink_light";
}

// Canonical form used for name matching: upper case, '-' folded to '_'.
inline std::string canonical_name(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    out.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

inline std::optional<ProfileId> parse_profile_id(std::string_view text) {
  const std::string canon = canonical_name(text);
  for (auto id : kAllProfiles) {
    if (to_string(id) == canon) return id;
  }
  return std::nullopt;
}

inline ProfileId profile_from_string(std::string_view text) {
  auto id = parse_profile_id(text);
  if (!id) throw Error(Errc::UnknownProfile, std::string(text));
  return *id;
}

inline std::optional<WorkloadClass> parse_workload_class(std::string_view text) {
  const std::string canon = canonical_name(text);
  for (auto c : kAllClasses) {
    if (canonical_name(to_string(c)) == canon) return c;
  }
  return std::nullopt;
}

inline std::optional<ProfileStatus> parse_status(std::string_view text) {
  const std::string canon = canonical_name(text);
  if (canon == "RELEASED") return ProfileStatus::Released;
  if (canon == "IN_DEVELOPMENT") return ProfileStatus::InDevelopment;
  return std::nullopt;
}

// Parses one hint token into `hints`; false when the token is not a hint or
// the slot is already taken.
inline bool add_hint(WorkloadHints& hints, std::string_view token) {
  const std::string canon = canonical_name(token);
  if (canon == "MEMORY_BOUND" || canon == "COMPUTE_BOUND") {
    if (hints.boundedness) return false;
    hints.boundedness = canon == "MEMORY_BOUND" ? Boundedness::MemoryBound : Boundedness::ComputeBound;
    return true;
  }
  if (canon == "NVLINK_HEAVY" || canon == "NVLINK_LIGHT") {
    if (hints.interconnect) return false;
    hints.interconnect = canon == "NVLINK_HEAVY" ? Interconnect::NvlinkHeavy : Interconnect::NvlinkLight;
    return true;
  }
  return false;
}

constexpr Goal goal_of(ProfileId id) {
  switch (id) {
    case ProfileId::MaxQTraining:
    case ProfileId::MaxQInference:
    case ProfileId::MaxQHpcCompute:
    case ProfileId::MaxQHpcMemory: return Goal::MaxQ;
    default: return Goal::MaxP;
  }
}

constexpr WorkloadClass class_of(ProfileId id) {
  switch (id) {
    case ProfileId::MaxPTraining:
    case ProfileId::MaxQTraining:   return WorkloadClass::AiTraining;
    case ProfileId::MaxPInference:
    case ProfileId::MaxQInference:  return WorkloadClass::AiInference;
    case ProfileId::MaxPHpcCompute:
    case ProfileId::MaxQHpcCompute: return WorkloadClass::HpcCompute;
    case ProfileId::MaxPHpcMemory:
    case ProfileId::MaxQHpcMemory:  return WorkloadClass::HpcMemory;
  }
  return WorkloadClass::AiTraining;
}

constexpr bool is_hpc(WorkloadClass c) {
  return c == WorkloadClass::HpcCompute || c == WorkloadClass::HpcMemory;
}

// Total over (class, goal, hints). AI classes ignore hints for family
// selection; HPC classes let the boundedness hint override the class default.
constexpr ProfileId resolve_profile(WorkloadClass cls, Goal goal, const WorkloadHints& hints) {
  const bool max_q = goal == Goal::MaxQ;
  switch (cls) {
    case WorkloadClass::AiTraining:
      return max_q ? ProfileId::MaxQTraining : ProfileId::MaxPTraining;
    case WorkloadClass::AiInference:
      return max_q ? ProfileId::MaxQInference : ProfileId::MaxPInference;
    case WorkloadClass::HpcCompute:
    case WorkloadClass::HpcMemory: {
      bool memory = cls == WorkloadClass::HpcMemory;
      if (hints.boundedness) memory = *hints.boundedness == Boundedness::MemoryBound;
      if (memory) return max_q ? ProfileId::MaxQHpcMemory : ProfileId::MaxPHpcMemory;
      return max_q ? ProfileId::MaxQHpcCompute : ProfileId::MaxPHpcCompute;
    }
  }
  return ProfileId::MaxQTraining;
}

}  // namespace wpp
