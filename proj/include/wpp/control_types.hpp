#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "wpp/alerts.hpp"
#include "wpp/calibration.hpp"
#include "wpp/fleet.hpp"
#include "wpp/mode_engine.hpp"
#include "wpp/profile.hpp"
#include "wpp/scheduler.hpp"

namespace wpp {

enum class Pathway { InBand, OutOfBand };
enum class ScopeKind { Gpu, Node, Rack, Fleet, Job };
enum class Tier { Tenant, Admin };

constexpr std::string_view to_string(Pathway p) { return p == Pathway::InBand ? "in_band" : "out_of_band"; }
constexpr std::string_view to_string(Role r) { return r == Role::Admin ? "admin" : "tenant"; }
constexpr std::string_view to_string(Tier t) { return t == Tier::Admin ? "admin" : "tenant"; }

constexpr std::string_view to_string(ScopeKind k) {
  switch (k) {
    case ScopeKind::Gpu:   return "gpu";
    case ScopeKind::Node:  return "node";
    case ScopeKind::Rack:  return "rack";
    case ScopeKind::Fleet: return "fleet";
    case ScopeKind::Job:   return "job";
  }
  return "unknown";
}

struct Scope {
  ScopeKind kind = ScopeKind::Gpu;
  std::string id;  // gpu/node/rack/job id, or fleet filter: all | busy | idle

  bool operator==(const Scope&) const = default;
};

struct ApplyRequest {
  Pathway pathway = Pathway::InBand;
  Scope scope;
  std::optional<ProfileId> profile;  // absent clears this pathway's profile
  WorkloadHints hints;

  bool operator==(const ApplyRequest&) const = default;
};

struct TierAssignment {
  ProfileId profile = ProfileId::MaxQTraining;
  WorkloadHints hints;

  bool operator==(const TierAssignment&) const = default;
};

struct DeviceResult {
  std::string gpu;
  EffectiveConfig config;
  std::string report;
};

struct ApplyResult {
  std::uint64_t audit_seq = 0;
  std::vector<DeviceResult> devices;

  bool conflicts() const {
    for (const auto& d : devices) {
      if (d.config.has_discards()) return true;
    }
    return false;
  }
};

struct DemandResponseEvent {
  std::string id;
  double new_cap_watts = 0.0;
  double effective_at = 0.0;  // simulated seconds
  double expires_at = 0.0;
  std::string source;

  bool operator==(const DemandResponseEvent&) const = default;
};

enum class EventPhase { Pending, Active, Expired };

constexpr std::string_view to_string(EventPhase p) {
  switch (p) {
    case EventPhase::Pending: return "pending";
    case EventPhase::Active:  return "active";
    case EventPhase::Expired: return "expired";
  }
  return "unknown";
}

struct EventState {
  DemandResponseEvent event;
  EventPhase phase = EventPhase::Pending;
  double prior_cap = 0.0;
  bool noop = false;
  bool switched = false;
  bool cap_unreachable = false;
  int suspended_nodes = 0;
  int switched_gpus = 0;
  std::map<int, std::optional<TierAssignment>> saved_admin;
  std::vector<std::string> actions;
};

enum class JobState { Queued, Running, Finished, Rejected };

constexpr std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::Queued:   return "queued";
    case JobState::Running:  return "running";
    case JobState::Finished: return "finished";
    case JobState::Rejected: return "rejected";
  }
  return "unknown";
}

struct AdmissionDecision {
  bool admitted = false;
  bool queued = false;
  std::string reason;
  double deficit_watts = 0.0;
  double projected_job_watts = 0.0;
  double default_job_watts = 0.0;
  bool profile_enabled_admission = false;
};

struct SavingsFactors {
  double perf_factor = 1.0;
  double gpu_power_factor = 1.0;
  double system_power_factor = 1.0;
  double energy_saving = 0.0;
};

struct JobRecord {
  std::string id;
  JobSpec spec;
  std::string owner;
  WorkloadClass workload = WorkloadClass::AiTraining;
  std::string profile;  // operating point name
  JobState state = JobState::Queued;
  double submitted = 0.0;
  std::optional<double> started;
  std::optional<double> ended;
  std::vector<int> nodes;
  AdmissionDecision admission;
  SavingsFactors expected;
  std::optional<SavingsFactors> actual;
  std::string recommendation;
  double remaining_work_seconds = 0.0;
  double energy_joules = 0.0;
  double gpu_energy_joules = 0.0;
};

struct SavingsReport {
  std::string job_id;
  std::string application;
  std::string profile;
  double runtime_seconds = 0.0;
  double energy_joules = 0.0;
  SavingsFactors expected;
  SavingsFactors actual;
  SavingsFactors delta;
  std::string recommendation;
};

struct JobSubmission {
  std::string job_id;
  JobState state = JobState::Queued;
  AdmissionDecision decision;
};

struct HistoryFilter {
  std::string application;
  std::string profile;
  std::optional<double> from;
  std::optional<double> to;
};

struct AuditRecord {
  std::uint64_t seq = 0;
  double time = 0.0;
  std::string kind;
  Principal actor;
  bool derived = false;
  nlohmann::json request;
  std::vector<std::string> devices;
};

struct TelemetryRecord {
  double time = 0.0;
  std::string timestamp;
  Level level = Level::Facility;
  std::string id;
  double power_watts = 0.0;
  double energy_joules_cum = 0.0;
  std::string active_profile;
};

// Piecewise-constant power between two state changes.
struct Segment {
  double start = 0.0;
  double end = 0.0;
  double cap = 0.0;
  PowerFrame frame;
  std::vector<std::string> gpu_points;
};

}  // namespace wpp
