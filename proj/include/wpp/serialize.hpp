#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "wpp/catalog.hpp"
#include "wpp/control_types.hpp"
#include "wpp/error.hpp"

// JSON mapping for the control-plane data model. Field names here are the
// wire format of the HTTP API, the audit log and snapshots.
namespace wpp {

using json = nlohmann::json;

namespace detail {

template <class T>
void put_opt(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <class T>
std::optional<T> get_opt(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->template get<T>();
}

inline const json& field(const json& j, const char* key) {
  if (!j.is_object()) throw Error(Errc::InvalidRequest, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw Error(Errc::InvalidRequest, std::string("missing field '") + key + "'");
  return *it;
}

template <class E, std::size_t N>
E parse_enum(const json& j, const std::array<E, N>& all, const char* what) {
  const auto text = j.get<std::string>();
  for (auto e : all) {
    if (canonical_name(to_string(e)) == canonical_name(text)) return e;
  }
  throw Error(Errc::InvalidRequest, std::string("unknown ") + what + " '" + text + "'");
}

}  // namespace detail

// enums

inline void to_json(json& j, ProfileId v) { j = std::string(to_string(v)); }
inline void from_json(const json& j, ProfileId& v) { v = profile_from_string(j.get<std::string>()); }

inline void to_json(json& j, WorkloadClass v) { j = std::string(to_string(v)); }
inline void from_json(const json& j, WorkloadClass& v) {
  auto c = parse_workload_class(j.get<std::string>());
  if (!c) throw Error(Errc::InvalidRequest, "unknown workload class '" + j.get<std::string>() + "'");
  v = *c;
}

inline void to_json(json& j, ProfileStatus v) { j = std::string(to_string(v)); }
inline void from_json(const json& j, ProfileStatus& v) {
  auto s = parse_status(j.get<std::string>());
  if (!s) throw Error(Errc::InvalidRequest, "unknown status '" + j.get<std::string>() + "'");
  v = *s;
}

inline void to_json(json& j, Pathway v) { j = std::string(to_string(v)); }
inline void from_json(const json& j, Pathway& v) {
  v = detail::parse_enum(j, std::array{Pathway::InBand, Pathway::OutOfBand}, "pathway");
}

inline void to_json(json& j, ScopeKind v) { j = std::string(to_string(v)); }
inline void from_json(const json& j, ScopeKind& v) {
  v = detail::parse_enum(
      j, std::array{ScopeKind::Gpu, ScopeKind::Node, ScopeKind::Rack, ScopeKind::Fleet, ScopeKind::Job}, "scope");
}

inline void to_json(json& j, Role v) { j = std::string(to_string(v)); }
inline void from_json(const json& j, Role& v) { v = detail::parse_enum(j, std::array{Role::Admin, Role::Tenant}, "role"); }

inline void to_json(json& j, JobState v) { j = std::string(to_string(v)); }
inline void from_json(const json& j, JobState& v) {
  v = detail::parse_enum(j, std::array{JobState::Queued, JobState::Running, JobState::Finished, JobState::Rejected},
                         "job state");
}

inline void to_json(json& j, EventPhase v) { j = std::string(to_string(v)); }
inline void from_json(const json& j, EventPhase& v) {
  v = detail::parse_enum(j, std::array{EventPhase::Pending, EventPhase::Active, EventPhase::Expired}, "phase");
}

inline void to_json(json& j, Level v) { j = std::string(to_string(v)); }
inline void from_json(const json& j, Level& v) {
  auto l = parse_level(j.get<std::string>());
  if (!l) throw Error(Errc::InvalidRequest, "unknown level '" + j.get<std::string>() + "'");
  v = *l;
}

// hints are a list of tokens on the wire
inline void to_json(json& j, const WorkloadHints& h) {
  j = json::array();
  if (h.boundedness) j.push_back(std::string(to_string(*h.boundedness)));
  if (h.interconnect) j.push_back(std::string(to_string(*h.interconnect)));
}
inline void from_json(const json& j, WorkloadHints& h) {
  h = {};
  if (j.is_null()) return;
  if (!j.is_array()) throw Error(Errc::InvalidRequest, "hints must be a list");
  for (const auto& t : j) {
    if (!add_hint(h, t.get<std::string>())) throw Error(Errc::InvalidRequest, "bad or repeated hint " + t.dump());
  }
}

inline void to_json(json& j, const Principal& p) { j = {{"role", p.role}, {"identity", p.identity}}; }
inline void from_json(const json& j, Principal& p) {
  p.role = detail::field(j, "role").get<Role>();
  p.identity = j.value("identity", "");
}

// mode engine

inline void to_json(json& j, const ConfigEntry& e) {
  j = {{"value", detail::knob_value_to_json(e.value)}, {"mode", e.mode_id}};
}
inline void from_json(const json& j, ConfigEntry& e) {
  e.value = detail::knob_value_from_json(detail::field(j, "value"), "entry");
  e.mode_id = detail::field(j, "mode").get<std::string>();
}

inline void to_json(json& j, const DiscardRecord& d) { j = {{"mode", d.mode_id}, {"lost_to", d.lost_to}}; }
inline void from_json(const json& j, DiscardRecord& d) {
  d.mode_id = detail::field(j, "mode").get<std::string>();
  d.lost_to = detail::field(j, "lost_to").get<std::string>();
}

inline void to_json(json& j, const OverlapRecord& o) {
  j = {{"knob", o.knob_id}, {"loser", o.loser}, {"winner", o.winner}};
}
inline void from_json(const json& j, OverlapRecord& o) {
  o.knob_id = detail::field(j, "knob").get<std::string>();
  o.loser = detail::field(j, "loser").get<std::string>();
  o.winner = detail::field(j, "winner").get<std::string>();
}

inline void to_json(json& j, const EffectiveConfig& c) {
  j = {{"entries", c.entries}, {"discarded", c.discarded}, {"overlaps", c.overlaps}, {"active_modes", c.active_modes}};
}
inline void from_json(const json& j, EffectiveConfig& c) {
  c.entries = detail::field(j, "entries").get<std::map<std::string, ConfigEntry>>();
  c.discarded = detail::field(j, "discarded").get<std::vector<DiscardRecord>>();
  c.overlaps = detail::field(j, "overlaps").get<std::vector<OverlapRecord>>();
  c.active_modes = detail::field(j, "active_modes").get<std::vector<std::string>>();
}

inline void to_json(json& j, const PriorityRow& r) {
  j = {{"mode", r.mode_id}, {"priority", r.priority}, {"conflicts", r.conflicts}};
}
inline void from_json(const json& j, PriorityRow& r) {
  r.mode_id = detail::field(j, "mode").get<std::string>();
  r.priority = detail::field(j, "priority").get<int>();
  r.conflicts = detail::field(j, "conflicts").get<std::set<std::string>>();
}

inline void to_json(json& j, const ProfileListing& p) {
  j = {{"id", p.id}, {"status", p.status}, {"description", p.description}};
}
inline void from_json(const json& j, ProfileListing& p) {
  p.id = detail::field(j, "id").get<ProfileId>();
  p.status = detail::field(j, "status").get<ProfileStatus>();
  p.description = j.value("description", "");
}

// requests

inline void to_json(json& j, const Scope& s) { j = {{"kind", s.kind}, {"id", s.id}}; }
inline void from_json(const json& j, Scope& s) {
  s.kind = detail::field(j, "kind").get<ScopeKind>();
  s.id = j.value("id", "");
}

// "profile": null or "DEFAULT" clears the pathway.
inline void to_json(json& j, const ApplyRequest& r) {
  j = {{"pathway", r.pathway}, {"scope", r.scope}, {"hints", r.hints}};
  j["profile"] = r.profile ? json(*r.profile) : json(nullptr);
}
inline void from_json(const json& j, ApplyRequest& r) {
  r.pathway = j.contains("pathway") ? j.at("pathway").get<Pathway>() : Pathway::InBand;
  r.scope = detail::field(j, "scope").get<Scope>();
  const auto& p = detail::field(j, "profile");
  r.profile = p.is_null() || canonical_name(p.get<std::string>()) == "DEFAULT"
                  ? std::nullopt
                  : std::optional<ProfileId>(p.get<ProfileId>());
  r.hints = j.contains("hints") ? j.at("hints").get<WorkloadHints>() : WorkloadHints{};
}

inline void to_json(json& j, const TierAssignment& t) { j = {{"profile", t.profile}, {"hints", t.hints}}; }
inline void from_json(const json& j, TierAssignment& t) {
  t.profile = detail::field(j, "profile").get<ProfileId>();
  t.hints = j.contains("hints") ? j.at("hints").get<WorkloadHints>() : WorkloadHints{};
}

inline void to_json(json& j, const DeviceResult& d) {
  j = {{"gpu", d.gpu}, {"config", d.config}, {"report", d.report}};
}
inline void from_json(const json& j, DeviceResult& d) {
  d.gpu = detail::field(j, "gpu").get<std::string>();
  d.config = detail::field(j, "config").get<EffectiveConfig>();
  d.report = j.value("report", "");
}

inline void to_json(json& j, const ApplyResult& r) {
  j = {{"audit_seq", r.audit_seq}, {"conflicts", r.conflicts()}, {"devices", r.devices}};
}
inline void from_json(const json& j, ApplyResult& r) {
  r.audit_seq = j.value("audit_seq", std::uint64_t{0});
  r.devices = detail::field(j, "devices").get<std::vector<DeviceResult>>();
}

inline void to_json(json& j, const DemandResponseEvent& e) {
  j = {{"id", e.id},
       {"new_cap_watts", e.new_cap_watts},
       {"effective_at", e.effective_at},
       {"expires_at", e.expires_at},
       {"source", e.source}};
}
inline void from_json(const json& j, DemandResponseEvent& e) {
  e.id = j.value("id", "");
  e.new_cap_watts = detail::field(j, "new_cap_watts").get<double>();
  e.effective_at = detail::field(j, "effective_at").get<double>();
  e.expires_at = detail::field(j, "expires_at").get<double>();
  e.source = j.value("source", "");
}

inline void to_json(json& j, const EventState& s) {
  json saved = json::array();
  for (const auto& [gpu, tier] : s.saved_admin) {
    saved.push_back({{"gpu", gpu}, {"admin", tier ? json(*tier) : json(nullptr)}});
  }
  j = {{"event", s.event},
       {"phase", s.phase},
       {"prior_cap_watts", s.prior_cap},
       {"noop", s.noop},
       {"switched", s.switched},
       {"cap_unreachable", s.cap_unreachable},
       {"suspended_nodes", s.suspended_nodes},
       {"switched_gpus", s.switched_gpus},
       {"saved_admin", saved},
       {"actions", s.actions}};
}
inline void from_json(const json& j, EventState& s) {
  s.event = detail::field(j, "event").get<DemandResponseEvent>();
  s.phase = detail::field(j, "phase").get<EventPhase>();
  s.prior_cap = j.value("prior_cap_watts", 0.0);
  s.noop = j.value("noop", false);
  s.switched = j.value("switched", false);
  s.cap_unreachable = j.value("cap_unreachable", false);
  s.suspended_nodes = j.value("suspended_nodes", 0);
  s.switched_gpus = j.value("switched_gpus", 0);
  s.saved_admin.clear();
  for (const auto& e : j.value("saved_admin", json::array())) {
    const auto& a = e.at("admin");
    s.saved_admin[e.at("gpu").get<int>()] =
        a.is_null() ? std::nullopt : std::optional<TierAssignment>(a.get<TierAssignment>());
  }
  s.actions = j.value("actions", std::vector<std::string>{});
}

inline void to_json(json& j, const JobSpec& s) {
  j = {{"command", s.command},
       {"partition", s.partition},
       {"power_profile", s.profile ? json(*s.profile) : json(nullptr)},
       {"nodes", s.nodes},
       {"ntasks_per_node", s.ntasks_per_node},
       {"application", s.application},
       {"workload_class", s.workload ? json(*s.workload) : json(nullptr)},
       {"hints", s.hints},
       {"baseline_seconds", s.baseline_seconds},
       {"script", s.script}};
}
inline void from_json(const json& j, JobSpec& s) {
  if (!j.is_object()) throw Error(Errc::InvalidRequest, "job spec must be an object");
  s = JobSpec{};
  s.command = j.value("command", s.command);
  s.partition = j.value("partition", "");
  if (auto p = detail::get_opt<std::string>(j, "power_profile")) s.profile = parse_profile_name(*p);
  s.nodes = j.value("nodes", 1);
  s.ntasks_per_node = j.value("ntasks_per_node", 1);
  if (s.nodes < 1 || s.ntasks_per_node < 1) throw Error(Errc::InvalidRequest, "nodes and ntasks_per_node must be >= 1");
  s.application = j.value("application", "");
  if (j.contains("workload_class") && !j.at("workload_class").is_null()) s.workload = j.at("workload_class").get<WorkloadClass>();
  if (j.contains("hints")) s.hints = j.at("hints").get<WorkloadHints>();
  s.baseline_seconds = j.value("baseline_seconds", s.baseline_seconds);
  if (s.baseline_seconds <= 0) throw Error(Errc::InvalidRequest, "baseline_seconds must be positive");
  s.script = j.value("script", "");
}

inline void to_json(json& j, const AdmissionDecision& d) {
  j = {{"admitted", d.admitted},
       {"queued", d.queued},
       {"reason", d.reason},
       {"deficit_watts", d.deficit_watts},
       {"projected_job_watts", d.projected_job_watts},
       {"default_job_watts", d.default_job_watts},
       {"profile_enabled_admission", d.profile_enabled_admission}};
}
inline void from_json(const json& j, AdmissionDecision& d) {
  d.admitted = j.value("admitted", false);
  d.queued = j.value("queued", false);
  d.reason = j.value("reason", "");
  d.deficit_watts = j.value("deficit_watts", 0.0);
  d.projected_job_watts = j.value("projected_job_watts", 0.0);
  d.default_job_watts = j.value("default_job_watts", 0.0);
  d.profile_enabled_admission = j.value("profile_enabled_admission", false);
}

inline void to_json(json& j, const SavingsFactors& f) {
  j = {{"perf_factor", f.perf_factor},
       {"gpu_power_factor", f.gpu_power_factor},
       {"system_power_factor", f.system_power_factor},
       {"energy_saving", f.energy_saving}};
}
inline void from_json(const json& j, SavingsFactors& f) {
  f.perf_factor = detail::field(j, "perf_factor").get<double>();
  f.gpu_power_factor = detail::field(j, "gpu_power_factor").get<double>();
  f.system_power_factor = detail::field(j, "system_power_factor").get<double>();
  f.energy_saving = detail::field(j, "energy_saving").get<double>();
}

inline void to_json(json& j, const JobRecord& r) {
  j = {{"id", r.id},
       {"spec", r.spec},
       {"owner", r.owner},
       {"workload_class", r.workload},
       {"profile", r.profile},
       {"state", r.state},
       {"submitted", r.submitted},
       {"started", r.started ? json(*r.started) : json(nullptr)},
       {"ended", r.ended ? json(*r.ended) : json(nullptr)},
       {"nodes", r.nodes},
       {"admission", r.admission},
       {"expected", r.expected},
       {"actual", r.actual ? json(*r.actual) : json(nullptr)},
       {"recommendation", r.recommendation},
       {"remaining_work_seconds", r.remaining_work_seconds},
       {"energy_joules", r.energy_joules},
       {"gpu_energy_joules", r.gpu_energy_joules}};
}
inline void from_json(const json& j, JobRecord& r) {
  r.id = detail::field(j, "id").get<std::string>();
  r.spec = detail::field(j, "spec").get<JobSpec>();
  r.owner = j.value("owner", "");
  r.workload = detail::field(j, "workload_class").get<WorkloadClass>();
  r.profile = detail::field(j, "profile").get<std::string>();
  r.state = detail::field(j, "state").get<JobState>();
  r.submitted = j.value("submitted", 0.0);
  r.started = detail::get_opt<double>(j, "started");
  r.ended = detail::get_opt<double>(j, "ended");
  r.nodes = j.value("nodes", std::vector<int>{});
  r.admission = j.value("admission", json::object()).get<AdmissionDecision>();
  r.expected = detail::field(j, "expected").get<SavingsFactors>();
  r.actual = detail::get_opt<SavingsFactors>(j, "actual");
  r.recommendation = j.value("recommendation", "");
  r.remaining_work_seconds = j.value("remaining_work_seconds", 0.0);
  r.energy_joules = j.value("energy_joules", 0.0);
  r.gpu_energy_joules = j.value("gpu_energy_joules", 0.0);
}

inline void to_json(json& j, const SavingsReport& r) {
  j = {{"job_id", r.job_id},
       {"application", r.application},
       {"profile", r.profile},
       {"runtime_seconds", r.runtime_seconds},
       {"energy_joules", r.energy_joules},
       {"expected", r.expected},
       {"actual", r.actual},
       {"delta", r.delta},
       {"recommendation", r.recommendation}};
}
inline void from_json(const json& j, SavingsReport& r) {
  r.job_id = detail::field(j, "job_id").get<std::string>();
  r.application = j.value("application", "");
  r.profile = detail::field(j, "profile").get<std::string>();
  r.runtime_seconds = detail::field(j, "runtime_seconds").get<double>();
  r.energy_joules = detail::field(j, "energy_joules").get<double>();
  r.expected = detail::field(j, "expected").get<SavingsFactors>();
  r.actual = detail::field(j, "actual").get<SavingsFactors>();
  r.delta = detail::field(j, "delta").get<SavingsFactors>();
  r.recommendation = j.value("recommendation", "");
}

inline void to_json(json& j, const JobSubmission& s) {
  j = {{"job_id", s.job_id}, {"state", s.state}, {"decision", s.decision}};
}
inline void from_json(const json& j, JobSubmission& s) {
  s.job_id = detail::field(j, "job_id").get<std::string>();
  s.state = detail::field(j, "state").get<JobState>();
  s.decision = detail::field(j, "decision").get<AdmissionDecision>();
}

inline void to_json(json& j, const AlertRule& r) {
  j = {{"id", r.id}, {"metric", r.metric}, {"threshold_fraction", r.threshold_fraction}, {"scope", r.scope}};
}
inline void from_json(const json& j, AlertRule& r) {
  r.id = j.value("id", "");
  r.metric = j.value("metric", std::string(kPerfDegradation));
  r.threshold_fraction = detail::field(j, "threshold_fraction").get<double>();
  r.scope = j.value("scope", "*");
}

inline void to_json(json& j, const Alert& a) {
  j = {{"rule_id", a.rule_id},
       {"job_id", a.job_id},
       {"profile", a.profile},
       {"degradation", a.degradation},
       {"threshold", a.threshold},
       {"time", a.time}};
}
inline void from_json(const json& j, Alert& a) {
  a.rule_id = detail::field(j, "rule_id").get<std::string>();
  a.job_id = detail::field(j, "job_id").get<std::string>();
  a.profile = j.value("profile", "");
  a.degradation = detail::field(j, "degradation").get<double>();
  a.threshold = detail::field(j, "threshold").get<double>();
  a.time = j.value("time", 0.0);
}

inline void to_json(json& j, const AuditRecord& r) {
  j = {{"seq", r.seq},
       {"time", r.time},
       {"kind", r.kind},
       {"actor", r.actor},
       {"derived", r.derived},
       {"request", r.request},
       {"devices", r.devices}};
}
inline void from_json(const json& j, AuditRecord& r) {
  r.seq = detail::field(j, "seq").get<std::uint64_t>();
  r.time = detail::field(j, "time").get<double>();
  r.kind = detail::field(j, "kind").get<std::string>();
  r.actor = detail::field(j, "actor").get<Principal>();
  r.derived = j.value("derived", false);
  r.request = j.value("request", json(nullptr));
  r.devices = j.value("devices", std::vector<std::string>{});
}

// One telemetry line. Only the six export fields go on the wire.
inline void to_json(json& j, const TelemetryRecord& t) {
  j = {{"timestamp", t.timestamp},
       {"level", t.level},
       {"id", t.id},
       {"power_watts", t.power_watts},
       {"energy_joules_cum", t.energy_joules_cum},
       {"active_profile", t.active_profile}};
}
inline void from_json(const json& j, TelemetryRecord& t) {
  t.timestamp = detail::field(j, "timestamp").get<std::string>();
  t.level = detail::field(j, "level").get<Level>();
  t.id = detail::field(j, "id").get<std::string>();
  t.power_watts = detail::field(j, "power_watts").get<double>();
  t.energy_joules_cum = detail::field(j, "energy_joules_cum").get<double>();
  t.active_profile = detail::field(j, "active_profile").get<std::string>();
}

inline void to_json(json& j, const Segment& s) {
  j = {{"start", s.start},
       {"end", s.end},
       {"cap", s.cap},
       {"gpu_watts", s.frame.gpu_watts},
       {"node_other_watts", s.frame.node_other_watts},
       {"gpu_points", s.gpu_points}};
}
inline void from_json(const json& j, Segment& s) {
  s.start = j.at("start").get<double>();
  s.end = j.at("end").get<double>();
  s.cap = j.at("cap").get<double>();
  s.frame.gpu_watts = j.at("gpu_watts").get<std::vector<double>>();
  s.frame.node_other_watts = j.at("node_other_watts").get<std::vector<double>>();
  s.gpu_points = j.at("gpu_points").get<std::vector<std::string>>();
}

}  // namespace wpp
