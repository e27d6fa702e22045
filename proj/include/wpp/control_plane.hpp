#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "wpp/alerts.hpp"
#include "wpp/catalog.hpp"
#include "wpp/control_types.hpp"
#include "wpp/fleet.hpp"
#include "wpp/mode_engine.hpp"
#include "wpp/power_model.hpp"
#include "wpp/response.hpp"
#include "wpp/scheduler.hpp"
#include "wpp/serialize.hpp"
#include "wpp/simulate.hpp"
#include "wpp/time.hpp"

namespace wpp {

// Admin modes sit this far above tenant modes so admin settings win every
// conflict and overlap on a device.
inline constexpr int kAdminPriorityOffset = 1000;
inline constexpr std::string_view kTenantPrefix = "tenant/";
inline constexpr std::string_view kAdminPrefix = "admin/";
inline constexpr std::string_view kSuspendedPoint = "SUSPENDED";
inline constexpr std::string_view kMixedPoint = "MIXED";

inline constexpr double kRecommendMissFraction = 0.02;
inline constexpr double kPerfLossGuidance = 0.03;

inline Principal system_principal() { return {Role::Admin, "system"}; }

struct ControlPlaneOptions {
  std::optional<FleetConfig> fleet{};               // replaces the calibration file's fleet section
  std::optional<double> facility_cap_watts{};
  std::optional<double> noise_fraction{};
  std::optional<ResponseTable> simulation_response{};  // ground truth the simulator runs on
};

class ControlPlane {
 public:
  using AuditSink = std::function<void(const AuditRecord&)>;
  using JobSink = std::function<void(const JobRecord&)>;

  explicit ControlPlane(ProfileCatalog catalog, ControlPlaneOptions options = {})
      : catalog_(std::move(catalog)), options_(std::move(options)) {
    fleet_ = options_.fleet.value_or(catalog_.fleet());
    if (options_.facility_cap_watts) fleet_.facility_cap_watts = options_.facility_cap_watts;
    if (options_.noise_fraction) fleet_.noise_fraction = *options_.noise_fraction;
    if (!(fleet_.tick_seconds > 0.0)) throw Error(Errc::InvalidRequest, "tick must be positive");
    if (!(fleet_.noise_fraction >= 0.0 && fleet_.noise_fraction < 0.5))
      throw Error(Errc::InvalidRequest, "noise fraction must lie in [0, 0.5)");
    if (fleet_.gpu_idle_watts < 0.0) throw Error(Errc::InvalidRequest, "idle power must be >= 0");
    h_ = Hierarchy::from(fleet_);
    model_ = power_model_for(fleet_);
    dict_ = catalog_.knobs(fleet_.arch);
    clock_ = SimClock(fleet_.epoch);
    baseline_draw_ = h_.nodes() * model_.baseline_node_watts();
    cap_ = fleet_.facility_cap_watts.value_or(baseline_draw_);
    if (!(cap_ > 0.0)) throw Error(Errc::InvalidRequest, "facility cap must be positive");
    reset_devices();
    refresh_segment();
  }

  // ---- reads ------------------------------------------------------------

  const ProfileCatalog& catalog() const { return catalog_; }
  const FleetConfig& fleet() const { return fleet_; }
  const Hierarchy& hierarchy() const { return h_; }
  const NodePowerModel& power_model() const { return model_; }
  const SimClock& clock() const { return clock_; }
  double now() const { return now_; }
  double cap() const { return cap_; }
  double baseline_draw() const { return baseline_draw_; }

  const ModeRegistry& registry(int gpu) const { return registries_.at(gpu); }
  const EffectiveConfig& effective_config(int gpu) const { return configs_.at(gpu); }
  const GpuState& gpu_state(int gpu) const { return states_.at(gpu); }
  std::vector<PriorityRow> priorities(int gpu) const { return query_priorities(registries_.at(gpu)); }
  const std::optional<TierAssignment>& tier(int gpu, Tier t) const {
    return t == Tier::Admin ? admin_.at(gpu) : tenant_.at(gpu);
  }
  std::string gpu_point(int gpu) const {
    if (admin_[gpu]) return std::string(to_string(admin_[gpu]->profile));
    if (tenant_[gpu]) return std::string(to_string(tenant_[gpu]->profile));
    return std::string(kDefaultPoint);
  }
  bool node_suspended(int node) const { return suspended_.at(node); }
  std::optional<std::string> node_job(int node) const {
    const int j = node_job_.at(node);
    if (j < 0) return std::nullopt;
    return jobs_[j].id;
  }

  // Resolves a GPU id ("gpu3") or bare index ("3"); throws UnknownScope.
  int gpu_index(const std::string& id) const {
    if (!id.empty() && id.find_first_not_of("0123456789") == std::string::npos && id.size() < 9) {
      const int i = std::stoi(id);
      if (i < h_.gpus()) return i;
    } else {
      try {
        return h_.index_of(Level::Gpu, id);
      } catch (const Error&) {
      }
    }
    throw Error(Errc::UnknownScope, "no GPU '" + id + "'");
  }

  const PowerFrame& current_frame() const { return segments_.back().frame; }
  double facility_power() const { return rollup(current_frame(), h_, Level::Facility)[0]; }
  // Draw without measurement noise; admission and cap enforcement use this.
  double projected_facility_power() const { return sum(node_powers(suspended_)); }

  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<AuditRecord>& audit_log() const { return audit_; }
  const std::vector<EventState>& events() const { return events_; }
  const std::vector<AlertRule>& alert_rules() const { return rules_; }
  const std::vector<Alert>& alerts() const { return alerts_.alerts(); }
  std::vector<JobRecord> jobs() const { return jobs_; }
  std::uint64_t last_audit_seq() const { return next_seq_ - 1; }

  const JobRecord& job(const std::string& id) const { return jobs_.at(job_index(id)); }

  const EventState& event(const std::string& id) const {
    for (const auto& e : events_) {
      if (e.event.id == id) return e;
    }
    throw Error(Errc::InvalidEvent, "no event '" + id + "'");
  }

  const EventState* active_event() const {
    for (const auto& e : events_) {
      if (e.phase == EventPhase::Active) return &e;
    }
    return nullptr;
  }

  void set_audit_sink(AuditSink sink) { audit_sink_ = std::move(sink); }
  void set_job_sink(JobSink sink) { job_sink_ = std::move(sink); }

  // ---- profile application ------------------------------------------------

  ApplyResult apply(const ApplyRequest& req, const Principal& who) {
    const auto gpus = resolve_scope(req, who);
    if (req.profile) catalog_.profile(*req.profile);
    const Tier t = req.pathway == Pathway::OutOfBand ? Tier::Admin : Tier::Tenant;
    std::optional<TierAssignment> assignment;
    if (req.profile) assignment = TierAssignment{*req.profile, req.hints};

    for (int g : gpus) {
      set_tier(g, t, assignment);
      // An explicit admin choice outlives any running event.
      if (t == Tier::Admin) {
        for (auto& e : events_) {
          if (e.phase == EventPhase::Active) e.saved_admin.erase(g);
        }
      }
    }
    ApplyResult result;
    std::vector<std::string> ids;
    for (int g : gpus) {
      result.devices.push_back({Hierarchy::gpu_id(g), configs_[g], explain(configs_[g])});
      ids.push_back(Hierarchy::gpu_id(g));
    }
    result.audit_seq = record("apply", who, req, ids);
    settle();
    return result;
  }

  // ---- demand response ----------------------------------------------------

  EventState demand_response(DemandResponseEvent ev, const Principal& who) {
    if (who.role != Role::Admin) throw Error(Errc::Unauthorized, "demand response requires the admin role");
    if (!(ev.new_cap_watts > 0.0) || !std::isfinite(ev.new_cap_watts))
      throw Error(Errc::InvalidEvent, "new_cap_watts must be positive");
    if (!(ev.effective_at < ev.expires_at)) throw Error(Errc::InvalidEvent, "effective_at must precede expires_at");
    if (!(ev.expires_at > now_)) throw Error(Errc::InvalidEvent, "event already expired");
    const json original = ev;
    ev.effective_at = std::max(ev.effective_at, now_);
    if (ev.id.empty()) ev.id = "dr-" + std::to_string(++event_counter_);
    for (const auto& e : events_) {
      if (e.event.id == ev.id) throw Error(Errc::InvalidEvent, "duplicate event id " + ev.id);
      if (e.phase != EventPhase::Expired && ev.effective_at < e.event.expires_at &&
          e.event.effective_at < ev.expires_at) {
        throw Error(Errc::OverlappingEvent, ev.id + " overlaps " + e.event.id);
      }
    }
    EventState s;
    s.event = ev;
    events_.push_back(s);
    record("demand-response", who, original, {});
    settle();
    return event(ev.id);
  }

  // ---- alerts -------------------------------------------------------------

  AlertRule add_alert_rule(AlertRule rule, const Principal& who) {
    if (who.role != Role::Admin) throw Error(Errc::Unauthorized, "alert rules require the admin role");
    validate_rule(rule);
    const json original = rule;
    if (rule.id.empty()) rule.id = "rule-" + std::to_string(++rule_counter_);
    for (const auto& r : rules_) {
      if (r.id == rule.id) throw Error(Errc::InvalidRequest, "duplicate rule id " + rule.id);
    }
    rules_.push_back(rule);
    record("alert-rule", who, original, {});
    settle();
    return rule;
  }

  // ---- jobs ---------------------------------------------------------------

  AdmissionDecision validate(const JobSpec& spec) const { return decide(spec, true); }

  JobSubmission submit(const JobSpec& spec, const Principal& who) {
    JobRecord r = make_record(spec, who.identity);
    const ResponseEntry row = expected_row(r);
    model_.check(row);
    r.expected = factors_of(row);
    r.admission = validate(spec);
    r.id = "job-" + std::to_string(++job_counter_);
    const bool admitted = r.admission.admitted;
    const bool queued = r.admission.queued;
    r.state = admitted || queued ? JobState::Queued : JobState::Rejected;  // start_job moves it on
    jobs_.push_back(r);
    const int idx = static_cast<int>(jobs_.size()) - 1;
    record("submit", who, spec, {});
    if (admitted) {
      start_job(idx);
    } else if (queued) {
      queue_.push_back(idx);
    }
    settle();
    return {jobs_[idx].id, jobs_[idx].state, jobs_[idx].admission};
  }

  // Finished record from elsewhere (history import). No devices touched.
  void import_history(JobRecord r, const Principal& who) {
    if (r.state != JobState::Finished && r.state != JobState::Rejected)
      throw Error(Errc::InvalidRequest, "only finished or rejected records can be imported");
    if (r.id.empty()) throw Error(Errc::InvalidRequest, "imported record needs an id");
    for (const auto& j : jobs_) {
      if (j.id == r.id) throw Error(Errc::InvalidRequest, "duplicate job id " + r.id);
    }
    r.nodes.clear();
    const json request = r;
    jobs_.push_back(std::move(r));
    recompute_rates();
    record("import", who, request, {});
  }

  std::vector<JobRecord> history(const HistoryFilter& f = {}) const {
    std::vector<JobRecord> out;
    const std::string profile = f.profile.empty() ? "" : canonical_name(f.profile);
    for (const auto& r : jobs_) {
      if (!f.application.empty() && r.spec.application != f.application) continue;
      if (!profile.empty() && r.profile != profile) continue;
      const double t = start_key(r);
      if (f.from && t < *f.from) continue;
      if (f.to && t > *f.to) continue;
      out.push_back(r);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const JobRecord& a, const JobRecord& b) { return start_key(a) < start_key(b); });
    return out;
  }

  SavingsReport savings_report(const std::string& id) const {
    const JobRecord& r = job(id);
    if (r.state != JobState::Finished || !r.actual)
      throw Error(Errc::JobNotFinished, id + " is " + std::string(to_string(r.state)));
    SavingsReport rep;
    rep.job_id = r.id;
    rep.application = r.spec.application;
    rep.profile = r.profile;
    rep.runtime_seconds = *r.ended - *r.started;
    rep.energy_joules = r.energy_joules;
    rep.expected = r.expected;
    rep.actual = *r.actual;
    rep.delta = {rep.actual.perf_factor - rep.expected.perf_factor,
                 rep.actual.gpu_power_factor - rep.expected.gpu_power_factor,
                 rep.actual.system_power_factor - rep.expected.system_power_factor,
                 rep.actual.energy_saving - rep.expected.energy_saving};
    rep.recommendation = r.recommendation;
    return rep;
  }

  // ---- time ---------------------------------------------------------------

  std::optional<double> next_transition() const {
    std::optional<double> next;
    auto take = [&](double t) {
      if (t > now_ && (!next || t < *next)) next = t;
    };
    for (const auto& e : events_) {
      if (e.phase == EventPhase::Pending) take(e.event.effective_at);
      if (e.phase == EventPhase::Active) take(e.event.expires_at);
    }
    for (std::size_t j = 0; j < jobs_.size(); ++j) {
      if (jobs_[j].state == JobState::Running && j < rates_.size() && rates_[j] > 0.0)
        take(now_ + jobs_[j].remaining_work_seconds / rates_[j]);
    }
    return next;
  }

  void advance_to(double target, const Principal& who) {
    if (!std::isfinite(target) || target < now_) throw Error(Errc::InvalidRequest, "time only moves forward");
    record("advance", who, json{{"to", target}}, {});
    run_until(target);
  }

  void advance(double seconds, const Principal& who) {
    if (!(seconds >= 0.0)) throw Error(Errc::InvalidRequest, "advance needs a non-negative duration");
    advance_to(now_ + seconds, who);
  }

  // ---- telemetry ----------------------------------------------------------

  std::vector<TelemetryRecord> telemetry(Level level, const std::string& id, double from, double to,
                                         std::size_t max_records = 2'000'000) const {
    std::vector<int> entities;
    if (id.empty()) {
      for (int i = 0; i < h_.count(level); ++i) entities.push_back(i);
    } else {
      entities.push_back(h_.index_of(level, id));
    }
    from = std::max(from, 0.0);
    to = std::min(to, now_);
    std::vector<TelemetryRecord> out;
    if (to < from) return out;
    const double tick = fleet_.tick_seconds;
    const auto samples = static_cast<std::size_t>(std::floor((to - from) / tick + 1e-9)) + 1;
    if (samples * entities.size() > max_records) throw Error(Errc::InvalidRequest, "telemetry window too large");

    std::size_t k = 0;
    std::vector<double> energy(h_.count(level), 0.0);  // up to segments_[k].start
    std::vector<double> power = rollup(segments_[0].frame, h_, level);
    for (std::size_t s = 0; s < samples; ++s) {
      const double t = from + static_cast<double>(s) * tick;
      while (k + 1 < segments_.size() && segments_[k + 1].start <= t) {
        const double len = segments_[k].end - segments_[k].start;
        for (std::size_t e = 0; e < energy.size(); ++e) energy[e] += power[e] * len;
        ++k;
        power = rollup(segments_[k].frame, h_, level);
      }
      for (int e : entities) {
        TelemetryRecord rec;
        rec.time = t;
        rec.timestamp = clock_.to_utc(t);
        rec.level = level;
        rec.id = h_.id(level, e);
        rec.power_watts = power[e];
        rec.energy_joules_cum = energy[e] + power[e] * (t - segments_[k].start);
        rec.active_profile = entity_point(segments_[k], level, e);
        out.push_back(std::move(rec));
      }
    }
    return out;
  }

  // ---- persistence --------------------------------------------------------

  json snapshot() const {
    json tiers = json::array();
    for (int g = 0; g < h_.gpus(); ++g) {
      tiers.push_back({{"tenant", tenant_[g] ? json(*tenant_[g]) : json(nullptr)},
                       {"admin", admin_[g] ? json(*admin_[g]) : json(nullptr)}});
    }
    std::vector<int> queue(queue_.begin(), queue_.end());
    return {{"schema_version", 1},
            {"dims", {h_.racks(), h_.nodes(), h_.gpus()}},
            {"now", now_},
            {"cap", cap_},
            {"counters", {job_counter_, event_counter_, rule_counter_}},
            {"next_seq", next_seq_},
            {"tiers", tiers},
            {"node_job", node_job_},
            {"suspended", suspended_},
            {"jobs", jobs_},
            {"queue", queue},
            {"events", events_},
            {"rules", rules_},
            {"alerts", alerts_.alerts()},
            {"segments", segments_}};
  }

  void restore(const json& snap) {
    try {
      if (snap.at("schema_version").get<int>() != 1) throw Error(Errc::StoreCorrupt, "unknown snapshot schema");
      const auto dims = snap.at("dims").get<std::vector<int>>();
      if (dims != std::vector<int>{h_.racks(), h_.nodes(), h_.gpus()})
        throw Error(Errc::StoreCorrupt, "snapshot was taken on a different fleet shape");
      reset_devices();
      now_ = snap.at("now").get<double>();
      cap_ = snap.at("cap").get<double>();
      const auto counters = snap.at("counters").get<std::vector<int>>();
      job_counter_ = counters.at(0);
      event_counter_ = counters.at(1);
      rule_counter_ = counters.at(2);
      next_seq_ = snap.at("next_seq").get<std::uint64_t>();
      const auto& tiers = snap.at("tiers");
      for (int g = 0; g < h_.gpus(); ++g) {
        const auto& t = tiers.at(g);
        if (!t.at("tenant").is_null()) set_tier(g, Tier::Tenant, t.at("tenant").get<TierAssignment>());
        if (!t.at("admin").is_null()) set_tier(g, Tier::Admin, t.at("admin").get<TierAssignment>());
      }
      node_job_ = snap.at("node_job").get<std::vector<int>>();
      suspended_ = snap.at("suspended").get<std::vector<bool>>();
      jobs_ = snap.at("jobs").get<std::vector<JobRecord>>();
      const auto queue = snap.at("queue").get<std::vector<int>>();
      queue_.assign(queue.begin(), queue.end());
      events_ = snap.at("events").get<std::vector<EventState>>();
      rules_ = snap.at("rules").get<std::vector<AlertRule>>();
      alerts_.restore(snap.at("alerts").get<std::vector<Alert>>());
      segments_ = snap.at("segments").get<std::vector<Segment>>();
      if (segments_.empty() || static_cast<int>(node_job_.size()) != h_.nodes() ||
          static_cast<int>(suspended_.size()) != h_.nodes())
        throw Error(Errc::StoreCorrupt, "snapshot arrays do not match the fleet");
      for (int j : node_job_) {
        if (j >= static_cast<int>(jobs_.size())) throw Error(Errc::StoreCorrupt, "node bound to a missing job");
      }
      audit_.clear();
      last_clean_ = node_powers_frame(suspended_);
      last_points_ = segments_.back().gpu_points;
      recompute_rates();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::StoreCorrupt, e.what());
    }
  }

  // Re-executes the request records (derived records are consequences and
  // are skipped).
  void replay(const std::vector<AuditRecord>& records) {
    for (const auto& r : records) {
      if (r.derived) continue;
      if (r.kind == "apply") {
        apply(r.request.get<ApplyRequest>(), r.actor);
      } else if (r.kind == "demand-response") {
        demand_response(r.request.get<DemandResponseEvent>(), r.actor);
      } else if (r.kind == "submit") {
        submit(r.request.get<JobSpec>(), r.actor);
      } else if (r.kind == "alert-rule") {
        add_alert_rule(r.request.get<AlertRule>(), r.actor);
      } else if (r.kind == "advance") {
        advance_to(r.request.at("to").get<double>(), r.actor);
      } else if (r.kind == "import") {
        import_history(r.request.get<JobRecord>(), r.actor);
      } else {
        throw Error(Errc::StoreCorrupt, "unknown audit record kind '" + r.kind + "'");
      }
    }
  }

 private:
  static double eps(double scale) { return 1e-9 * std::max(1.0, std::abs(scale)); }

  static double sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }

  static std::string format_watts(double w) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.0f W", w);
    return buf;
  }

  static double start_key(const JobRecord& r) { return r.started.value_or(r.submitted); }

  const ResponseTable& sim_table() const {
    return options_.simulation_response ? *options_.simulation_response : catalog_.response();
  }

  double idle_node_watts() const { return fleet_.gpus_per_node * fleet_.gpu_idle_watts + fleet_.non_gpu_power_watts; }

  std::size_t job_index(const std::string& id) const {
    for (std::size_t i = 0; i < jobs_.size(); ++i) {
      if (jobs_[i].id == id) return i;
    }
    throw Error(Errc::UnknownJob, id);
  }

  void reset_devices() {
    registries_.assign(h_.gpus(), ModeRegistry(dict_));
    configs_.assign(h_.gpus(), EffectiveConfig{});
    states_.assign(h_.gpus(), GpuState::defaults(fleet_.arch, dict_));
    tenant_.assign(h_.gpus(), std::nullopt);
    admin_.assign(h_.gpus(), std::nullopt);
    node_job_.assign(h_.nodes(), -1);
    suspended_.assign(h_.nodes(), false);
    jobs_.clear();
    rates_.clear();
    queue_.clear();
    events_.clear();
    rules_.clear();
    alerts_.restore({});
    segments_.clear();
  }

  // Replaces one tier's modes on a GPU, then re-arbitrates and reprograms it.
  void set_tier(int gpu, Tier t, const std::optional<TierAssignment>& a) {
    auto& reg = registries_[gpu];
    const std::string prefix(t == Tier::Admin ? kAdminPrefix : kTenantPrefix);
    std::vector<std::string> old;
    for (const auto& [id, mode] : reg.modes()) {
      if (id.rfind(prefix, 0) == 0) old.push_back(id);
    }
    for (const auto& id : old) reg.unregister_mode(id);
    (t == Tier::Admin ? admin_ : tenant_)[gpu] = a;
    if (a) {
      for (auto mode : catalog_.profile_modes(a->profile, a->hints, fleet_.arch)) {
        std::set<std::string> conflicts;
        for (const auto& c : mode.conflicts) {
          conflicts.insert(std::string(kTenantPrefix) + c);
          conflicts.insert(std::string(kAdminPrefix) + c);
        }
        mode.conflicts = std::move(conflicts);
        mode.id = prefix + mode.id;
        if (t == Tier::Admin) mode.priority += kAdminPriorityOffset;
        mode.provenance += ", " + std::string(to_string(t)) + " tier";
        const std::string id = reg.register_mode(std::move(mode));
        reg.set_enabled(id, true);
      }
    }
    configs_[gpu] = arbitrate(reg);
    states_[gpu] = apply_config(states_[gpu], configs_[gpu], fleet_.arch, dict_);
  }

  std::vector<int> resolve_scope(const ApplyRequest& req, const Principal& who) const {
    if (req.pathway == Pathway::OutOfBand && who.role != Role::Admin)
      throw Error(Errc::Unauthorized, "the out-of-band pathway requires the admin role");
    if (req.pathway == Pathway::InBand && req.scope.kind != ScopeKind::Gpu && req.scope.kind != ScopeKind::Job)
      throw Error(Errc::Unauthorized, "in-band requests are limited to job and GPU scopes");

    std::vector<int> gpus;
    auto add_node = [&](int n) {
      for (int g : h_.node_gpus(n)) gpus.push_back(g);
    };
    switch (req.scope.kind) {
      case ScopeKind::Gpu:
        gpus.push_back(gpu_index(req.scope.id));
        break;
      case ScopeKind::Node:
        try {
          add_node(h_.index_of(Level::Node, req.scope.id));
        } catch (const Error&) {
          throw Error(Errc::UnknownScope, "no node '" + req.scope.id + "'");
        }
        break;
      case ScopeKind::Rack: {
        int r = 0;
        try {
          r = h_.index_of(Level::Rack, req.scope.id);
        } catch (const Error&) {
          throw Error(Errc::UnknownScope, "no rack '" + req.scope.id + "'");
        }
        for (int n : h_.rack_nodes(r)) add_node(n);
        break;
      }
      case ScopeKind::Fleet: {
        const std::string& f = req.scope.id;
        if (f != "" && f != "all" && f != "busy" && f != "idle")
          throw Error(Errc::UnknownScope, "fleet filter must be all, busy or idle, got '" + f + "'");
        for (int n = 0; n < h_.nodes(); ++n) {
          const bool busy = node_job_[n] >= 0;
          if ((f == "busy" && !busy) || (f == "idle" && busy)) continue;
          add_node(n);
        }
        break;
      }
      case ScopeKind::Job: {
        std::size_t j = 0;
        try {
          j = job_index(req.scope.id);
        } catch (const Error&) {
          throw Error(Errc::UnknownScope, "no job '" + req.scope.id + "'");
        }
        if (jobs_[j].state != JobState::Running) throw Error(Errc::UnknownScope, req.scope.id + " is not running");
        if (who.role != Role::Admin && jobs_[j].owner != who.identity)
          throw Error(Errc::Unauthorized, req.scope.id + " belongs to another tenant");
        for (int n : jobs_[j].nodes) add_node(n);
        break;
      }
    }
    if (who.role != Role::Admin) {
      for (int g : gpus) {
        const int j = node_job_[h_.node_of_gpu(g)];
        if (j >= 0 && jobs_[j].owner != who.identity)
          throw Error(Errc::Unauthorized, Hierarchy::gpu_id(g) + " is allocated to another tenant");
      }
    }
    return gpus;
  }

  // ---- calibration lookups ------------------------------------------------

  JobRecord make_record(const JobSpec& spec, const std::string& owner) const {
    JobRecord r;
    r.spec = spec;
    r.owner = owner;
    if (spec.workload) {
      r.workload = *spec.workload;
    } else if (auto c = catalog_.application_class(spec.application)) {
      r.workload = *c;
    } else if (spec.profile) {
      r.workload = class_of(*spec.profile);
    }
    r.profile = point_name(spec.profile);
    r.submitted = now_;
    r.remaining_work_seconds = static_cast<double>(spec.baseline_seconds);
    return r;
  }

  // A profile built for another class is looked up as its same-goal variant
  // for the job's class.
  std::string lookup_point(const JobRecord& r, const std::string& point) const {
    if (point == kDefaultPoint) return point;
    ProfileId p = profile_from_string(point);
    if (class_of(p) != r.workload) p = resolve_profile(r.workload, goal_of(p), r.spec.hints);
    return std::string(to_string(p));
  }

  ResponseEntry expected_row(const JobRecord& r) const {
    return catalog_.response().lookup(fleet_.arch, r.spec.application, r.workload, lookup_point(r, r.profile));
  }

  // Rows missing from the simulation table run at default behaviour.
  ResponseEntry sim_row(const JobRecord& r, const std::string& point) const {
    const std::string p = lookup_point(r, point);
    const auto& table = sim_table();
    if (!table.has(fleet_.arch, r.spec.application, r.workload, p))
      return table.lookup(fleet_.arch, r.spec.application, r.workload, kDefaultPoint);
    return table.lookup(fleet_.arch, r.spec.application, r.workload, p);
  }

  SavingsFactors factors_of(const ResponseEntry& row) const {
    return {row.perf_factor, model_.gpu_factor(row), row.system_power_factor,
            energy_saving(row.perf_factor, row.system_power_factor)};
  }

  // ---- power --------------------------------------------------------------

  PowerFrame node_powers_frame(const std::vector<bool>& suspended, bool noisy = false,
                               std::vector<std::string>* points = nullptr) const {
    PowerFrame f;
    f.gpu_watts.assign(h_.gpus(), 0.0);
    f.node_other_watts.assign(h_.nodes(), 0.0);
    if (points) points->assign(h_.gpus(), std::string(kDefaultPoint));
    std::mt19937_64 rng(fleet_.seed * 0x9E3779B97F4A7C15ULL + segments_.size());
    std::uniform_real_distribution<double> jitter(-fleet_.noise_fraction, fleet_.noise_fraction);
    std::map<std::pair<int, std::string>, ResponseEntry> rows;
    for (int n = 0; n < h_.nodes(); ++n) {
      const auto& gpus = h_.node_gpus(n);
      if (suspended[n]) {
        if (points)
          for (int g : gpus) (*points)[g] = std::string(kSuspendedPoint);
        continue;
      }
      const int j = node_job_[n];
      if (j < 0) {
        for (int g : gpus) {
          f.gpu_watts[g] = fleet_.gpu_idle_watts;
          if (points) (*points)[g] = gpu_point(g);
        }
        f.node_other_watts[n] = fleet_.non_gpu_power_watts;
        continue;
      }
      double other = 0.0;
      for (int g : gpus) {
        const std::string point = gpu_point(g);
        auto key = std::make_pair(j, point);
        auto it = rows.find(key);
        if (it == rows.end()) it = rows.emplace(key, sim_row(jobs_[j], point)).first;
        double w = model_.gpu_watts(it->second);
        if (noisy && fleet_.noise_fraction > 0.0) w *= 1.0 + jitter(rng);
        f.gpu_watts[g] = w;
        other += model_.non_gpu_share_watts(it->second) / fleet_.gpus_per_node;
        if (points) (*points)[g] = point;
      }
      f.node_other_watts[n] = other;
    }
    return f;
  }

  std::vector<double> node_powers(const std::vector<bool>& suspended) const {
    return rollup(node_powers_frame(suspended), h_, Level::Node);
  }

  std::string entity_point(const Segment& s, Level level, int e) const {
    std::vector<int> gpus;
    switch (level) {
      case Level::Gpu: return s.gpu_points.at(e);
      case Level::Node: gpus = h_.node_gpus(e); break;
      case Level::Rack:
        for (int n : h_.rack_nodes(e))
          for (int g : h_.node_gpus(n)) gpus.push_back(g);
        break;
      case Level::Facility:
        for (int g = 0; g < h_.gpus(); ++g) gpus.push_back(g);
        break;
    }
    const std::string& first = s.gpu_points.at(gpus.front());
    for (int g : gpus) {
      if (s.gpu_points[g] != first) return std::string(kMixedPoint);
    }
    return first;
  }

  void refresh_segment() {
    std::vector<std::string> points;
    PowerFrame clean = node_powers_frame(suspended_, false, &points);
    if (!segments_.empty() && clean == last_clean_ && points == last_points_ && segments_.back().cap == cap_) return;
    if (!segments_.empty() && segments_.back().end <= segments_.back().start) segments_.pop_back();
    Segment s;
    s.start = now_;
    s.end = now_;
    s.cap = cap_;
    s.frame = fleet_.noise_fraction > 0.0 ? node_powers_frame(suspended_, true) : clean;
    s.gpu_points = points;
    segments_.push_back(std::move(s));
    last_clean_ = std::move(clean);
    last_points_ = std::move(points);
  }

  // ---- lifecycle ----------------------------------------------------------

  // FIFO without backfill: while anything is queued, newcomers queue too.
  AdmissionDecision decide(const JobSpec& spec, bool respect_queue) const {
    AdmissionDecision d;
    if (spec.nodes < 1) throw Error(Errc::InvalidRequest, "nodes must be >= 1");
    if (spec.nodes > h_.nodes()) {
      d.reason = "requested " + std::to_string(spec.nodes) + " nodes, facility has " + std::to_string(h_.nodes());
      return d;
    }
    JobRecord probe = make_record(spec, {});
    const ResponseEntry row = expected_row(probe);
    d.projected_job_watts = spec.nodes * model_.node_watts(row);
    d.default_job_watts = spec.nodes * model_.baseline_node_watts();
    const double idle = idle_node_watts();

    auto fits_empty = [&] {
      return (h_.nodes() - spec.nodes) * idle + d.projected_job_watts <= cap_ + eps(cap_);
    };
    const auto free = free_nodes();
    if ((respect_queue && !queue_.empty()) || static_cast<int>(free.size()) < spec.nodes) {
      if (fits_empty()) {
        d.queued = true;
        d.reason = !respect_queue || queue_.empty() ? "waiting for " + std::to_string(spec.nodes) + " free nodes"
                                  : "queued behind " + std::to_string(queue_.size()) + " earlier jobs";
      } else {
        d.deficit_watts = (h_.nodes() - spec.nodes) * idle + d.projected_job_watts - cap_;
        d.reason = "job power exceeds the facility cap even on an empty facility";
      }
      return d;
    }
    const double current = projected_facility_power();
    const double base = current - spec.nodes * idle;
    const double projected = base + d.projected_job_watts;
    if (projected <= cap_ + eps(cap_)) {
      d.admitted = true;
      d.profile_enabled_admission = spec.profile.has_value() && base + d.default_job_watts > cap_ + eps(cap_);
      d.reason = d.profile_enabled_admission
                     ? point_name(spec.profile) + " made admission possible: default settings would exceed the cap by " +
                           format_watts(base + d.default_job_watts - cap_)
                     : "fits the remaining budget of " + format_watts(cap_ - current);
      return d;
    }
    d.deficit_watts = projected - cap_;
    if (fits_empty()) {
      d.queued = true;
      d.reason = "power budget short by " + format_watts(d.deficit_watts) + "; queued";
    } else {
      d.reason = "power budget short by " + format_watts(d.deficit_watts);
    }
    return d;
  }

  std::vector<int> free_nodes() const {
    std::vector<int> out;
    for (int n = 0; n < h_.nodes(); ++n) {
      if (node_job_[n] < 0 && !suspended_[n]) out.push_back(n);
    }
    return out;
  }

  void recompute_rates() {
    rates_.assign(jobs_.size(), 0.0);
    std::map<std::pair<int, std::string>, double> perf;
    for (std::size_t j = 0; j < jobs_.size(); ++j) {
      const auto& r = jobs_[j];
      if (r.state != JobState::Running) continue;
      double slowest = 1e300;
      int active = 0;
      for (int n : r.nodes) {
        if (!suspended_[n]) ++active;
        for (int g : h_.node_gpus(n)) {
          const std::string point = gpu_point(g);
          auto key = std::make_pair(static_cast<int>(j), point);
          auto it = perf.find(key);
          if (it == perf.end()) it = perf.emplace(key, sim_row(r, point).perf_factor).first;
          slowest = std::min(slowest, it->second);
        }
      }
      rates_[j] = slowest * active / static_cast<double>(r.nodes.size());
    }
  }

  void start_job(int idx) {
    JobRecord& r = jobs_[idx];
    auto free = free_nodes();
    free.resize(r.spec.nodes);
    r.nodes = free;
    r.state = JobState::Running;
    r.started = now_;
    std::optional<TierAssignment> tenant;
    if (r.spec.profile) tenant = TierAssignment{*r.spec.profile, r.spec.hints};
    std::vector<std::string> ids;
    for (int n : r.nodes) {
      node_job_[n] = idx;
      for (int g : h_.node_gpus(n)) {
        set_tier(g, Tier::Tenant, tenant);
        ids.push_back(Hierarchy::gpu_id(g));
      }
    }
    for (auto& e : events_) {
      if (e.phase == EventPhase::Active && e.switched) switch_job_to_max_q(e, idx);
    }
    record_derived("job-start", json{{"job", r.id}}, ids);
  }

  void finish_job(int idx) {
    JobRecord& r = jobs_[idx];
    r.state = JobState::Finished;
    r.ended = now_;
    r.remaining_work_seconds = 0.0;
    const double runtime = *r.ended - *r.started;
    const double nodes = static_cast<double>(r.nodes.size());
    SavingsFactors a;
    a.perf_factor = static_cast<double>(r.spec.baseline_seconds) / runtime;
    a.gpu_power_factor = r.gpu_energy_joules / runtime / (nodes * fleet_.gpus_per_node * model_.gpu_tdp_watts);
    a.system_power_factor = r.energy_joules / runtime / (nodes * model_.baseline_node_watts());
    a.energy_saving = 1.0 - r.energy_joules / (nodes * model_.baseline_node_watts() * r.spec.baseline_seconds);
    r.actual = a;
    std::vector<std::string> ids;
    for (int n : r.nodes) {
      node_job_[n] = -1;
      for (int g : h_.node_gpus(n)) {
        set_tier(g, Tier::Tenant, std::nullopt);
        ids.push_back(Hierarchy::gpu_id(g));
      }
    }
    r.recommendation = recommend(r);
    record_derived("job-end", json{{"job", r.id}}, ids);
    if (job_sink_) job_sink_(r);
  }

  std::string recommend(const JobRecord& r) const {
    const SavingsFactors& e = r.expected;
    const SavingsFactors& a = *r.actual;
    char buf[512];
    if (r.profile == kDefaultPoint) {
      const ProfileId v = resolve_profile(r.workload, Goal::MaxQ, r.spec.hints);
      const std::string name(to_string(v));
      if (!catalog_.response().has(fleet_.arch, r.spec.application, r.workload, name))
        return "Ran at default settings; no calibrated Max-Q profile exists for this workload.";
      const auto row = catalog_.response().lookup(fleet_.arch, r.spec.application, r.workload, name);
      std::snprintf(buf, sizeof buf,
                    "Ran at default settings. %s is calibrated at %.1f%% performance loss for %.1f%% job energy "
                    "saving; consider --power-profile=%s on the next submission.",
                    name.c_str(), 100.0 * (1.0 - row.perf_factor),
                    100.0 * energy_saving(row.perf_factor, row.system_power_factor), name.c_str());
      return buf;
    }
    const double miss = std::max(std::abs(a.energy_saving - e.energy_saving),
                                 std::abs(a.system_power_factor - e.system_power_factor));
    if (miss > kRecommendMissFraction) {
      std::snprintf(buf, sizeof buf,
                    "Actual savings deviated from calibration by %.1f pp; re-profile with workload hints "
                    "(--hint=memory_bound|compute_bound, --hint=nvlink_heavy|nvlink_light) on the next submission.",
                    100.0 * miss);
      return buf;
    }
    if (1.0 - a.perf_factor > kPerfLossGuidance) {
      const ProfileId v = resolve_profile(r.workload, Goal::MaxP, r.spec.hints);
      std::snprintf(buf, sizeof buf,
                    "Performance loss of %.1f%% exceeds the %.0f%% guidance; consider --power-profile=%s.",
                    100.0 * (1.0 - a.perf_factor), 100.0 * kPerfLossGuidance, std::string(to_string(v)).c_str());
      return buf;
    }
    std::snprintf(buf, sizeof buf, "Savings matched calibration (%.1f%% job energy); keep %s.",
                  100.0 * a.energy_saving, r.profile.c_str());
    return buf;
  }

  // ---- demand response ----------------------------------------------------

  void switch_job_to_max_q(EventState& e, int idx) {
    const JobRecord& r = jobs_[idx];
    const TierAssignment maxq{resolve_profile(r.workload, Goal::MaxQ, r.spec.hints), r.spec.hints};
    for (int n : r.nodes) {
      for (int g : h_.node_gpus(n)) {
        if (!e.saved_admin.count(g)) e.saved_admin[g] = admin_[g];
        set_tier(g, Tier::Admin, maxq);
        ++e.switched_gpus;
      }
    }
  }

  void activate(EventState& e) {
    e.phase = EventPhase::Active;
    e.prior_cap = cap_;
    cap_ = e.event.new_cap_watts;
    const double draw = projected_facility_power();
    char buf[160];
    if (draw <= cap_ + eps(cap_)) {
      e.noop = true;
      std::snprintf(buf, sizeof buf, "cap set to %.0f W; draw %.0f W already within it, no profile change", cap_, draw);
      e.actions.emplace_back(buf);
      record_derived("dr-noop", json{{"event", e.event.id}}, {});
      return;
    }
    e.switched = true;
    std::vector<std::string> ids;
    for (std::size_t j = 0; j < jobs_.size(); ++j) {
      if (jobs_[j].state != JobState::Running) continue;
      switch_job_to_max_q(e, static_cast<int>(j));
      for (int n : jobs_[j].nodes)
        for (int g : h_.node_gpus(n)) ids.push_back(Hierarchy::gpu_id(g));
    }
    std::snprintf(buf, sizeof buf, "cap set to %.0f W; %zu GPUs switched to their Max-Q variant", cap_, ids.size());
    e.actions.emplace_back(buf);
    record_derived("dr-activate", json{{"event", e.event.id}}, ids);
  }

  void expire(EventState& e) {
    e.phase = EventPhase::Expired;
    cap_ = e.prior_cap;
    std::vector<std::string> ids;
    for (const auto& [g, saved] : e.saved_admin) {
      set_tier(g, Tier::Admin, saved);
      ids.push_back(Hierarchy::gpu_id(g));
    }
    suspended_.assign(h_.nodes(), false);
    char buf[160];
    std::snprintf(buf, sizeof buf, "expired; cap restored to %.0f W, %zu GPUs restored", cap_, ids.size());
    e.actions.emplace_back(buf);
    record_derived("dr-expire", json{{"event", e.event.id}}, ids);
  }

  // Suspension is recomputed from scratch: idle nodes first, then the newest
  // jobs' nodes, highest index first, until projected draw fits the cap.
  void enforce_cap(EventState& e) {
    std::vector<bool> none(h_.nodes(), false);
    const auto node_w = node_powers(none);
    double draw = sum(node_w);
    std::vector<bool> susp(h_.nodes(), false);
    if (draw > cap_ + eps(cap_)) {
      std::vector<int> order;
      for (int n = h_.nodes() - 1; n >= 0; --n) {
        if (node_job_[n] < 0) order.push_back(n);
      }
      std::vector<int> running;
      for (std::size_t j = 0; j < jobs_.size(); ++j) {
        if (jobs_[j].state == JobState::Running) running.push_back(static_cast<int>(j));
      }
      std::stable_sort(running.begin(), running.end(), [&](int a, int b) {
        return std::make_pair(*jobs_[a].started, a) > std::make_pair(*jobs_[b].started, b);
      });
      for (int j : running) {
        auto nodes = jobs_[j].nodes;
        std::sort(nodes.rbegin(), nodes.rend());
        order.insert(order.end(), nodes.begin(), nodes.end());
      }
      for (int n : order) {
        if (draw <= cap_ + eps(cap_)) break;
        draw -= node_w[n];
        susp[n] = true;
      }
    }
    const int count = static_cast<int>(std::count(susp.begin(), susp.end(), true));
    if (count > 0 && susp != suspended_) {
      e.cap_unreachable = true;
      char buf[160];
      std::snprintf(buf, sizeof buf, "cap unreachable with Max-Q alone; %d nodes suspended", count);
      e.actions.emplace_back(buf);
    }
    e.suspended_nodes = std::max(e.suspended_nodes, count);
    suspended_ = susp;
  }

  // ---- event loop ---------------------------------------------------------

  void integrate(double t1) {
    const double dt = t1 - now_;
    if (dt <= 0.0) return;
    const PowerFrame& f = segments_.back().frame;
    for (std::size_t j = 0; j < jobs_.size(); ++j) {
      JobRecord& r = jobs_[j];
      if (r.state != JobState::Running) continue;
      r.remaining_work_seconds -= rates_[j] * dt;
      for (int n : r.nodes) {
        double gpu = 0.0;
        for (int g : h_.node_gpus(n)) gpu += f.gpu_watts[g];
        r.gpu_energy_joules += gpu * dt;
        r.energy_joules += (gpu + f.node_other_watts[n]) * dt;
      }
    }
    segments_.back().end = t1;
  }

  // Applies everything due at now_ until the state is stable.
  void settle() {
    for (int guard = 0; guard < 10000; ++guard) {
      bool changed = false;
      recompute_rates();
      for (std::size_t j = 0; j < jobs_.size(); ++j) {
        const auto& r = jobs_[j];
        if (r.state == JobState::Running &&
            r.remaining_work_seconds <= 1e-9 * std::max(1.0, static_cast<double>(r.spec.baseline_seconds))) {
          finish_job(static_cast<int>(j));
          changed = true;
        }
      }
      for (auto& e : events_) {
        if (e.phase == EventPhase::Active && e.event.expires_at <= now_ + eps(now_)) {
          expire(e);
          changed = true;
        }
      }
      for (auto& e : events_) {
        if (e.phase == EventPhase::Pending && e.event.effective_at <= now_ + eps(now_)) {
          activate(e);
          changed = true;
        }
      }
      while (!queue_.empty()) {
        const int idx = queue_.front();
        queue_.pop_front();
        const AdmissionDecision d = decide(jobs_[idx].spec, false);
        if (!d.admitted) {
          queue_.push_front(idx);
          break;
        }
        jobs_[idx].admission = d;
        start_job(idx);
        changed = true;
      }
      for (auto& e : events_) {
        if (e.phase == EventPhase::Active) enforce_cap(e);
      }
      if (!changed) break;
    }
    recompute_rates();
    refresh_segment();
    std::vector<JobObservation> obs;
    for (std::size_t j = 0; j < jobs_.size(); ++j) {
      if (jobs_[j].state == JobState::Running) obs.push_back({jobs_[j].id, jobs_[j].profile, rates_[j], now_});
    }
    for (const auto& a : alerts_.evaluate(rules_, obs)) {
      record_derived("alert", json(a), {});
    }
  }

  void run_until(double target) {
    settle();
    while (now_ < target) {
      double next = target;
      if (auto t = next_transition(); t && *t < next) next = *t;
      integrate(next);
      now_ = next;
      settle();
    }
  }

  // ---- audit --------------------------------------------------------------

  std::uint64_t record(const std::string& kind, const Principal& who, const json& request,
                       std::vector<std::string> devices, bool derived = false) {
    AuditRecord r;
    r.seq = next_seq_++;
    r.time = now_;
    r.kind = kind;
    r.actor = who;
    r.derived = derived;
    r.request = request;
    r.devices = std::move(devices);
    audit_.push_back(r);
    if (audit_sink_) audit_sink_(audit_.back());
    return r.seq;
  }

  void record_derived(const std::string& kind, const json& detail, std::vector<std::string> devices) {
    record(kind, system_principal(), detail, std::move(devices), true);
  }

  ProfileCatalog catalog_;
  ControlPlaneOptions options_;
  FleetConfig fleet_;
  Hierarchy h_;
  NodePowerModel model_;
  KnobDictionary dict_;
  SimClock clock_;
  double now_ = 0.0;
  double cap_ = 0.0;
  double baseline_draw_ = 0.0;

  std::vector<ModeRegistry> registries_;
  std::vector<EffectiveConfig> configs_;
  std::vector<GpuState> states_;
  std::vector<std::optional<TierAssignment>> tenant_;
  std::vector<std::optional<TierAssignment>> admin_;

  std::vector<int> node_job_;
  std::vector<bool> suspended_;
  std::vector<JobRecord> jobs_;
  std::vector<double> rates_;
  std::deque<int> queue_;
  std::vector<EventState> events_;
  std::vector<AlertRule> rules_;
  AlertBook alerts_;

  std::vector<Segment> segments_;
  PowerFrame last_clean_;
  std::vector<std::string> last_points_;

  std::vector<AuditRecord> audit_;
  std::uint64_t next_seq_ = 1;
  int job_counter_ = 0;
  int event_counter_ = 0;
  int rule_counter_ = 0;
  AuditSink audit_sink_;
  JobSink job_sink_;
};

// Scheduler path: submit, then run simulated time until the job ends.
inline JobRecord run_job(ControlPlane& cp, const JobSpec& spec, const Principal& who) {
  const auto sub = cp.submit(spec, who);
  while (true) {
    const auto& r = cp.job(sub.job_id);
    if (r.state == JobState::Finished || r.state == JobState::Rejected) return r;
    const auto next = cp.next_transition();
    if (!next) throw Error(Errc::InvalidRequest, sub.job_id + " cannot make progress");
    cp.advance_to(*next, who);
  }
}

}  // namespace wpp
