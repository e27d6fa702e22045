#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <shared_mutex>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "wpp/control_plane.hpp"
#include "wpp/error.hpp"
#include "wpp/serialize.hpp"
#include "wpp/store.hpp"

namespace wpp {

inline constexpr const char* kTokenHeader = "X-Role-Token";

// The control plane could not be reached at all.
struct ConnectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ApiRequest {
  std::string method = "GET";
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
  std::string token;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  json as_json() const { return json::parse(body); }
};

inline int http_status(Errc code) {
  switch (code) {
    case Errc::Unauthorized:
      return 403;
    case Errc::UnknownMode:
    case Errc::UnknownProfile:
    case Errc::UnknownScope:
    case Errc::UnknownJob:
    case Errc::UnknownHierarchyNode:
    case Errc::UnknownKnob:
    case Errc::NoCalibrationRow:
      return 404;
    case Errc::JobNotFinished:
    case Errc::OverlappingEvent:
      return 409;
    case Errc::StoreCorrupt:
    case Errc::CalibrationInconsistent:
    case Errc::CatalogInvalid:
    case Errc::RecipeFileMissing:
      return 500;
    default:
      return 400;
  }
}

inline ApiResponse error_response(Errc code, const std::string& message) {
  return {http_status(code), "application/json",
          json{{"error", std::string(to_string(code))}, {"message", message}}.dump()};
}

// Routes /v1 requests onto a ControlPlane. Reads take a shared lock and
// mutations an exclusive one, so readers always see a completed mutation.
class Api {
 public:
  explicit Api(ControlPlane& cp, Store* store = nullptr) : cp_(cp), store_(store) {}

  ApiResponse handle(const ApiRequest& req) {
    try {
      return route(req);
    } catch (const Error& e) {
      return error_response(e.code(), e.what());
    } catch (const json::exception& e) {
      return error_response(Errc::InvalidRequest, e.what());
    } catch (const std::invalid_argument& e) {
      return error_response(Errc::InvalidRequest, e.what());
    } catch (const std::out_of_range& e) {
      return error_response(Errc::InvalidRequest, e.what());
    }
  }

  // Advances simulated time outside any request (real-time mode).
  void tick(double seconds) {
    std::unique_lock lock(mu_);
    cp_.advance(seconds, system_principal());
    after_mutation();
  }

  std::optional<Principal> principal_for(const std::string& token) const {
    const auto& tokens = cp_.catalog().auth().tokens;
    auto it = tokens.find(token);
    if (it == tokens.end()) return std::nullopt;
    return it->second;
  }

 private:
  ApiResponse route(const ApiRequest& req) {
    static const std::regex job_path(R"(^/v1/jobs/([^/]+)$)");
    static const std::regex report_path(R"(^/v1/jobs/([^/]+)/report$)");
    const std::string& p = req.path;
    std::smatch m;

    if (req.method == "GET") {
      std::shared_lock lock(mu_);
      if (p == "/v1/health") return ok({{"status", "ok"}});
      if (p == "/v1/status") return ok(status());
      if (p == "/v1/profiles") return profiles(req);
      if (p == "/v1/modes/priorities") return priorities(req);
      if (p == "/v1/telemetry") return telemetry(req);
      if (p == "/v1/jobs") return jobs(req);
      if (std::regex_match(p, m, report_path)) return ok(json(cp_.savings_report(m[1])));
      if (std::regex_match(p, m, job_path)) return ok(decorate(cp_.job(m[1])));
      if (p == "/v1/alerts") return ok(json(cp_.alerts()));
      if (p == "/v1/alerts/rules") return ok(json(cp_.alert_rules()));
      if (p == "/v1/events") return ok(events_json());
      if (p == "/v1/audit") return ok(json(cp_.audit_log()));
      return not_found(req);
    }
    if (req.method == "POST") {
      const json body = req.body.empty() ? json::object() : json::parse(req.body);
      std::unique_lock lock(mu_);
      const Principal who = authenticate(req);
      ApiResponse r;
      if (p == "/v1/apply") {
        r = ok(json(cp_.apply(body.get<ApplyRequest>(), who)));
      } else if (p == "/v1/events/demand-response") {
        r = ok(event_json(cp_.demand_response(event_from(body), who)));
      } else if (p == "/v1/jobs") {
        r = submit(body, who);
      } else if (p == "/v1/alerts/rules") {
        r = ok(json(cp_.add_alert_rule(body.get<AlertRule>(), who)));
      } else if (p == "/v1/sim/advance") {
        if (body.contains("to")) {
          cp_.advance_to(time_value(body.at("to")), who);
        } else {
          cp_.advance(detail::field(body, "seconds").get<double>(), who);
        }
        r = ok(status());
      } else {
        return not_found(req);
      }
      after_mutation();
      return r;
    }
    return error_response(Errc::InvalidRequest, "method " + req.method + " not supported");
  }

  static ApiResponse ok(const json& j) { return {200, "application/json", j.dump()}; }

  static ApiResponse not_found(const ApiRequest& req) {
    return {404, "application/json",
            json{{"error", "NotFound"}, {"message", req.method + " " + req.path + " is not a route"}}.dump()};
  }

  Principal authenticate(const ApiRequest& req) const {
    if (req.token.empty()) throw Error(Errc::Unauthorized, std::string("missing ") + kTokenHeader + " header");
    auto p = principal_for(req.token);
    if (!p) throw Error(Errc::Unauthorized, "unknown role token");
    return *p;
  }

  void after_mutation() {
    if (store_) store_->maybe_compact(cp_);
  }

  // Times on the wire are UTC strings or simulated seconds.
  double time_value(const json& j) const {
    if (j.is_string()) return cp_.clock().from_utc(j.get<std::string>());
    return j.get<double>();
  }

  double query_time(const ApiRequest& req, const char* key, double fallback) const {
    auto it = req.query.find(key);
    if (it == req.query.end() || it->second.empty()) return fallback;
    const std::string& v = it->second;
    if (v.find('T') != std::string::npos) return cp_.clock().from_utc(v);
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw Error(Errc::InvalidRequest, std::string("bad ") + key + " '" + v + "'");
    return d;
  }

  std::string query(const ApiRequest& req, const char* key) const {
    auto it = req.query.find(key);
    return it == req.query.end() ? std::string() : it->second;
  }

  json status() const {
    const EventState* e = cp_.active_event();
    int suspended = 0;
    for (int n = 0; n < cp_.hierarchy().nodes(); ++n) suspended += cp_.node_suspended(n) ? 1 : 0;
    int queued = 0, running = 0;
    for (const auto& j : cp_.jobs()) {
      queued += j.state == JobState::Queued ? 1 : 0;
      running += j.state == JobState::Running ? 1 : 0;
    }
    return {{"time", cp_.now()},
            {"timestamp", cp_.clock().to_utc(cp_.now())},
            {"cap_watts", cp_.cap()},
            {"baseline_draw_watts", cp_.baseline_draw()},
            {"facility_power_watts", cp_.facility_power()},
            {"racks", cp_.hierarchy().racks()},
            {"nodes", cp_.hierarchy().nodes()},
            {"gpus", cp_.hierarchy().gpus()},
            {"arch", std::string(to_string(cp_.fleet().arch))},
            {"tick_seconds", cp_.fleet().tick_seconds},
            {"suspended_nodes", suspended},
            {"running_jobs", running},
            {"queued_jobs", queued},
            {"active_event", e ? event_json(*e) : json(nullptr)}};
  }

  ApiResponse profiles(const ApiRequest& req) const {
    std::optional<ProfileStatus> status;
    const std::string s = query(req, "status");
    if (!s.empty()) {
      status = parse_status(s);
      if (!status) throw Error(Errc::InvalidRequest, "status must be released or in_development");
    }
    return ok(json(cp_.catalog().list_profiles(status)));
  }

  // Without ?gpu= the catalog-wide table is returned.
  ApiResponse priorities(const ApiRequest& req) const {
    const std::string gpu = query(req, "gpu");
    if (!gpu.empty()) return ok(json(cp_.priorities(cp_.gpu_index(gpu))));
    ModeRegistry reg(cp_.catalog().knobs(cp_.fleet().arch));
    for (auto& mode : cp_.catalog().all_modes(cp_.fleet().arch)) reg.register_mode(std::move(mode));
    return ok(json(query_priorities(reg)));
  }

  ApiResponse telemetry(const ApiRequest& req) const {
    const std::string lv = query(req, "level");
    const auto level = parse_level(lv.empty() ? "facility" : lv);
    if (!level) throw Error(Errc::InvalidRequest, "level must be gpu, node, rack or facility");
    const double to = query_time(req, "to", cp_.now());
    const double from = query_time(req, "from", std::max(0.0, to - 60.0));
    std::string out;
    for (const auto& rec : cp_.telemetry(*level, query(req, "id"), from, to)) {
      out += json(rec).dump();
      out += '\n';
    }
    return {200, "application/x-ndjson", out};
  }

  json decorate(const JobRecord& r) const {
    json j = r;
    j["submitted_utc"] = cp_.clock().to_utc(r.submitted);
    j["started_utc"] = r.started ? json(cp_.clock().to_utc(*r.started)) : json(nullptr);
    j["ended_utc"] = r.ended ? json(cp_.clock().to_utc(*r.ended)) : json(nullptr);
    return j;
  }

  ApiResponse jobs(const ApiRequest& req) const {
    HistoryFilter f;
    f.application = query(req, "application");
    f.profile = query(req, "profile");
    if (req.query.count("from")) f.from = query_time(req, "from", 0.0);
    if (req.query.count("to")) f.to = query_time(req, "to", 0.0);
    json out = json::array();
    for (const auto& r : cp_.history(f)) out.push_back(decorate(r));
    return ok(out);
  }

  ApiResponse submit(const json& body, const Principal& who) {
    JobSpec spec = body.contains("launch_line") ? parse_directive(body.at("launch_line").get<std::string>())
                                                : body.get<JobSpec>();
    json out;
    if (body.value("wait", false)) {
      const JobRecord r = run_job(cp_, spec, who);
      out = {{"job_id", r.id}, {"state", r.state}, {"decision", r.admission}};
    } else {
      out = cp_.submit(spec, who);
    }
    out["record"] = decorate(cp_.job(out.at("job_id").get<std::string>()));
    return ok(out);
  }

  DemandResponseEvent event_from(const json& body) const {
    DemandResponseEvent e;
    e.id = body.value("id", "");
    e.source = body.value("source", "");
    e.new_cap_watts = detail::field(body, "new_cap_watts").get<double>();
    e.effective_at = body.contains("effective_at") ? time_value(body.at("effective_at")) : cp_.now();
    if (body.contains("expires_at")) {
      e.expires_at = time_value(body.at("expires_at"));
    } else {
      e.expires_at = e.effective_at + detail::field(body, "duration_seconds").get<double>();
    }
    return e;
  }

  json event_json(const EventState& s) const {
    json j = s;
    j["effective_at_utc"] = cp_.clock().to_utc(s.event.effective_at);
    j["expires_at_utc"] = cp_.clock().to_utc(s.event.expires_at);
    j.erase("saved_admin");
    return j;
  }

  json events_json() const {
    json out = json::array();
    for (const auto& e : cp_.events()) out.push_back(event_json(e));
    return out;
  }

  ControlPlane& cp_;
  Store* store_;
  mutable std::shared_mutex mu_;
};

}  // namespace wpp
