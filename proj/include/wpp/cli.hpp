#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wpp/api.hpp"
#include "wpp/catalog.hpp"
#include "wpp/control_plane.hpp"
#include "wpp/scheduler.hpp"
#include "wpp/serialize.hpp"
#include "wpp/store.hpp"

namespace wpp::cli {

enum ExitCode : int { kOk = 0, kUserError = 1, kConnectivity = 2, kConflicts = 3 };

using Transport = std::function<ApiResponse(const ApiRequest&)>;
using HttpFactory = std::function<Transport(const std::string& endpoint)>;
using EnvLookup = std::function<std::optional<std::string>(const char*)>;

inline std::optional<std::string> process_env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

// In-process control plane backed by a state directory, so consecutive
// offline invocations share fleet state.
class OfflineBackend {
 public:
  OfflineBackend(const std::filesystem::path& catalog_path, const std::filesystem::path& state_dir)
      : cp_(ProfileCatalog::load(catalog_path)), store_(state_dir), api_(cp_, &store_) {
    store_.attach(cp_);
  }

  ApiResponse send(ApiRequest req) {
    // Offline, a bare role name stands in for that role's first token.
    if (!api_.principal_for(req.token)) {
      for (const auto& [token, p] : cp_.catalog().auth().tokens) {
        if (std::string(to_string(p.role)) == req.token) {
          req.token = token;
          break;
        }
      }
    }
    return api_.handle(req);
  }

 private:
  ControlPlane cp_;
  Store store_;
  Api api_;
};

namespace render {

inline std::string pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * fraction);
  return buf;
}

inline std::string pp(double fraction) {
  if (std::abs(fraction) < 5e-4) fraction = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f pp", 100.0 * fraction);
  return buf;
}

inline std::string num(double v, int digits = 1) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string opt_time(const json& j) { return j.is_null() ? "-" : num(j.get<double>(), 1); }

// Left-aligned columns, two spaces apart, trailing blanks trimmed.
inline std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    std::string l;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      l += cells[c];
      if (c + 1 < cells.size()) l += std::string(width[c] - cells[c].size() + 2, ' ');
    }
    while (!l.empty() && l.back() == ' ') l.pop_back();
    os << l << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return os.str();
}

inline std::string profiles(const json& list) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : list)
    rows.push_back({p.at("id").get<std::string>(), p.at("status").get<std::string>(), p.value("description", "")});
  return table({"PROFILE", "STATUS", "DESCRIPTION"}, rows);
}

inline std::string priorities(const json& list) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : list) {
    std::string conflicts;
    for (const auto& c : r.at("conflicts")) conflicts += (conflicts.empty() ? "" : ",") + c.get<std::string>();
    rows.push_back({std::to_string(r.at("priority").get<int>()), r.at("mode").get<std::string>(),
                    conflicts.empty() ? "-" : conflicts});
  }
  return table({"PRIORITY", "MODE", "CONFLICTS"}, rows);
}

// Devices with identical reports are grouped.
inline std::string apply_result(const json& result) {
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
  for (const auto& d : result.at("devices")) {
    const auto report = d.at("report").get<std::string>();
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == report; });
    if (it == groups.end()) {
      groups.push_back({report, {}});
      it = std::prev(groups.end());
    }
    it->second.push_back(d.at("gpu").get<std::string>());
  }
  std::ostringstream os;
  if (groups.size() == 1 && groups[0].second.size() == 1) {
    os << groups[0].second[0] << ":\n" << groups[0].first;
    return os.str();
  }
  os << "applied to " << result.at("devices").size() << " GPUs\n";
  for (const auto& [report, gpus] : groups) {
    os << gpus.front();
    if (gpus.size() > 1) os << " .. " << gpus.back();
    os << " (" << gpus.size() << " GPU" << (gpus.size() == 1 ? "" : "s") << "):\n" << report;
  }
  return os.str();
}

inline std::string report(const json& r) {
  const auto& e = r.at("expected");
  const auto& a = r.at("actual");
  const auto& d = r.at("delta");
  auto row = [&](const char* name, const char* key, bool invert) {
    const double ev = e.at(key).get<double>(), av = a.at(key).get<double>(), dv = d.at(key).get<double>();
    if (invert) return std::vector<std::string>{name, pct(1.0 - ev), pct(1.0 - av), pp(-dv)};
    return std::vector<std::string>{name, pct(ev), pct(av), pp(dv)};
  };
  std::ostringstream os;
  os << "job " << r.at("job_id").get<std::string>();
  const auto app = r.value("application", "");
  if (!app.empty()) os << "  application " << app;
  os << "  profile " << r.at("profile").get<std::string>() << "  runtime " << num(r.at("runtime_seconds"), 1)
     << " s  energy " << num(r.at("energy_joules").get<double>() / 3.6e6, 3) << " kWh\n";
  os << table({"METRIC", "EXPECTED", "ACTUAL", "DELTA"},
              {row("performance loss", "perf_factor", true), row("GPU power saving", "gpu_power_factor", true),
               row("system power saving", "system_power_factor", true),
               row("job energy saving", "energy_saving", false)});
  os << "recommendation: " << r.value("recommendation", "") << '\n';
  return os.str();
}

inline std::string jobs(const json& list) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& j : list) {
    const auto& spec = j.at("spec");
    const auto app = spec.value("application", "");
    rows.push_back({j.at("id").get<std::string>(), j.at("state").get<std::string>(), j.at("profile").get<std::string>(),
                    app.empty() ? "-" : app, std::to_string(spec.at("nodes").get<int>()), opt_time(j.at("started")),
                    opt_time(j.at("ended"))});
  }
  return table({"JOB", "STATE", "PROFILE", "APPLICATION", "NODES", "STARTED", "ENDED"}, rows);
}

inline std::string submission(const json& s) {
  const auto& d = s.at("decision");
  std::ostringstream os;
  os << s.at("job_id").get<std::string>() << ' ' << s.at("state").get<std::string>() << ": "
     << d.value("reason", "") << '\n';
  return os.str();
}

inline std::string status(const json& s) {
  std::ostringstream os;
  os << s.at("timestamp").get<std::string>() << "  t=" << num(s.at("time"), 1) << " s\n"
     << "facility " << num(s.at("facility_power_watts"), 0) << " W of cap " << num(s.at("cap_watts"), 0)
     << " W (baseline " << num(s.at("baseline_draw_watts"), 0) << " W)\n"
     << s.at("racks").get<int>() << " racks, " << s.at("nodes").get<int>() << " nodes, " << s.at("gpus").get<int>()
     << " " << s.at("arch").get<std::string>() << " GPUs; " << s.at("running_jobs").get<int>() << " running, "
     << s.at("queued_jobs").get<int>() << " queued, " << s.at("suspended_nodes").get<int>() << " nodes suspended\n";
  if (!s.at("active_event").is_null()) {
    const auto& e = s.at("active_event");
    os << "demand response " << e.at("event").at("id").get<std::string>() << " active until "
       << e.at("expires_at_utc").get<std::string>() << '\n';
  }
  return os.str();
}

inline std::string event(const json& e) {
  std::ostringstream os;
  os << e.at("event").at("id").get<std::string>() << ' ' << e.at("phase").get<std::string>() << ", cap "
     << num(e.at("event").at("new_cap_watts"), 0) << " W from " << e.at("effective_at_utc").get<std::string>()
     << " to " << e.at("expires_at_utc").get<std::string>() << '\n';
  for (const auto& a : e.at("actions")) os << "  " << a.get<std::string>() << '\n';
  return os.str();
}

inline std::string alerts(const json& list) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& a : list)
    rows.push_back({a.at("rule_id").get<std::string>(), a.at("job_id").get<std::string>(),
                    a.at("profile").get<std::string>(), pct(a.at("degradation")), pct(a.at("threshold")),
                    num(a.at("time"), 1)});
  return table({"RULE", "JOB", "PROFILE", "DEGRADATION", "THRESHOLD", "TIME"}, rows);
}

}  // namespace render

// Runs one wppctl invocation. `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
               const EnvLookup& env = process_env, const HttpFactory& http = nullptr) {
  CLI::App app{"wppctl: workload power profile control"};
  app.name("wppctl");
  app.require_subcommand(1);
  app.fallthrough();
  // Unknown words are only meaningful as a `jobs submit` launch line; CLI11
  // collects them on the root app.
  app.allow_extras();

  std::string endpoint = env("WPP_ENDPOINT").value_or("");
  std::string token = env("WPP_ROLE_TOKEN").value_or("");
  std::string catalog = env("WPP_CATALOG").value_or("data/calibration.json");
  std::string state = env("WPP_STATE").value_or(".wpp-state");
  std::string format = "table";
  app.add_option("--endpoint", endpoint, "control-plane URL, e.g. http://127.0.0.1:8080 (env WPP_ENDPOINT)");
  app.add_option("--role", token, "role token (env WPP_ROLE_TOKEN); offline also accepts admin or tenant");
  app.add_option("--catalog", catalog, "calibration file for offline mode (env WPP_CATALOG)");
  app.add_option("--state", state, "state directory for offline mode (env WPP_STATE)");
  app.add_option("--format", format, "output format")->check(CLI::IsMember({"table", "structured"}));

  ApiRequest req;
  std::function<int(const json&)> show;
  auto structured = [&] { return format == "structured"; };
  auto emit = [&](const json& j, const std::function<std::string(const json&)>& table) {
    out << (structured() ? j.dump(2) + "\n" : table(j));
    return kOk;
  };

  // profiles list
  auto* profiles = app.add_subcommand("profiles", "profile catalog")->require_subcommand(1)->fallthrough();
  auto* profiles_list = profiles->add_subcommand("list", "list the catalog")->fallthrough();
  std::string status_filter;
  profiles_list->add_option("--status", status_filter, "released or in_development");
  profiles_list->callback([&] {
    req = {"GET", "/v1/profiles", {}, "", token};
    if (!status_filter.empty()) req.query["status"] = status_filter;
    show = [&](const json& j) { return emit(j, render::profiles); };
  });

  // apply
  auto* apply = app.add_subcommand("apply", "apply a profile to GPUs")->fallthrough();
  std::string gpu, node, rack, job_id, profile;
  std::optional<std::string> fleet;
  std::vector<std::string> hints;
  bool out_of_band = false;
  auto* scope_group = apply->add_option_group("scope");
  scope_group->add_option("--gpu", gpu, "GPU id or index");
  scope_group->add_option("--node", node, "node id");
  scope_group->add_option("--rack", rack, "rack id");
  scope_group->add_option("--fleet", fleet, "fleet filter: all, busy or idle")->expected(0, 1)->default_str("all");
  scope_group->add_option("--job", job_id, "running job id");
  scope_group->require_option(1);
  apply->add_option("--profile", profile, "profile name or DEFAULT")->required();
  apply->add_option("--hint", hints, "workload hint (repeatable)");
  apply->add_flag("--out-of-band", out_of_band, "use the administrator pathway");
  apply->callback([&] {
    json body;
    Scope scope;
    if (!gpu.empty()) scope = {ScopeKind::Gpu, gpu};
    if (!node.empty()) scope = {ScopeKind::Node, node};
    if (!rack.empty()) scope = {ScopeKind::Rack, rack};
    if (fleet) scope = {ScopeKind::Fleet, fleet->empty() ? "all" : *fleet};
    if (!job_id.empty()) scope = {ScopeKind::Job, job_id};
    if (scope.kind == ScopeKind::Gpu && !scope.id.empty() &&
        scope.id.find_first_not_of("0123456789") == std::string::npos)
      scope.id = "gpu" + scope.id;
    // Node, rack and fleet scopes only exist on the administrator pathway.
    const bool oob = out_of_band || scope.kind == ScopeKind::Node || scope.kind == ScopeKind::Rack ||
                     scope.kind == ScopeKind::Fleet;
    body["pathway"] = oob ? "out_of_band" : "in_band";
    body["scope"] = scope;
    body["profile"] = profile;
    body["hints"] = hints;
    req = {"POST", "/v1/apply", {}, body.dump(), token};
    show = [&](const json& j) {
      emit(j, render::apply_result);
      return j.at("conflicts").get<bool>() ? kConflicts : kOk;
    };
  });

  // priorities
  auto* prio = app.add_subcommand("priorities", "mode priority table")->fallthrough();
  std::string prio_gpu;
  prio->add_option("--gpu", prio_gpu, "GPU id or index; omitted = catalog-wide");
  prio->callback([&] {
    req = {"GET", "/v1/modes/priorities", {}, "", token};
    if (!prio_gpu.empty()) req.query["gpu"] = prio_gpu;
    show = [&](const json& j) { return emit(j, render::priorities); };
  });

  // report
  auto* report = app.add_subcommand("report", "expected vs actual savings of a finished job")->fallthrough();
  std::string report_job;
  report->add_option("--job", report_job, "job id")->required();
  report->callback([&] {
    req = {"GET", "/v1/jobs/" + report_job + "/report", {}, "", token};
    show = [&](const json& j) { return emit(j, render::report); };
  });

  // jobs submit / list
  auto* jobs = app.add_subcommand("jobs", "job submission and history")->require_subcommand(1)->fallthrough();
  auto* submit = jobs->add_subcommand("submit", "submit a launch line (or read one from stdin)")->fallthrough();
  bool wait = false;
  submit->add_flag("--wait", wait, "run simulated time until the job ends");
  std::istream* in = &std::cin;
  submit->callback([&] {
    std::string line;
    for (const auto& w : app.remaining()) line += (line.empty() ? "" : " ") + detail::quote_if_needed(w);
    if (line.empty()) std::getline(*in, line);
    json body{{"launch_line", line}, {"wait", wait}};
    req = {"POST", "/v1/jobs", {}, body.dump(), token};
    show = [&](const json& j) {
      out << (structured() ? j.dump(2) + "\n" : render::submission(j));
      return j.at("state") == "rejected" ? kUserError : kOk;
    };
  });
  auto* jobs_list = jobs->add_subcommand("list", "job history")->fallthrough();
  std::string filter_app, filter_profile;
  jobs_list->add_option("--application", filter_app);
  jobs_list->add_option("--profile", filter_profile);
  jobs_list->callback([&] {
    req = {"GET", "/v1/jobs", {}, "", token};
    if (!filter_app.empty()) req.query["application"] = filter_app;
    if (!filter_profile.empty()) req.query["profile"] = filter_profile;
    show = [&](const json& j) { return emit(j, render::jobs); };
  });

  // sim advance
  auto* sim = app.add_subcommand("sim", "simulated clock")->require_subcommand(1)->fallthrough();
  auto* advance = sim->add_subcommand("advance", "advance simulated time")->fallthrough();
  double seconds = 0.0;
  advance->add_option("--seconds", seconds)->required()->check(CLI::NonNegativeNumber);
  advance->callback([&] {
    req = {"POST", "/v1/sim/advance", {}, json{{"seconds", seconds}}.dump(), token};
    show = [&](const json& j) { return emit(j, render::status); };
  });

  auto* status = app.add_subcommand("status", "facility summary")->fallthrough();
  status->callback([&] {
    req = {"GET", "/v1/status", {}, "", token};
    show = [&](const json& j) { return emit(j, render::status); };
  });

  // demand response
  auto* dr = app.add_subcommand("dr", "post a demand-response event (admin)")->fallthrough();
  double cap = 0.0, duration = 0.0;
  std::string at, dr_id, source;
  dr->add_option("--cap", cap, "new facility cap in watts")->required()->check(CLI::PositiveNumber);
  dr->add_option("--duration", duration, "seconds the cap stays in force")->required()->check(CLI::PositiveNumber);
  dr->add_option("--at", at, "start: UTC timestamp or simulated seconds (default now)");
  dr->add_option("--id", dr_id);
  dr->add_option("--source", source);
  dr->callback([&] {
    json body{{"new_cap_watts", cap}, {"duration_seconds", duration}, {"id", dr_id}, {"source", source}};
    if (!at.empty()) {
      if (at.find('T') != std::string::npos) {
        body["effective_at"] = at;
      } else {
        body["effective_at"] = std::stod(at);
      }
    }
    req = {"POST", "/v1/events/demand-response", {}, body.dump(), token};
    show = [&](const json& j) { return emit(j, render::event); };
  });

  // telemetry
  auto* tele = app.add_subcommand("telemetry", "power telemetry, one JSON object per line")->fallthrough();
  std::string level = "facility", tele_id, from, to;
  tele->add_option("--level", level)->check(CLI::IsMember({"gpu", "node", "rack", "facility"}));
  tele->add_option("--id", tele_id);
  tele->add_option("--from", from);
  tele->add_option("--to", to);
  tele->callback([&] {
    req = {"GET", "/v1/telemetry", {{"level", level}}, "", token};
    if (!tele_id.empty()) req.query["id"] = tele_id;
    if (!from.empty()) req.query["from"] = from;
    if (!to.empty()) req.query["to"] = to;
    show = nullptr;
  });

  // alerts
  auto* alerts = app.add_subcommand("alerts", "performance alerts")->require_subcommand(1)->fallthrough();
  auto* alerts_list = alerts->add_subcommand("list", "fired alerts")->fallthrough();
  alerts_list->callback([&] {
    req = {"GET", "/v1/alerts", {}, "", token};
    show = [&](const json& j) { return emit(j, render::alerts); };
  });
  auto* alerts_add = alerts->add_subcommand("add", "add a perf_degradation rule (admin)")->fallthrough();
  double threshold = 0.03;
  std::string scope = "*", rule_id;
  alerts_add->add_option("--threshold", threshold, "fraction, e.g. 0.03");
  alerts_add->add_option("--scope", scope, "*, a job id or a profile");
  alerts_add->add_option("--id", rule_id);
  alerts_add->callback([&] {
    json body{{"threshold_fraction", threshold}, {"scope", scope}, {"id", rule_id}};
    req = {"POST", "/v1/alerts/rules", {}, body.dump(), token};
    show = [&](const json& j) {
      out << (structured() ? j.dump(2) + "\n" : "rule " + j.at("id").get<std::string>() + " added\n");
      return kOk;
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (!submit->parsed() && !app.remaining().empty()) throw CLI::ExtrasError("wppctl", app.remaining());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "wppctl: " << e.what() << "\n";
    return kUserError;
  } catch (const std::exception& e) {
    err << "wppctl: " << e.what() << "\n";
    return kUserError;
  }
  if (req.path.empty()) {
    err << "wppctl: no command\n";
    return kUserError;
  }
  if (endpoint.empty() && token.empty()) req.token = "tenant";

  ApiResponse res;
  try {
    if (!endpoint.empty()) {
      if (!http) throw ConnectionError("this build has no HTTP client");
      res = http(endpoint)(req);
    } else {
      if (!std::filesystem::exists(catalog)) {
        err << "wppctl: no control plane endpoint and no catalog file at '" << catalog
            << "' (set --endpoint or --catalog)\n";
        return kConnectivity;
      }
      OfflineBackend backend(catalog, state);
      res = backend.send(req);
    }
  } catch (const ConnectionError& e) {
    err << "wppctl: " << e.what() << "\n";
    return kConnectivity;
  } catch (const Error& e) {
    err << "wppctl: " << e.what() << "\n";
    return e.code() == Errc::RecipeFileMissing ? kConnectivity : kUserError;
  }

  if (res.status != 200) {
    std::string message = res.body;
    try {
      const json j = json::parse(res.body);
      message = j.value("message", "");
      const std::string code = j.value("error", "Error");
      if (message.rfind(code, 0) != 0) message = code + ": " + message;
    } catch (const json::exception&) {
    }
    err << "wppctl: " << message << "\n";
    return kUserError;
  }
  if (!show) {
    out << res.body;
    return kOk;
  }
  try {
    return show(json::parse(res.body));
  } catch (const json::exception& e) {
    err << "wppctl: malformed response: " << e.what() << "\n";
    return kConnectivity;
  }
}

}  // namespace wpp::cli
