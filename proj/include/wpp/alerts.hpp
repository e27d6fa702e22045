#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "wpp/error.hpp"
#include "wpp/profile.hpp"

namespace wpp {

inline constexpr std::string_view kPerfDegradation = "perf_degradation";

// Fires when a job's measured degradation exceeds the threshold, i.e.
// perf_factor < 1 - threshold_fraction. Scope is "*", a job id or a
// profile name.
struct AlertRule {
  std::string id;
  std::string metric = std::string(kPerfDegradation);
  double threshold_fraction = 0.03;
  std::string scope = "*";

  bool operator==(const AlertRule&) const = default;
};

inline void validate_rule(const AlertRule& rule) {
  if (rule.metric != kPerfDegradation) throw Error(Errc::InvalidRequest, "unsupported alert metric " + rule.metric);
  if (!(rule.threshold_fraction > 0.0 && rule.threshold_fraction < 1.0))
    throw Error(Errc::InvalidRequest, "threshold_fraction must lie in (0, 1)");
}

struct JobObservation {
  std::string job_id;
  std::string profile;
  double perf_factor = 1.0;
  double time = 0.0;
};

struct Alert {
  std::string rule_id;
  std::string job_id;
  std::string profile;
  double degradation = 0.0;
  double threshold = 0.0;
  double time = 0.0;

  bool operator==(const Alert&) const = default;
};

inline bool rule_matches(const AlertRule& rule, const JobObservation& obs) {
  return rule.scope == "*" || rule.scope == obs.job_id || canonical_name(rule.scope) == obs.profile;
}

// Remembers which (rule, job) pairs have fired so each fires at most once.
class AlertBook {
 public:
  std::vector<Alert> evaluate(const std::vector<AlertRule>& rules, const std::vector<JobObservation>& observations) {
    std::vector<Alert> fresh;
    for (const auto& rule : rules) {
      for (const auto& obs : observations) {
        if (!rule_matches(rule, obs)) continue;
        if (!(obs.perf_factor < 1.0 - rule.threshold_fraction)) continue;
        if (!fired_.emplace(rule.id, obs.job_id).second) continue;
        fresh.push_back({rule.id, obs.job_id, obs.profile, 1.0 - obs.perf_factor, rule.threshold_fraction, obs.time});
      }
    }
    alerts_.insert(alerts_.end(), fresh.begin(), fresh.end());
    return fresh;
  }

  const std::vector<Alert>& alerts() const { return alerts_; }

  void restore(std::vector<Alert> alerts) {
    alerts_ = std::move(alerts);
    fired_.clear();
    for (const auto& a : alerts_) fired_.emplace(a.rule_id, a.job_id);
  }

 private:
  std::set<std::pair<std::string, std::string>> fired_;
  std::vector<Alert> alerts_;
};

}  // namespace wpp
