#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wpp/error.hpp"
#include "wpp/knobs.hpp"
#include "wpp/profile.hpp"

namespace wpp {

inline constexpr std::string_view kDefaultPoint = "DEFAULT";
inline constexpr std::string_view kFrequencyScalingPoint = "FREQUENCY_SCALING";
inline constexpr std::string_view kAnyWorkload = "*";

// Name of the operating point a job runs at: a profile or the defaults.
inline std::string point_name(std::optional<ProfileId> profile) {
  return profile ? std::string(to_string(*profile)) : std::string(kDefaultPoint);
}

// One calibrated response: factors relative to default settings for the
// same (arch, workload). Workload is an application name, a workload class
// name or "*".
struct ResponseEntry {
  GpuArch arch = GpuArch::B200;
  std::string workload;
  std::string point;
  double perf_factor = 1.0;
  double system_power_factor = 1.0;
  std::optional<double> gpu_power_factor;
  std::string source;

  double runtime_scale() const { return 1.0 / perf_factor; }
};

class ResponseTable {
 public:
  void add(ResponseEntry entry) {
    auto in_range = [](double f) { return f > 0.0 && f <= 1.5; };
    if (!in_range(entry.perf_factor) || !in_range(entry.system_power_factor) ||
        (entry.gpu_power_factor && !in_range(*entry.gpu_power_factor))) {
      throw Error(Errc::CatalogInvalid, "response factors must lie in (0, 1.5] for " +
                                            entry.workload + "/" + entry.point);
    }
    if (entry.point == kDefaultPoint &&
        (entry.perf_factor != 1.0 || entry.system_power_factor != 1.0 ||
         entry.gpu_power_factor.value_or(1.0) != 1.0)) {
      throw Error(Errc::CatalogInvalid, "DEFAULT rows must carry unit factors");
    }
    for (auto& existing : entries_) {
      if (existing.arch == entry.arch && existing.workload == entry.workload &&
          existing.point == entry.point && entry.point != kFrequencyScalingPoint) {
        throw Error(Errc::CatalogInvalid, "duplicate response row " + entry.workload + "/" + entry.point);
      }
    }
    entries_.push_back(std::move(entry));
  }

  const std::vector<ResponseEntry>& entries() const { return entries_; }

  const ResponseEntry* find(GpuArch arch, std::string_view workload, std::string_view point) const {
    for (const auto& e : entries_) {
      if (e.arch == arch && e.workload == workload && e.point == point) return &e;
    }
    return nullptr;
  }

  // Application row, then workload-class row, then wildcard row. DEFAULT
  // always resolves to the unit row.
  ResponseEntry lookup(GpuArch arch, std::string_view application, WorkloadClass cls,
                       std::string_view point) const {
    if (point == kDefaultPoint) {
      ResponseEntry unit;
      unit.arch = arch;
      unit.workload = application.empty() ? std::string(to_string(cls)) : std::string(application);
      unit.point = std::string(kDefaultPoint);
      unit.gpu_power_factor = 1.0;
      unit.source = "default settings";
      return unit;
    }
    if (!application.empty()) {
      if (const auto* e = find(arch, application, point)) return *e;
    }
    if (const auto* e = find(arch, to_string(cls), point)) return *e;
    if (const auto* e = find(arch, kAnyWorkload, point)) return *e;
    throw Error(Errc::NoCalibrationRow, std::string(to_string(arch)) + "/" +
                                            (application.empty() ? std::string(to_string(cls))
                                                                 : std::string(application)) +
                                            "/" + std::string(point));
  }

  bool has(GpuArch arch, std::string_view application, WorkloadClass cls,
           std::string_view point) const {
    if (point == kDefaultPoint) return true;
    return (!application.empty() && find(arch, application, point)) ||
           find(arch, to_string(cls), point) || find(arch, kAnyWorkload, point);
  }

 private:
  std::vector<ResponseEntry> entries_;
};

struct FrequencyScalingPoint {
  double perf_factor = 1.0;
  double power_factor = 1.0;
};

// Calibrated clock-only operating point reaching `target_dc_saving`
// (fraction of data-center power). Exact rows win; otherwise two rows that
// bracket the target are interpolated linearly.
inline FrequencyScalingPoint frequency_scaling_baseline(const ResponseTable& table, GpuArch arch,
                                                        double target_dc_saving) {
  std::vector<std::pair<double, double>> points;  // (saving, perf)
  for (const auto& e : table.entries()) {
    if (e.arch == arch && e.point == kFrequencyScalingPoint)
      points.emplace_back(1.0 - e.system_power_factor, e.perf_factor);
  }
  std::sort(points.begin(), points.end());
  constexpr double kMatch = 1e-9;
  for (const auto& [saving, perf] : points) {
    if (std::abs(saving - target_dc_saving) <= kMatch) return {perf, 1.0 - saving};
  }
  for (std::size_t i = 1; i < points.size(); ++i) {
    const auto [s0, p0] = points[i - 1];
    const auto [s1, p1] = points[i];
    if (s0 < target_dc_saving && target_dc_saving < s1) {
      const double t = (target_dc_saving - s0) / (s1 - s0);
      return {p0 + t * (p1 - p0), 1.0 - target_dc_saving};
    }
  }
  throw Error(Errc::NoCalibrationRow, "no frequency-scaling calibration reaches " +
                                          std::to_string(target_dc_saving) + " saving on " +
                                          std::string(to_string(arch)));
}

}  // namespace wpp
