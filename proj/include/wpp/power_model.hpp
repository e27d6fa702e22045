#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "wpp/error.hpp"
#include "wpp/response.hpp"

namespace wpp {

// Fraction of job energy saved: energy = power x time, time = 1 / perf.
inline double energy_saving(double perf_factor, double system_power_factor) {
  return 1.0 - system_power_factor / perf_factor;
}

inline double perf_per_watt_gain(double perf_factor, double power_factor) {
  if (power_factor <= 0.0) throw Error(Errc::InvalidRequest, "power factor must be positive");
  return perf_factor / power_factor - 1.0;
}

// Continuous-limit throughput gain under a fixed cap: (1 - dperf) / (1 - dpower) - 1.
inline double throughput_gain_continuous(double perf_factor, double power_factor) {
  return perf_factor / power_factor - 1.0;
}

// First-order form (1 - dperf)(1 + dpower) - 1.
inline double throughput_gain_first_order(double perf_factor, double power_factor) {
  return perf_factor * (2.0 - power_factor) - 1.0;
}

struct CapFit {
  std::int64_t nodes_fit = 0;
  double throughput = 0.0;
};

// Whole nodes packed under the cap. The fix-up loops keep
// nodes_fit * node_power <= cap < (nodes_fit + 1) * node_power exact in
// floating point.
inline CapFit throughput_under_cap(double cap_watts, double node_power_watts, double per_node_perf) {
  if (cap_watts <= 0.0 || node_power_watts <= 0.0 || per_node_perf <= 0.0)
    throw Error(Errc::InvalidRequest, "throughput_under_cap needs positive inputs");
  auto n = static_cast<std::int64_t>(std::floor(cap_watts / node_power_watts));
  // fma keeps the exact sign of n*p - cap
  auto over = [&](std::int64_t k) { return std::fma(static_cast<double>(k), node_power_watts, -cap_watts) > 0.0; };
  while (n > 0 && over(n)) --n;
  while (!over(n + 1)) ++n;
  return {n, static_cast<double>(n) * per_node_perf};
}

// Node power split for a calibrated operating point. System power is
// authoritative: node power = system factor x baseline node power. The GPU
// share uses the calibrated GPU factor when the row has one; otherwise the
// GPU factor is back-solved with the non-GPU overhead held fixed. Whatever
// the GPUs do not account for is attributed to the rest of the node.
struct NodePowerModel {
  int gpus_per_node = 8;
  double gpu_tdp_watts = 1000.0;
  double non_gpu_watts = 3000.0;

  double baseline_node_watts() const { return gpus_per_node * gpu_tdp_watts + non_gpu_watts; }

  double node_watts(const ResponseEntry& e) const {
    return e.system_power_factor * baseline_node_watts();
  }

  double gpu_factor(const ResponseEntry& e) const {
    if (e.gpu_power_factor) return *e.gpu_power_factor;
    return (node_watts(e) - non_gpu_watts) / (gpus_per_node * gpu_tdp_watts);
  }

  double gpu_watts(const ResponseEntry& e) const { return gpu_tdp_watts * gpu_factor(e); }

  double non_gpu_share_watts(const ResponseEntry& e) const {
    return node_watts(e) - gpus_per_node * gpu_watts(e);
  }

  void check(const ResponseEntry& e) const {
    const double g = gpu_factor(e);
    if (!(g > 0.0 && g <= 1.5) || non_gpu_share_watts(e) < 0.0) {
      throw Error(Errc::CalibrationInconsistent,
                  e.workload + "/" + e.point + " cannot be split into GPU and node power");
    }
  }
};

}  // namespace wpp
