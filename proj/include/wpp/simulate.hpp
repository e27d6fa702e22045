#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "wpp/calibration.hpp"
#include "wpp/error.hpp"
#include "wpp/fleet.hpp"
#include "wpp/power_model.hpp"
#include "wpp/response.hpp"

namespace wpp {

// A job pinned to one operating point for its whole run.
struct JobPlan {
  std::string application;
  WorkloadClass workload = WorkloadClass::AiTraining;
  std::string point = std::string(kDefaultPoint);
  int nodes = 1;
  double baseline_seconds = 3600.0;
};

struct SimSample {
  double t = 0.0;
  double dt = 0.0;
  double gpu_watts = 0.0;   // one GPU
  double node_watts = 0.0;  // one node
  double job_watts = 0.0;   // all nodes of the job
};

struct SimOutcome {
  ResponseEntry response;
  double runtime_scale = 1.0;
  double runtime_seconds = 0.0;
  double avg_gpu_power_watts = 0.0;
  double avg_node_power_watts = 0.0;
  double energy_joules = 0.0;
  double gpu_energy_joules = 0.0;
  std::vector<SimSample> series;
};

inline NodePowerModel power_model_for(const FleetConfig& fleet) {
  return {fleet.gpus_per_node, arch_spec(fleet.arch).tdp_watts, fleet.non_gpu_power_watts};
}

// Stand-alone run of one job at a fixed operating point on an otherwise
// empty fleet. Power is piecewise-constant; samples are emitted every tick
// with a shortened final tick, so energy is exactly the sum of p * dt.
inline SimOutcome simulate_job(const JobPlan& job, const FleetConfig& fleet, const ResponseTable& table) {
  const int available = fleet.racks * fleet.nodes_per_rack;
  if (job.nodes < 1 || job.nodes > available) {
    throw Error(Errc::InsufficientNodes, "job needs " + std::to_string(job.nodes) + " nodes, fleet has " +
                                             std::to_string(available));
  }
  if (!(job.baseline_seconds > 0.0)) throw Error(Errc::InvalidRequest, "baseline runtime must be positive");

  const NodePowerModel model = power_model_for(fleet);
  SimOutcome out;
  out.response = table.lookup(fleet.arch, job.application, job.workload, job.point);
  model.check(out.response);
  out.runtime_scale = out.response.runtime_scale();
  out.runtime_seconds = job.baseline_seconds * out.runtime_scale;

  const double gpu_w = model.gpu_watts(out.response);
  const double node_w = model.node_watts(out.response);
  const double job_w = node_w * job.nodes;
  const double tick = fleet.tick_seconds > 0.0 ? fleet.tick_seconds : 1.0;

  const auto ticks = static_cast<long>(std::ceil(out.runtime_seconds / tick));
  for (long i = 0; i < ticks; ++i) {
    const double t = static_cast<double>(i) * tick;
    const double dt = std::min(tick, out.runtime_seconds - t);
    if (dt <= 0.0) break;
    out.series.push_back({t, dt, gpu_w, node_w, job_w});
    out.energy_joules += job_w * dt;
    out.gpu_energy_joules += gpu_w * fleet.gpus_per_node * job.nodes * dt;
  }
  out.avg_node_power_watts = out.energy_joules / (out.runtime_seconds * job.nodes);
  out.avg_gpu_power_watts = out.gpu_energy_joules / (out.runtime_seconds * job.nodes * fleet.gpus_per_node);
  return out;
}

}  // namespace wpp
