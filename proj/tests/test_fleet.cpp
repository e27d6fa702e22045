#include <gtest/gtest.h>

#include <numeric>

#include "wpp/catalog.hpp"
#include "wpp/fleet.hpp"
#include "wpp/simulate.hpp"

using namespace wpp;

namespace {
const ProfileCatalog& shipped() {
  static const ProfileCatalog c = ProfileCatalog::load(WPP_CALIBRATION);
  return c;
}
}  // namespace

TEST(Hierarchy, IdsAndIndices) {
  Hierarchy h(2, 3, 4);
  EXPECT_EQ(h.racks(), 2);
  EXPECT_EQ(h.nodes(), 6);
  EXPECT_EQ(h.gpus(), 24);
  EXPECT_EQ(h.node_of_gpu(13), 3);
  EXPECT_EQ(h.rack_of_node(3), 1);
  EXPECT_EQ(h.index_of(Level::Gpu, "gpu13"), 13);
  EXPECT_EQ(h.index_of(Level::Rack, "rack1"), 1);
  EXPECT_EQ(h.index_of(Level::Facility, "facility"), 0);
  EXPECT_THROW(h.index_of(Level::Node, "node6"), Error);
  EXPECT_THROW(h.index_of(Level::Node, "rack0"), Error);
}

TEST(Rollup, ParentsEqualChildSums) {
  Hierarchy h(2, 2, 3);
  PowerFrame f;
  for (int g = 0; g < h.gpus(); ++g) f.gpu_watts.push_back(100.0 + 7.3 * g);
  for (int n = 0; n < h.nodes(); ++n) f.node_other_watts.push_back(1000.0 + n);
  const auto node = rollup(f, h, Level::Node);
  const auto rack = rollup(f, h, Level::Rack);
  const auto fac = rollup(f, h, Level::Facility);
  for (int n = 0; n < h.nodes(); ++n) {
    double s = 0.0;
    for (int g : h.node_gpus(n)) s += f.gpu_watts[g];
    EXPECT_EQ(node[n], s + f.node_other_watts[n]);
  }
  for (int r = 0; r < h.racks(); ++r) {
    double s = 0.0;
    for (int n : h.rack_nodes(r)) s += node[n];
    EXPECT_EQ(rack[r], s);
  }
  EXPECT_EQ(fac[0], rack[0] + rack[1]);
  PowerFrame bad = f;
  bad.gpu_watts.pop_back();
  EXPECT_THROW(rollup(bad, h, Level::Node), Error);
}

TEST(GpuState, ApplyConfigResetsUnmentionedKnobs) {
  const auto dict = shipped().knobs(GpuArch::B200);
  const auto cfg = arbitrate(shipped().seed_registry(ProfileId::MaxQTraining, {}, GpuArch::B200));
  const auto tuned = apply_config(GpuState::defaults(GpuArch::B200, dict), cfg, GpuArch::B200, dict);
  EXPECT_EQ(tuned.number("TGP"), 850.0);
  const auto back = apply_config(tuned, EffectiveConfig{}, GpuArch::B200, dict);
  EXPECT_EQ(back, GpuState::defaults(GpuArch::B200, dict));
}

TEST(SimulateJob, EnergyFollowsCalibration) {
  FleetConfig fleet = shipped().fleet();
  JobPlan plan;
  plan.application = "NeMo_nemotron_22b";
  plan.point = "MAX_Q_TRAINING";
  plan.nodes = 4;
  plan.baseline_seconds = 980.0;
  const auto out = simulate_job(plan, fleet, shipped().response());
  // 980 s / 0.98 = 1000 s; node 0.88 * 11000 W = 9680 W; 4 nodes
  EXPECT_NEAR(out.runtime_seconds, 1000.0, 1e-9);
  EXPECT_NEAR(out.energy_joules, 4 * 9680.0 * 1000.0, 1e-3);
  EXPECT_NEAR(out.avg_gpu_power_watts, 820.0, 1e-9);
  EXPECT_EQ(out.series.size(), 1000u);
  double e = 0.0;
  for (const auto& s : out.series) e += s.job_watts * s.dt;
  EXPECT_EQ(e, out.energy_joules);
}

TEST(SimulateJob, ShortFinalTick) {
  FleetConfig fleet = shipped().fleet();
  JobPlan plan;
  plan.baseline_seconds = 2.5;
  const auto out = simulate_job(plan, fleet, shipped().response());
  ASSERT_EQ(out.series.size(), 3u);
  EXPECT_DOUBLE_EQ(out.series.back().dt, 0.5);
}

TEST(SimulateJob, Errors) {
  FleetConfig fleet = shipped().fleet();
  JobPlan plan;
  plan.nodes = 9;
  EXPECT_THROW(simulate_job(plan, fleet, shipped().response()), Error);
  plan.nodes = 1;
  plan.baseline_seconds = 0;
  EXPECT_THROW(simulate_job(plan, fleet, shipped().response()), Error);
}
