#include <gtest/gtest.h>

#include <map>

#include "wpp/control_plane.hpp"

using namespace wpp;

namespace {

const Principal kAdmin{Role::Admin, "ops"};
const Principal kTenant{Role::Tenant, "tenant-a"};
const Principal kTenantB{Role::Tenant, "tenant-b"};

const ProfileCatalog& shipped() {
  static const ProfileCatalog c = ProfileCatalog::load(WPP_CALIBRATION);
  return c;
}

ApplyRequest req(Pathway p, ScopeKind k, std::string id, std::optional<ProfileId> profile) {
  ApplyRequest r;
  r.pathway = p;
  r.scope = {k, std::move(id)};
  r.profile = profile;
  return r;
}

JobSpec spec(const std::string& line) { return parse_directive(line); }

Errc error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::InvalidRequest;
}

// 8 nodes x 8 B200: 11000 W per busy node at default, 3800 W idle.
constexpr double kNode = 11000.0;
constexpr double kIdle = 3800.0;

}  // namespace

TEST(ControlPlane, IdleFacility) {
  ControlPlane cp(shipped());
  EXPECT_DOUBLE_EQ(cp.baseline_draw(), 8 * kNode);
  EXPECT_DOUBLE_EQ(cp.cap(), 8 * kNode);
  EXPECT_DOUBLE_EQ(cp.facility_power(), 8 * kIdle);
  EXPECT_EQ(cp.gpu_point(0), "DEFAULT");
  EXPECT_FALSE(cp.next_transition());
}

TEST(Apply, TenantTierThenAdminOverride) {
  ControlPlane cp(shipped());
  auto r = cp.apply(req(Pathway::InBand, ScopeKind::Gpu, "gpu3", ProfileId::MaxQTraining), kTenant);
  ASSERT_EQ(r.devices.size(), 1u);
  EXPECT_FALSE(r.conflicts());
  EXPECT_EQ(cp.gpu_point(3), "MAX_Q_TRAINING");
  EXPECT_EQ(cp.gpu_state(3).number("TGP"), 850.0);

  r = cp.apply(req(Pathway::OutOfBand, ScopeKind::Node, "node0", ProfileId::MaxPTraining), kAdmin);
  ASSERT_EQ(r.devices.size(), 8u);
  EXPECT_EQ(cp.gpu_point(3), "MAX_P_TRAINING");
  EXPECT_EQ(cp.gpu_state(3).number("TGP"), 1000.0);
  // the tenant's Max-Q mode conflicts with the admin Max-P mode and loses
  EXPECT_TRUE(cp.effective_config(3).has_discards());
  EXPECT_TRUE(r.conflicts());

  cp.apply(req(Pathway::OutOfBand, ScopeKind::Node, "node0", std::nullopt), kAdmin);
  EXPECT_EQ(cp.gpu_point(3), "MAX_Q_TRAINING");
  cp.apply(req(Pathway::InBand, ScopeKind::Gpu, "3", std::nullopt), kTenant);
  EXPECT_EQ(cp.gpu_point(3), "DEFAULT");
  EXPECT_EQ(cp.gpu_state(3), cp.gpu_state(4));
  EXPECT_TRUE(cp.priorities(3).empty());
}

TEST(Apply, ScopesExpandToGpus) {
  ControlPlane cp(shipped());
  EXPECT_EQ(cp.apply(req(Pathway::OutOfBand, ScopeKind::Rack, "rack1", ProfileId::MaxQInference), kAdmin).devices.size(),
            32u);
  EXPECT_EQ(cp.apply(req(Pathway::OutOfBand, ScopeKind::Fleet, "all", ProfileId::MaxQInference), kAdmin).devices.size(),
            64u);
  EXPECT_EQ(cp.apply(req(Pathway::OutOfBand, ScopeKind::Fleet, "busy", ProfileId::MaxQInference), kAdmin).devices.size(),
            0u);
}

TEST(Apply, Authorization) {
  ControlPlane cp(shipped());
  EXPECT_EQ(error_of([&] { cp.apply(req(Pathway::OutOfBand, ScopeKind::Gpu, "gpu0", ProfileId::MaxQTraining), kTenant); }),
            Errc::Unauthorized);
  EXPECT_EQ(error_of([&] { cp.apply(req(Pathway::InBand, ScopeKind::Node, "node0", ProfileId::MaxQTraining), kTenant); }),
            Errc::Unauthorized);
  EXPECT_EQ(error_of([&] { cp.apply(req(Pathway::InBand, ScopeKind::Gpu, "gpu99", ProfileId::MaxQTraining), kTenant); }),
            Errc::UnknownScope);
  EXPECT_EQ(error_of([&] { cp.apply(req(Pathway::OutOfBand, ScopeKind::Fleet, "some", ProfileId::MaxQTraining), kAdmin); }),
            Errc::UnknownScope);
  EXPECT_EQ(error_of([&] { cp.apply(req(Pathway::InBand, ScopeKind::Job, "job-7", ProfileId::MaxQTraining), kTenant); }),
            Errc::UnknownScope);

  cp.submit(spec("sbatch -N 1 --application HPL"), kTenant);
  EXPECT_EQ(error_of([&] { cp.apply(req(Pathway::InBand, ScopeKind::Gpu, "gpu0", ProfileId::MaxQHpcCompute), kTenantB); }),
            Errc::Unauthorized);
  EXPECT_EQ(error_of([&] { cp.apply(req(Pathway::InBand, ScopeKind::Job, "job-1", ProfileId::MaxQHpcCompute), kTenantB); }),
            Errc::Unauthorized);
  EXPECT_EQ(cp.apply(req(Pathway::InBand, ScopeKind::Job, "job-1", ProfileId::MaxQHpcCompute), kTenant).devices.size(), 8u);
  EXPECT_EQ(cp.audit_log().back().kind, "apply");
  EXPECT_EQ(cp.audit_log().back().devices.size(), 8u);
}

TEST(Jobs, SchedulerPathMatchesCalibration) {
  ControlPlane cp(shipped());
  const auto r = run_job(cp, spec("sbatch --power-profile=MAX-Q-Training -N 4 --application NeMo_nemotron_22b -t 98"),
                         kTenant);
  ASSERT_EQ(r.state, JobState::Finished);
  EXPECT_NEAR(*r.ended - *r.started, 98 * 60 / 0.98, 1e-6);
  const auto rep = cp.savings_report(r.id);
  EXPECT_NEAR(rep.actual.perf_factor, 0.98, 1e-9);
  EXPECT_NEAR(rep.actual.system_power_factor, 0.88, 1e-9);
  EXPECT_NEAR(rep.actual.gpu_power_factor, 0.82, 1e-9);
  EXPECT_NEAR(rep.actual.energy_saving, 1 - 0.88 / 0.98, 1e-9);
  EXPECT_NEAR(rep.expected.energy_saving, 1 - 0.88 / 0.98, 1e-12);
  EXPECT_NEAR(rep.delta.energy_saving, 0.0, 1e-9);
  EXPECT_NE(rep.recommendation.find("keep MAX_Q_TRAINING"), std::string::npos);
  // devices return to defaults when the job ends
  EXPECT_EQ(cp.gpu_point(0), "DEFAULT");
  EXPECT_DOUBLE_EQ(cp.facility_power(), 8 * kIdle);
}

TEST(Jobs, ProfileOfAnotherClassUsesSameGoalVariant) {
  ControlPlane cp(shipped());
  const auto r = run_job(cp, spec("sbatch --power-profile=MAX_Q_TRAINING -N 1 --application HPL"), kTenant);
  // HPL is hpc_compute: the Max-Q compute row applies
  EXPECT_NEAR(r.expected.system_power_factor, 0.87, 1e-12);
  EXPECT_NEAR(r.actual->system_power_factor, 0.87, 1e-9);
}

TEST(Jobs, MissingCalibrationRowRejectedAtSubmit) {
  FleetConfig f = shipped().fleet();
  f.arch = GpuArch::H100;
  ControlPlane cp(shipped(), ControlPlaneOptions{.fleet = f});
  EXPECT_EQ(error_of([&] { cp.submit(spec("sbatch --power-profile=MAX_P_TRAINING -N 1"), kTenant); }),
            Errc::NoCalibrationRow);
}

TEST(Jobs, DefaultJobGetsMaxQSuggestion) {
  ControlPlane cp(shipped());
  const auto r = run_job(cp, spec("sbatch -N 2 --application GROMACS -t 10"), kTenant);
  EXPECT_NE(r.recommendation.find("--power-profile=MAX_Q_HPC_COMPUTE"), std::string::npos);
  EXPECT_NEAR(r.actual->energy_saving, 0.0, 1e-9);
}

TEST(Jobs, LargePerfLossSuggestsMaxP) {
  FleetConfig f = shipped().fleet();
  f.arch = GpuArch::H100;
  ControlPlane cp(shipped(), ControlPlaneOptions{.fleet = f});
  const auto r = run_job(cp, spec("sbatch --power-profile=MAX_Q_INFERENCE -N 1 --workload-class ai_inference"), kTenant);
  EXPECT_NEAR(r.actual->perf_factor, 0.84, 1e-9);
  EXPECT_NE(r.recommendation.find("MAX_P_INFERENCE"), std::string::npos);
}

TEST(Jobs, CalibrationMissSuggestsHints) {
  ResponseTable truth;
  for (auto e : shipped().response().entries()) {
    if (e.workload == "ai_training" && e.point == "MAX_Q_TRAINING") e.system_power_factor = 0.99;
    truth.add(e);
  }
  ControlPlaneOptions o;
  o.simulation_response = truth;
  ControlPlane cp(shipped(), o);
  const auto r = run_job(cp, spec("sbatch --power-profile=MAX_Q_TRAINING -N 1"), kTenant);
  EXPECT_NEAR(r.actual->system_power_factor, 0.99, 1e-9);
  EXPECT_NE(r.recommendation.find("re-profile with workload hints"), std::string::npos);
}

TEST(Admission, ProfileMakesAdmissionPossible) {
  ControlPlaneOptions o;
  o.facility_cap_watts = 55000.0;
  ControlPlane cp(shipped(), o);
  // 4 x 9680 + 4 x 3800 = 53920 fits; 4 x 11000 + 4 x 3800 = 59200 does not
  const auto d = cp.validate(spec("sbatch --power-profile=MAX_Q_TRAINING -N 4 --application NeMo_nemotron_22b"));
  EXPECT_TRUE(d.admitted);
  EXPECT_TRUE(d.profile_enabled_admission);
  EXPECT_DOUBLE_EQ(d.projected_job_watts, 4 * 9680.0);
  EXPECT_DOUBLE_EQ(d.default_job_watts, 4 * kNode);

  const auto sub = cp.submit(spec("sbatch -N 4 --application NeMo_nemotron_22b"), kTenant);
  EXPECT_EQ(sub.state, JobState::Rejected);
  EXPECT_NEAR(sub.decision.deficit_watts, 59200.0 - 55000.0, 1e-6);
}

TEST(Admission, FifoQueueWithoutBackfill) {
  ControlPlane cp(shipped());
  const auto a = cp.submit(spec("sbatch -N 6 -t 10"), kTenant);
  const auto b = cp.submit(spec("sbatch -N 4 -t 10"), kTenant);
  const auto c = cp.submit(spec("sbatch -N 1 -t 10"), kTenant);
  EXPECT_EQ(a.state, JobState::Running);
  EXPECT_EQ(b.state, JobState::Queued);
  EXPECT_EQ(c.state, JobState::Queued);  // would fit, but no backfill
  cp.advance(600, kAdmin);
  EXPECT_EQ(cp.job(a.job_id).state, JobState::Finished);
  EXPECT_EQ(cp.job(b.job_id).state, JobState::Running);
  EXPECT_EQ(cp.job(c.job_id).state, JobState::Running);
  EXPECT_DOUBLE_EQ(*cp.job(b.job_id).started, 600.0);
  EXPECT_EQ(cp.submit(spec("sbatch -N 9"), kTenant).state, JobState::Rejected);
}

TEST(Reports, Errors) {
  ControlPlane cp(shipped());
  EXPECT_EQ(error_of([&] { cp.savings_report("job-1"); }), Errc::UnknownJob);
  cp.submit(spec("sbatch -N 1"), kTenant);
  EXPECT_EQ(error_of([&] { cp.savings_report("job-1"); }), Errc::JobNotFinished);
}

TEST(History, FiltersAndOrder) {
  ControlPlane cp(shipped());
  run_job(cp, spec("sbatch -N 1 --application HPL -t 1"), kTenant);
  run_job(cp, spec("sbatch -N 1 --application RTM --power-profile=MAX_Q_HPC_MEMORY -t 1"), kTenant);
  run_job(cp, spec("sbatch -N 1 --application HPL --power-profile=MAX-Q-HPC-Compute -t 1"), kTenant);
  EXPECT_EQ(cp.history().size(), 3u);
  EXPECT_EQ(cp.history({"HPL", "", {}, {}}).size(), 2u);
  EXPECT_EQ(cp.history({"", "max-q-hpc-compute", {}, {}}).size(), 1u);
  const auto late = cp.history({"", "", 61.0, {}});
  ASSERT_EQ(late.size(), 1u);
  EXPECT_EQ(late[0].id, "job-3");
}

TEST(Telemetry, ConservationAndEnergy) {
  ControlPlane cp(shipped());
  cp.submit(spec("sbatch -N 3 --application HPL --power-profile=MAX_Q_HPC_COMPUTE -t 2"), kTenant);
  cp.advance(30, kAdmin);
  cp.submit(spec("sbatch -N 2 --application DeepSeek\\ R1 -t 1"), kTenant);
  cp.advance(200, kAdmin);
  const Hierarchy& h = cp.hierarchy();
  const auto node = cp.telemetry(Level::Node, "", 0, cp.now());
  const auto rack = cp.telemetry(Level::Rack, "", 0, cp.now());
  const auto fac = cp.telemetry(Level::Facility, "", 0, cp.now());
  ASSERT_EQ(fac.size(), 231u);
  for (std::size_t t = 0; t < fac.size(); ++t) {
    double racks = 0.0;
    for (int r = 0; r < h.racks(); ++r) {
      double nodes = 0.0;
      for (int n : h.rack_nodes(r)) nodes += node[t * h.nodes() + n].power_watts;
      ASSERT_EQ(rack[t * h.racks() + r].power_watts, nodes);
      racks += rack[t * h.racks() + r].power_watts;
    }
    ASSERT_EQ(fac[t].power_watts, racks);
  }
  // cumulative energy is the integral of the piecewise-constant power
  double e = 0.0;
  for (const auto& s : cp.segments()) e += rollup(s.frame, h, Level::Facility)[0] * (s.end - s.start);
  EXPECT_NEAR(fac.back().energy_joules_cum, e, 1e-6 * e);
  EXPECT_EQ(cp.telemetry(Level::Gpu, "gpu0", 10, 10)[0].active_profile, "MAX_Q_HPC_COMPUTE");
  EXPECT_EQ(cp.telemetry(Level::Facility, "", 40, 40)[0].active_profile, "MIXED");
}

TEST(DemandResponse, NoopWhenUnderCap) {
  ControlPlane cp(shipped());
  const auto e = cp.demand_response({"", 80000.0, 0.0, 100.0, "utility"}, kAdmin);
  EXPECT_EQ(e.phase, EventPhase::Active);
  EXPECT_TRUE(e.noop);
  EXPECT_DOUBLE_EQ(cp.cap(), 80000.0);
  cp.advance(100, kAdmin);
  EXPECT_DOUBLE_EQ(cp.cap(), 88000.0);
  EXPECT_EQ(cp.event(e.event.id).phase, EventPhase::Expired);
}

TEST(DemandResponse, Validation) {
  ControlPlane cp(shipped());
  EXPECT_EQ(error_of([&] { cp.demand_response({"", 80000.0, 0.0, 100.0, ""}, kTenant); }), Errc::Unauthorized);
  EXPECT_EQ(error_of([&] { cp.demand_response({"", -1.0, 0.0, 100.0, ""}, kAdmin); }), Errc::InvalidEvent);
  EXPECT_EQ(error_of([&] { cp.demand_response({"", 1.0, 100.0, 100.0, ""}, kAdmin); }), Errc::InvalidEvent);
  cp.demand_response({"a", 80000.0, 10.0, 100.0, ""}, kAdmin);
  EXPECT_EQ(error_of([&] { cp.demand_response({"b", 80000.0, 50.0, 150.0, ""}, kAdmin); }), Errc::OverlappingEvent);
  EXPECT_NO_THROW(cp.demand_response({"c", 80000.0, 100.0, 150.0, ""}, kAdmin));
}

TEST(DemandResponse, SwitchesToMaxQAndRestores) {
  ControlPlane cp(shipped());
  cp.submit(spec("sbatch -N 8 --application HPL -t 100"), kTenant);
  cp.apply(req(Pathway::OutOfBand, ScopeKind::Node, "node1", ProfileId::MaxPHpcCompute), kAdmin);
  std::map<int, std::optional<TierAssignment>> before;
  std::vector<GpuState> states;
  for (int g = 0; g < 64; ++g) {
    before[g] = cp.tier(g, Tier::Admin);
    states.push_back(cp.gpu_state(g));
  }
  const auto e = cp.demand_response({"dr", 0.9 * 88000.0, 60.0, 600.0, "utility"}, kAdmin);
  EXPECT_EQ(e.phase, EventPhase::Pending);
  cp.advance(60, kAdmin);
  const auto& active = cp.event("dr");
  EXPECT_TRUE(active.switched);
  EXPECT_FALSE(active.cap_unreachable);
  EXPECT_EQ(active.switched_gpus, 64);
  EXPECT_EQ(cp.gpu_point(9), "MAX_Q_HPC_COMPUTE");
  EXPECT_NEAR(cp.facility_power(), 8 * 0.87 * kNode, 1e-6);
  cp.advance(600, kAdmin);
  EXPECT_EQ(cp.event("dr").phase, EventPhase::Expired);
  for (int g = 0; g < 64; ++g) {
    ASSERT_EQ(cp.tier(g, Tier::Admin), before[g]);
    ASSERT_EQ(cp.gpu_state(g), states[g]);
  }
  EXPECT_DOUBLE_EQ(cp.cap(), 88000.0);
}

TEST(DemandResponse, SuspendsNodesWhenMaxQIsNotEnough) {
  ControlPlane cp(shipped());
  cp.submit(spec("sbatch -N 4 --application HPL -t 100"), kTenant);
  cp.submit(spec("sbatch -N 4 --application GROMACS -t 100"), kTenant);
  cp.demand_response({"deep", 50000.0, 0.0, 300.0, ""}, kAdmin);
  const auto& e = cp.event("deep");
  EXPECT_TRUE(e.cap_unreachable);
  EXPECT_GT(e.suspended_nodes, 0);
  EXPECT_LE(cp.facility_power(), 50000.0);
  // the newer job loses nodes first, highest index first
  EXPECT_TRUE(cp.node_suspended(7));
  EXPECT_FALSE(cp.node_suspended(0));
  cp.advance(300, kAdmin);
  for (int n = 0; n < 8; ++n) EXPECT_FALSE(cp.node_suspended(n));
}

TEST(DemandResponse, AdminChoiceDuringEventSurvivesExpiry) {
  ControlPlane cp(shipped());
  cp.submit(spec("sbatch -N 8 --application HPL -t 100"), kTenant);
  cp.demand_response({"dr", 80000.0, 0.0, 100.0, ""}, kAdmin);
  cp.apply(req(Pathway::OutOfBand, ScopeKind::Gpu, "gpu0", ProfileId::MaxQHpcMemory), kAdmin);
  cp.advance(100, kAdmin);
  EXPECT_EQ(cp.gpu_point(0), "MAX_Q_HPC_MEMORY");
  EXPECT_EQ(cp.gpu_point(1), "DEFAULT");
}

TEST(Alerts, FireOncePerJobAboveThreshold) {
  ResponseTable truth;
  for (auto e : shipped().response().entries()) {
    if (e.workload == "HPL" && e.point == "MAX_Q_HPC_COMPUTE") e.perf_factor = 0.95;
    truth.add(e);
  }
  ControlPlaneOptions o;
  o.simulation_response = truth;
  ControlPlane cp(shipped(), o);
  EXPECT_EQ(error_of([&] { cp.add_alert_rule({"r", "perf_degradation", 0.03, "*"}, kTenant); }), Errc::Unauthorized);
  EXPECT_EQ(error_of([&] { cp.add_alert_rule({"r", "latency", 0.03, "*"}, kAdmin); }), Errc::InvalidRequest);
  cp.add_alert_rule({"r", "perf_degradation", 0.03, "*"}, kAdmin);
  run_job(cp, spec("sbatch -N 1 --application HPL --power-profile=MAX_Q_HPC_COMPUTE -t 5"), kTenant);
  run_job(cp, spec("sbatch -N 1 --application LAMMPS --power-profile=MAX_Q_HPC_COMPUTE -t 5"), kTenant);
  ASSERT_EQ(cp.alerts().size(), 1u);
  EXPECT_EQ(cp.alerts()[0].job_id, "job-1");
  EXPECT_NEAR(cp.alerts()[0].degradation, 0.05, 1e-12);
}

TEST(Persistence, SnapshotRestoreRoundTrip) {
  ControlPlane cp(shipped());
  cp.submit(spec("sbatch -N 4 --application HPL --power-profile=MAX_Q_HPC_COMPUTE -t 10"), kTenant);
  cp.apply(req(Pathway::OutOfBand, ScopeKind::Rack, "rack1", ProfileId::MaxQInference), kAdmin);
  cp.demand_response({"dr", 60000.0, 100.0, 400.0, ""}, kAdmin);
  cp.advance(200, kAdmin);
  const json snap = cp.snapshot();
  ControlPlane copy(shipped());
  copy.restore(snap);
  EXPECT_EQ(copy.snapshot(), snap);
  cp.advance(500, kAdmin);
  copy.advance(500, kAdmin);
  EXPECT_EQ(json(copy.jobs()), json(cp.jobs()));
  EXPECT_EQ(copy.facility_power(), cp.facility_power());

  json bad = snap;
  bad["dims"] = {1, 1, 1};
  EXPECT_EQ(error_of([&] { copy.restore(bad); }), Errc::StoreCorrupt);
  bad = snap;
  bad.erase("jobs");
  EXPECT_EQ(error_of([&] { copy.restore(bad); }), Errc::StoreCorrupt);
}

TEST(Persistence, ReplayReproducesState) {
  ControlPlane cp(shipped());
  cp.add_alert_rule({"", "perf_degradation", 0.005, "*"}, kAdmin);
  cp.submit(spec("sbatch -N 4 --application HPL --power-profile=MAX_Q_HPC_COMPUTE -t 10"), kTenant);
  cp.apply(req(Pathway::InBand, ScopeKind::Gpu, "gpu60", ProfileId::MaxPInference), kTenantB);
  cp.demand_response({"", 60000.0, 100.0, 400.0, ""}, kAdmin);
  cp.advance(1000, kAdmin);
  ControlPlane copy(shipped());
  copy.replay(cp.audit_log());
  EXPECT_EQ(copy.snapshot(), cp.snapshot());
}
