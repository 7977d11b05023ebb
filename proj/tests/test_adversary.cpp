#include "doctest.h"
#include "mmspoof/adversary.hpp"
#include "mmspoof/airsim.hpp"
#include "mmspoof/radar_dsp.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace mmspoof;

namespace {

constexpr double kSenseRate = 400e6;

BasebandSignal window_with_chirps(const std::vector<Eigen::Index>& offsets, Eigen::Index len, double noise,
                                  std::uint64_t seed) {
  const BasebandSignal c = make_chirp(ChirpParams::long_range(), 0, kSenseRate);
  BasebandSignal w;
  w.sample_rate = kSenseRate;
  w.samples = CVector::Zero(len);
  for (Eigen::Index o : offsets) {
    const Eigen::Index n = std::min(c.size(), len - o);
    w.samples.segment(o, n) += c.samples.head(n);
  }
  if (noise > 0.0) add_complex_gaussian(w.samples, noise, seed);
  return w;
}

TrackState track_at(double range, double velocity = 0.0, double angle = 0.0) {
  TrackState t;
  t.x << range, velocity, angle;
  return t;
}

Reflector car(double range, double angle = 0.0, double v = 0.0) {
  Reflector r;
  r.range = range;
  r.angle = angle;
  r.radial_velocity = v;
  r.reflectivity = reflectivity_from_rcs(10.0, kSpeedOfLight / 62.61e9);
  return r;
}

FrameResult run(const StrategyConfig& cfg, const std::vector<AttackerNode>& nodes,
                const std::vector<TrackState>& tracks, const PlanContext& ctx, std::uint64_t seed,
                const std::vector<Reflector>& refl = {}) {
  RadarConfig rc;
  rc.tx = ctx.tx;
  const auto cmds = plan_attack(cfg, nodes, tracks, static_cast<long>(seed), ctx);
  std::vector<ScheduledEmitter> em;
  for (std::size_t i = 0; i < nodes.size(); ++i) em.push_back({nodes[i], cmds[i].emission});
  FrameSpec fs;
  fs.frame_id = static_cast<long>(seed);
  return process_frame(propagate_frame(rc.tx, refl, em, rc.geometry, ctx.link, seed, fs), rc);
}

std::vector<AttackerNode> pair_nodes(double range, double th1, double th2) {
  std::vector<AttackerNode> n(2);
  n[0].position = {range, th1};
  n[1].position = {range, th2};
  return n;
}

}  // namespace

TEST_CASE("template length follows the sensing fraction") {
  const BasebandSignal t = victim_template(ChirpParams::long_range(), kSenseRate);
  CHECK(t.size() == static_cast<Eigen::Index>(std::ceil(kTemplateFraction * 12000)));
  CHECK(static_cast<double>(t.size()) / 12000.0 < 0.05);
  CHECK_THROWS_AS(victim_template(ChirpParams::long_range(), kSenseRate, 0.0), std::invalid_argument);
}

TEST_CASE("matched-filter sensing") {
  const BasebandSignal templ = victim_template(ChirpParams::long_range(), kSenseRate);
  SUBCASE("chirp at SNR 10 dB, random offsets") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<Eigen::Index> u(0, 15000);
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::Index off = u(rng);
      const BasebandSignal w = window_with_chirps({off}, 30000, 0.1, 100 + trial);
      const auto r = sense_victim(w, templ);
      REQUIRE(r.has_value());
      CHECK(std::abs(r->lag - off) <= 1);
      CHECK(r->confidence > 0.7);
      CHECK(r->detect_time == doctest::Approx(static_cast<double>(r->lag) / kSenseRate));
    }
  }
  SUBCASE("pure noise gives nothing") {
    for (int trial = 0; trial < 10; ++trial) {
      CHECK_FALSE(sense_victim(window_with_chirps({}, 30000, 1.0, 40 + trial), templ).has_value());
    }
  }
  SUBCASE("two chirps in the window: the earliest wins") {
    const auto r = sense_victim(window_with_chirps({2000, 17000}, 32000, 0.1, 5), templ);
    REQUIRE(r.has_value());
    CHECK(std::abs(r->lag - 2000) <= 1);
  }
  SUBCASE("template longer than window") {
    BasebandSignal w;
    w.sample_rate = kSenseRate;
    w.samples = CVector::Zero(10);
    CHECK_THROWS_AS(sense_victim(w, templ), std::invalid_argument);
  }
}

TEST_CASE("Kalman tracking of a constant-velocity victim") {
  const TrackNoise noise;
  const double dt = 4.45e-3;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  double se_r = 0.0, se_v = 0.0, se_a = 0.0;
  int n = 0;
  const int runs = 20;
  for (int run = 0; run < runs; ++run) {
    double r = 30.0;
    const double v = -10.0, a = 4.0;
    TrackState s = init_track({r + noise.sigma_range * g(rng), v + noise.sigma_velocity * g(rng), a}, noise);
    for (int k = 1; k <= 100; ++k) {
      r += v * dt;
      const TrackMeasurement m{r + noise.sigma_range * g(rng), v + noise.sigma_velocity * g(rng),
                               a + noise.sigma_angle * g(rng)};
      s = track_victim(s, m, dt, noise);
      if (k > 50) {
        se_r += (s.x[0] - r) * (s.x[0] - r);
        se_v += (s.x[1] - v) * (s.x[1] - v);
        se_a += (s.x[2] - a) * (s.x[2] - a);
        ++n;
      }
    }
  }
  CHECK(std::sqrt(se_r / n) < 0.3);
  CHECK(std::sqrt(se_v / n) < 0.5);
  CHECK(std::sqrt(se_a / n) < 0.5);
}

TEST_CASE("noise-free tracking converges to truth in two updates") {
  TrackNoise zero;
  zero.accel_psd = zero.angle_psd = 0.0;
  zero.sigma_range = zero.sigma_velocity = zero.sigma_angle = 0.0;
  TrackState s = track_at(5.0, 3.0, -2.0);
  const double dt = 0.01;
  double r = 20.0;
  const double v = 7.0;
  for (int k = 0; k < 2; ++k) {
    r += v * dt;
    s = track_victim(s, TrackMeasurement{r, v, 6.0}, dt, zero);
  }
  CHECK(s.x[0] == doctest::Approx(r).epsilon(1e-12));
  CHECK(s.x[1] == doctest::Approx(v).epsilon(1e-12));
  CHECK(s.x[2] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("missed measurement grows the covariance") {
  const TrackNoise noise;
  TrackState s = init_track({25.0, -5.0, 1.0}, noise);
  for (int k = 0; k < 5; ++k) {
    const TrackState next = track_victim(s, std::nullopt, 4.45e-3, noise);
    CHECK(next.P.trace() > s.P.trace());
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(next.P);
    CHECK(es.eigenvalues().minCoeff() >= 0.0);
    s = next;
  }
}

TEST_CASE("tracker rejects a non-PSD covariance and a bad step") {
  TrackState s;
  s.P = Eigen::Matrix3d::Identity();
  s.P(1, 1) = -1.0;
  CHECK_THROWS_AS(track_victim(s, std::nullopt, 0.01, TrackNoise{}), std::invalid_argument);
  CHECK_THROWS_AS(track_victim(TrackState{}, std::nullopt, 0.0, TrackNoise{}), std::invalid_argument);
}

TEST_CASE("delay scheduling") {
  const double tf = ChirpParams::long_range().frame_period;
  SUBCASE("20 m attacker spoofs 13 m end to end") {
    AttackerNode node;
    node.position = {20.0, 0.0};
    node.sensing_latency = 1e-6;
    node.switch_latency = 10e-9;
    const DelaySchedule s = schedule_delay(track_at(20.0), node, 13.0, tf);
    REQUIRE(s.feasible);
    CHECK(s.frame_lag >= 1);
    CHECK(s.fine_delay >= node.switch_latency);
    StrategyConfig cfg;
    cfg.target.d_spoof = 13.0;
    const FrameResult fr = run(cfg, {node}, {track_at(20.0)}, PlanContext{}, 3);
    REQUIRE(fr.cloud.detections.size() == 1);
    CHECK(std::abs(fr.cloud.detections[0].range - 13.0) <= range_bin_width(ChirpParams::long_range()) / 2.0);
  }
  SUBCASE("same-frame bound at the default latencies") {
    CHECK(same_frame_max_range(AttackerNode{}, 50.0) == doctest::Approx(38.75).epsilon(1e-9));
  }
  SUBCASE("colocated ideal attacker") {
    AttackerNode node;
    node.position = {0.0, 0.0};
    node.sensing_latency = node.switch_latency = 0.0;
    const DelaySchedule s = schedule_delay(track_at(0.0), node, 42.0, tf, LagLimits{0, 0});
    REQUIRE(s.feasible);
    CHECK(s.frame_lag == 0);
    CHECK(s.fine_delay == doctest::Approx(2.0 * 42.0 / kSpeedOfLight).epsilon(1e-12));
  }
  SUBCASE("without lag, infeasible exactly when the bound is violated") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> up(0.5, 60.0), ud(1.0, 60.0);
    const AttackerNode node;
    for (int i = 0; i < 500; ++i) {
      const double p = up(rng), d = ud(rng);
      const DelaySchedule s = schedule_delay(track_at(p), node, d, tf, LagLimits{0, 0});
      CHECK(s.feasible == (p <= same_frame_max_range(node, d)));
    }
  }
  SUBCASE("lagging by a frame makes every geometry feasible") {
    const DelaySchedule s = schedule_delay(track_at(59.0), AttackerNode{}, 2.0, tf, LagLimits{0, 8});
    REQUIRE(s.feasible);
    CHECK(s.frame_lag == 1);
  }
  SUBCASE("pre-condition") {
    CHECK_THROWS_AS(schedule_delay(track_at(10.0), AttackerNode{}, 0.0, tf), std::invalid_argument);
  }
}

TEST_CASE("planner errors") {
  const std::vector<AttackerNode> one(1), two(2);
  const std::vector<TrackState> t1(1), t2(2);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::synchronous_pair;
  CHECK_THROWS_AS(plan_attack(cfg, two, t2, 0, PlanContext{}), std::invalid_argument);
  PlanContext sync;
  sync.perfect_sync = true;
  CHECK_NOTHROW(plan_attack(cfg, two, t2, 0, sync));
  CHECK_THROWS_AS(plan_attack(cfg, one, t1, 0, sync), std::invalid_argument);
  cfg.kind = StrategyKind::asynchronous_pair;
  CHECK_THROWS_AS(plan_attack(cfg, one, t1, 0, PlanContext{}), std::invalid_argument);
  cfg.kind = StrategyKind::add_obstacle;
  CHECK_THROWS_AS(plan_attack(cfg, two, t1, 0, PlanContext{}), std::invalid_argument);
  cfg.target.d_spoof = -1.0;
  CHECK_THROWS_AS(plan_attack(cfg, one, t1, 0, PlanContext{}), std::invalid_argument);
}

TEST_CASE("strategy to emission mapping") {
  const std::vector<AttackerNode> nodes = pair_nodes(20.0, -5.0, 5.0);
  const std::vector<TrackState> tracks{track_at(20.0), track_at(20.0)};
  PlanContext ctx;
  StrategyConfig cfg;
  cfg.target = {30.0, 10.0, 0.0};
  auto cmds = plan_attack(cfg, nodes, tracks, 7, ctx);
  REQUIRE(cmds.size() == 2);
  CHECK(cmds[0].frame_id == 7);
  CHECK(cmds[0].emission.kind == EmissionKind::chirp);
  CHECK(cmds[0].emission.phase_ramp == doctest::Approx(-doppler_phase_increment(10.0, ctx.tx)));
  CHECK(cmds[1].emission.kind == EmissionKind::none);

  cfg.kind = StrategyKind::multi_obstacle;
  cfg.extra_ranges = {40.0, 50.0};
  cmds = plan_attack(cfg, nodes, tracks, 7, ctx);
  CHECK(cmds[0].emission.kind == EmissionKind::spoof_train);
  CHECK(cmds[0].emission.fine_delays.size() == 3);

  cfg.kind = StrategyKind::asynchronous_pair;
  cfg.power_split = std::make_pair(1.0, 2.0);
  cmds = plan_attack(cfg, nodes, tracks, 7, ctx);
  CHECK(cmds[0].emission.kind == EmissionKind::chirp_plus_noise);
  CHECK(cmds[1].emission.kind == EmissionKind::noise_only);
  CHECK(cmds[0].emission.noise_seed == cmds[1].emission.noise_seed);
  CHECK(cmds[1].emission.power_scale == doctest::Approx(2.0));
}

TEST_CASE("loopback consistency of single-obstacle spoofing") {
  const ChirpParams tx = ChirpParams::long_range();
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> ud(3.0, 60.0), uv(-30.0, 30.0), up(5.0, 25.0);
  int good = 0;
  const int trials = 100;
  for (int i = 0; i < trials; ++i) {
    StrategyConfig cfg;
    cfg.target.d_spoof = ud(rng);
    cfg.target.v_spoof = uv(rng);
    AttackerNode node;
    node.position = {up(rng), 0.0};
    const FrameResult fr = run(cfg, {node}, {track_at(node.position.range)}, PlanContext{}, 500 + i);
    for (const auto& d : fr.cloud.detections) {
      if (std::abs(d.range - cfg.target.d_spoof) <= range_bin_width(tx) / 2.0 &&
          std::abs(d.velocity - cfg.target.v_spoof) <= velocity_bin_width(tx) / 2.0) {
        ++good;
        break;
      }
    }
  }
  CHECK(good >= 99);
}

TEST_CASE("asynchronous chirp-only pair fails to merge") {
  RadarConfig rc;
  const LinkBudget lb = LinkBudget::calibrated();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ramp(-kPi, kPi);
  int merged_cfo = 0, merged_ramp = 0;
  for (int seed = 0; seed < 100; ++seed) {
    std::vector<AttackerNode> nodes = pair_nodes(20.0, -5.0, 5.0);
    std::vector<ScheduledEmitter> em;
    for (auto& n : nodes) {
      const DelaySchedule s = schedule_delay(track_at(20.0), n, 35.0, rc.tx.frame_period);
      Emission e;
      e.kind = EmissionKind::chirp;
      e.fine_delays = {s.fine_delay};
      e.frame_lag = s.frame_lag;
      em.push_back({n, e});
    }
    FrameSpec fs;
    fs.frame_id = seed;
    em[1].node.cfo = 700e3;
    if (process_frame(propagate_frame(rc.tx, {}, em, rc.geometry, lb, seed, fs), rc).cloud.detections.size() == 1)
      ++merged_cfo;
    em[1].node.cfo = 0.0;
    em[0].emission.phase_ramp = ramp(rng);
    em[1].emission.phase_ramp = ramp(rng);
    if (process_frame(propagate_frame(rc.tx, {}, em, rc.geometry, lb, seed, fs), rc).cloud.detections.size() == 1)
      ++merged_ramp;
  }
  CHECK(merged_cfo < 5);
  CHECK(merged_ramp < 5);
}

TEST_CASE("asynchronous correlated-noise pair") {
  const std::vector<AttackerNode> nodes = pair_nodes(20.0, -10.0, 10.0);
  const std::vector<TrackState> tracks{track_at(20.0), track_at(20.0)};
  StrategyConfig cfg;
  cfg.kind = StrategyKind::asynchronous_pair;
  cfg.target.d_spoof = 40.0;
  SUBCASE("equal powers resolve as one obstacle at boresight") {
    cfg.power_split = std::make_pair(1.0, 1.0);
    for (int seed = 0; seed < 10; ++seed) {
      cfg.noise_seed = 100 + seed;
      const FrameResult fr = run(cfg, nodes, tracks, PlanContext{}, seed);
      REQUIRE(fr.cloud.detections.size() == 1);
      CHECK(std::abs(fr.cloud.detections[0].range - 40.0) <= 0.25);
      CHECK(std::abs(fr.cloud.detections[0].angle) <= 1.0);
    }
  }
  SUBCASE("raising node 1 pulls the angle towards node 1") {
    double prev = 90.0;
    for (double p1 : {1.0, 2.0, 4.0, 8.0}) {
      cfg.power_split = std::make_pair(p1, 1.0);
      const FrameResult fr = run(cfg, nodes, tracks, PlanContext{}, 4);
      REQUIRE(fr.cloud.detections.size() == 1);
      CHECK(fr.cloud.detections[0].angle < prev);
      prev = fr.cloud.detections[0].angle;
    }
    CHECK(prev < -4.0);
  }
  SUBCASE("the planner steers to a requested bearing") {
    cfg.target.theta_spoof = 3.0;
    const FrameResult fr = run(cfg, nodes, tracks, PlanContext{}, 9);
    REQUIRE(fr.cloud.detections.size() == 1);
    CHECK(std::abs(fr.cloud.detections[0].angle - 3.0) <= 1.0);
  }
  SUBCASE("noise seeds decorrelate the pair") {
    cfg.power_split = std::make_pair(1.0, 1.0);
    auto cmds = plan_attack(cfg, nodes, tracks, 0, PlanContext{});
    cmds[1].emission.noise_seed += 1;
    RadarConfig rc;
    std::vector<ScheduledEmitter> em{{nodes[0], cmds[0].emission}, {nodes[1], cmds[1].emission}};
    int off_axis = 0;
    for (int seed = 0; seed < 5; ++seed) {
      FrameSpec fs;
      fs.frame_id = seed;
      for (const auto& d : process_frame(propagate_frame(rc.tx, {}, em, rc.geometry, LinkBudget::calibrated(), seed, fs), rc)
                               .cloud.detections)
        if (std::abs(d.angle) > 1.0) ++off_axis;
    }
    CHECK(off_axis > 0);
  }
}

TEST_CASE("merged-angle oracle") {
  const ArrayGeometry g;
  CHECK(std::abs(predict_merged_angle(-10.0, 10.0, 1.0, 1.0, 0.0, g)) <= 0.5);
  CHECK(predict_merged_angle(-10.0, 10.0, 4.0, 1.0, 0.0, g) < -2.0);
  for (double target : {-5.0, -2.0, 3.0, 7.0}) {
    const double r = solve_power_ratio(-10.0, 10.0, target, 0.003, g);
    CHECK(std::abs(predict_merged_angle(-10.0, 10.0, r, 1.0, 0.003, g) - target) <= 0.5);
  }
}

TEST_CASE("jamming condition") {
  const std::vector<AttackerNode> nodes = pair_nodes(20.0, -10.0, 10.0);
  const std::vector<TrackState> tracks{track_at(20.0), track_at(20.0)};
  const PlanContext ctx;
  const Reflector genuine = car(40.0, -3.0);
  const double pe = ctx.link.echo_power(genuine);
  const double p2_full = received_attacker_power(nodes[1], ctx.link);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::asynchronous_pair;
  cfg.target.d_spoof = 40.0;
  // Node 2 well past the margin hides the echo; the same margin below the echo leaves it intact.
  for (double rel_db : {cfg.jam_margin_db + 6.0, -cfg.jam_margin_db}) {
    const double scale = pe * db_to_linear(rel_db) / p2_full;
    cfg.power_split = std::make_pair(scale, scale);
    const bool suppress = jamming_suppresses(p2_full * scale, pe, cfg.jam_margin_db);
    CHECK(suppress == (rel_db > 0.0));
    int genuine_seen = 0;
    const int frames = 10;
    for (int seed = 0; seed < frames; ++seed) {
      cfg.noise_seed = 1 + seed;
      for (const auto& d : run(cfg, nodes, tracks, ctx, 60 + seed, {genuine}).cloud.detections)
        if (std::abs(d.range - 40.0) <= 1.0 && std::abs(d.angle - genuine.angle) <= 1.0) ++genuine_seen;
    }
    if (suppress) {
      CHECK(genuine_seen == 0);
    } else {
      CHECK(genuine_seen >= frames - 1);
    }
  }
}

TEST_CASE("random Gaussian attack spreads the angle around the genuine bearing") {
  const PlanContext base;
  const Reflector genuine = car(30.0);
  PlanContext ctx = base;
  ctx.echo_power_estimate = ctx.link.echo_power(genuine);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::random_gaussian;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.5, 5.5);
  double sum = 0.0, sq = 0.0, worst = 0.0;
  int n = 0;
  for (int t = 0; t < 160; ++t) {
    AttackerNode node;
    node.position = {15.0, u(rng)};
    for (const auto& d : run(cfg, {node}, {track_at(15.0)}, ctx, 100 + t, {genuine}).cloud.detections) {
      if (std::abs(d.range - 30.0) > 0.5) continue;
      sum += d.angle;
      sq += d.angle * d.angle;
      worst = std::max(worst, std::abs(d.angle));
      ++n;
      break;
    }
  }
  REQUIRE(n > 20);
  CHECK(worst <= 5.0);
  CHECK(std::abs(sum / n) <= 0.75);
  CHECK(std::sqrt(sq / n) > 1.0);

  // No echo estimate, no jamming.
  AttackerNode node;
  CHECK(plan_attack(cfg, std::vector<AttackerNode>{node}, std::vector<TrackState>{track_at(15.0)}, 0, base)[0]
            .emission.kind == EmissionKind::none);
}

TEST_CASE("tracking keeps a drive-by spoof continuous") {
  RadarConfig rc;
  const TrackNoise noise;
  const double tf = rc.tx.frame_period;
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 1.0);
  AttackerNode node;
  node.position = {28.0, 0.0};
  TrackState tr = init_track({node.position.range, -10.0, 0.0}, noise);
  StrategyConfig cfg;
  cfg.target.d_spoof = 22.0;
  double prev = -1.0;
  int gaps = 0;
  for (int f = 0; f < 100; ++f) {
    node.position.range -= 10.0 * tf;
    tr = track_victim(tr, TrackMeasurement{node.position.range + noise.sigma_range * g(rng), -10.0 + 0.5 * g(rng), 0.0},
                      tf, noise);
    const FrameResult fr = run(cfg, {node}, {tr}, PlanContext{}, 900 + f);
    if (fr.cloud.detections.empty()) {
      ++gaps;
      continue;
    }
    const double r = fr.cloud.detections[0].range;
    if (prev > 0.0) CHECK(std::abs(r - prev) <= range_bin_width(rc.tx));
    prev = r;
  }
  CHECK(gaps == 0);
}

TEST_CASE("in-range check includes the field of view") {
  const LinkBudget lb = LinkBudget::calibrated();
  AttackerNode n;
  n.position = {20.0, 0.0};
  CHECK(attacker_in_range(n, lb));
  n.position = {30.0, 0.0};
  CHECK_FALSE(attacker_in_range(n, lb));
  n.position = {20.0, 14.0};
  CHECK_FALSE(attacker_in_range(n, lb));
}
