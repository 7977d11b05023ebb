#include "mmspoof/scenario.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <thread>
#include <tuple>

namespace mmspoof {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kCollisionGap = 0.5;  // m
constexpr double kSpoofRangeMargin = 2.0;  // m kept inside the radar's IF cutoff
constexpr double kClusterRadius = 1.5;   // m

struct VehicleActor {
  VehicleSpec spec;
  double x = 0.0;
  double y = 0.0;
};

struct AttackState {
  std::vector<TrackState> node_tracks;
  bool tracking = false;
  bool activated = false;
  bool finished = false;  // a virtual obstacle that came closer than min_range
  double virtual_x = 0.0;
  int virtual_lane = 0;
};

bool in_lane(double y, int lane, const RoadGeometry& road) {
  return std::abs(y - road.lane_center(lane)) < road.lane_width / 2.0;
}

// Detections on the road surface ahead, one per cluster. The tracker needs
// neighbouring lanes to judge a lane change; the planner applies the corridor itself.
PointCloud road_filter(const PointCloud& cloud, const RoadGeometry& road, const VehicleState& v,
                       const PlannerParams& p) {
  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.timestamp = cloud.timestamp;
  std::vector<Eigen::Vector2d> kept;
  // The cloud is sorted strongest first, so each cluster keeps its peak.
  for (const Detection& d : cloud.detections) {
    const Eigen::Vector2d w = detection_world(d, v);
    const double dx = w.x() - v.x;
    if (dx <= 0.0 || dx > p.roi_horizon) continue;
    if (w.y() < -p.max_nudge_distance || w.y() > road.lanes * road.lane_width + p.max_nudge_distance) continue;
    bool near = false;
    for (const auto& k : kept) near = near || (k - w).norm() < kClusterRadius;
    if (near) continue;
    kept.push_back(w);
    out.detections.push_back(d);
  }
  return out;
}

// Per-sample SNR from the antenna-averaged cell power, undoing the coherent
// gain of the Hann-windowed range and Doppler transforms.
double detection_snr_db(const Detection& d, double noise_floor, int n_samples, int n_chirps) {
  const double gain = (2.0 * n_samples / 3.0) * (2.0 * n_chirps / 3.0);
  return d.power - linear_to_db(noise_floor * gain);
}

std::string defense_name(const DefenseConfig& d) {
  if (d.challenge_response && d.fingerprint) return "both";
  if (d.challenge_response) return "cr";
  if (d.fingerprint) return "fp";
  return "none";
}

std::string fmt(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

std::mutex g_model_mutex;
std::map<std::tuple<int, std::uint64_t, double, double, double>, AnomalyModel> g_model_cache;

// Bearing the attack wants the vehicle target to appear at.
double target_bearing(const TargetSpec& t, double range) {
  if (t.theta) return *t.theta;
  const double s = std::min(1.0, t.lateral_offset / std::max(range, 1e-6));
  return std::min(rad_to_deg(std::asin(s)), t.max_angle);
}

}  // namespace

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::no_effect: return "no_effect";
    case Outcome::stalled: return "stalled";
    case Outcome::hard_braked: return "hard_braked";
    case Outcome::lane_changed: return "lane_changed";
    case Outcome::collision: return "collision";
    case Outcome::attack_detected: return "attack_detected";
  }
  return "unknown";
}

int severity(Outcome o) {
  switch (o) {
    case Outcome::no_effect:
    case Outcome::attack_detected: return 0;
    case Outcome::stalled: return 1;
    case Outcome::lane_changed: return 2;
    case Outcome::hard_braked: return 3;
    case Outcome::collision: return 4;
  }
  return 0;
}

std::string to_string(DefenseKind k) { return k == DefenseKind::challenge_response ? "cr" : "fp"; }

std::optional<double> RunSummary::detection_latency() const {
  if (!first_attack_time || !first_flag_time) return std::nullopt;
  return *first_flag_time - *first_attack_time;
}

AnomalyModel default_fp_model(const ScenarioConfig& cfg) {
  const DefenseConfig& d = cfg.defense;
  const auto key = std::make_tuple(d.fp_training_vectors, d.fp_seed, d.fp_nu, cfg.radar.tx.f_start,
                                   cfg.radar.tx.bandwidth);
  {
    std::lock_guard<std::mutex> lock(g_model_mutex);
    auto it = g_model_cache.find(key);
    if (it != g_model_cache.end()) return it->second;
  }
  FingerprintSetup setup;
  setup.tx = cfg.radar.tx;
  setup.geometry = cfg.radar.geometry;
  const std::vector<FeatureVector> train = fingerprint_vectors(setup, std::nullopt, d.fp_training_vectors, d.fp_seed);
  AnomalyModel m = fit_anomaly_model(train, d.fp_nu, d.fp_seed);
  std::lock_guard<std::mutex> lock(g_model_mutex);
  g_model_cache.emplace(key, m);
  return m;
}

RunResult run_scenario(const ScenarioConfig& base, const RunOptions& opt) {
  ScenarioConfig cfg = base;
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.defense) {
    const std::string& d = *opt.defense;
    if (d != "none" && d != "cr" && d != "fp" && d != "both")
      throw ConfigError("defense: expected cr, fp, both or none, got '" + d + "'");
    cfg.defense.challenge_response = d == "cr" || d == "both";
    cfg.defense.fingerprint = d == "fp" || d == "both";
  }
  if (opt.baseline) cfg.attacks.clear();
  cfg.validate();

  const RoadGeometry& road = cfg.road;
  const double dt = cfg.tick();
  const long n_ticks = static_cast<long>(std::floor(cfg.duration / dt + 1e-9));
  const DefenseConfig& def = cfg.defense;

  RunResult result;
  RunLog& log = result.log;
  log.scenario = cfg.name;
  log.seed = cfg.seed;
  log.baseline = opt.baseline;
  log.defense = defense_name(def);
  if (cfg.traffic_light) log.green_at = cfg.traffic_light->green_at;

  VehicleState victim;
  victim.x = cfg.victim.x;
  victim.lane_id = cfg.victim.lane;
  victim.y = road.lane_center(cfg.victim.lane);
  victim.speed = cfg.victim.speed;
  victim.set_speed = cfg.victim.set_speed;
  victim.mode = victim.speed == 0.0 ? DriveMode::stopped : DriveMode::cruising;

  std::vector<VehicleActor> actors;
  for (const VehicleSpec& v : cfg.vehicles) actors.push_back({v, v.x, road.lane_center(v.lane)});
  auto actor_by_id = [&](const std::string& id) -> VehicleActor& {
    for (auto& a : actors)
      if (a.spec.id == id) return a;
    throw ConfigError("unknown vehicle " + id);
  };

  std::vector<AttackState> attacks(cfg.attacks.size());
  std::mt19937_64 sense_rng(mix_seed(cfg.seed, 0x5e115e));
  std::normal_distribution<double> unit(0.0, 1.0);

  ConcentrationCalibration cr_cal;
  if (def.challenge_response)
    cr_cal = calibrate_concentration(cfg.radar.tx, cfg.radar.geometry, def.cr_calibration_snr_db, 16, cfg.seed,
                                     def.cr_margin_db);
  std::optional<AnomalyModel> fp_model;
  if (def.fingerprint) {
    if (opt.fp_model) {
      fp_model = *opt.fp_model;
    } else if (!def.fp_model_path.empty()) {
      std::ifstream in(def.fp_model_path);
      if (!in) throw ConfigError("defense.fp_model_path: cannot open " + def.fp_model_path);
      fp_model = AnomalyModel::load(in);
    } else {
      fp_model = default_fp_model(cfg);
    }
  }

  PlanContext pctx;
  pctx.tx = cfg.radar.tx;
  pctx.geometry = cfg.radar.geometry;
  pctx.link = cfg.link;

  ObstacleTracker tracker(cfg.tracker);
  std::deque<int> flag_history;
  double alert_until = -kInf;
  RunSummary& sum = log.summary;
  sum.min_ttc = kInf;
  const double frame_dt = dt * cfg.radar_frame_stride;
  const double max_spoof_range = pctx.n_samples / 2 * range_bin_width(cfg.radar.tx) - kSpoofRangeMargin;

  for (long tick = 0; tick <= n_ticks; ++tick) {
    const double t = tick * dt;

    if (tick % cfg.radar_frame_stride == 0) {
      const long frame_id = tick;
      FrameRecord rec;
      rec.frame_id = frame_id;
      rec.timestamp = t;

      // Genuine echoes from vehicles ahead.
      std::vector<Reflector> reflectors;
      for (const VehicleActor& a : actors) {
        const double dx = a.x - victim.x, dy = a.y - victim.y;
        if (dx <= 0.0) continue;
        Reflector r;
        r.range = std::hypot(dx, dy);
        r.angle = rad_to_deg(std::atan2(dy, dx));
        if (std::abs(r.angle) > 60.0) continue;
        r.radial_velocity = (a.spec.speed - victim.speed) * dx / r.range;
        r.reflectivity = reflectivity_from_rcs(a.spec.rcs, cfg.radar.tx.wavelength());
        reflectors.push_back(r);
      }

      // Attackers: sense, track, plan.
      std::vector<ScheduledEmitter> emitters;
      for (std::size_t ai = 0; ai < cfg.attacks.size(); ++ai) {
        const AttackSpec& spec = cfg.attacks[ai];
        AttackState& st = attacks[ai];
        if (t < spec.start || t > spec.end || st.finished) continue;
        bool sensed = true;
        for (const AttackerNode& n : spec.nodes) sensed = sensed && attacker_in_range(n, cfg.link);
        if (!sensed) continue;
        if (!st.tracking) st.node_tracks.resize(spec.nodes.size());
        // The nodes of one attack share a victim track and know their own
        // offsets, so the sensing error is common to all of them.
        const double e_range = 0.1 * unit(sense_rng), e_vel = 0.1 * unit(sense_rng), e_ang = 0.2 * unit(sense_rng);
        for (std::size_t k = 0; k < spec.nodes.size(); ++k) {
          TrackMeasurement m;
          m.range = spec.nodes[k].position.range + e_range;
          m.velocity = e_vel;
          m.angle = spec.nodes[k].position.angle + e_ang;
          st.node_tracks[k] = st.tracking ? track_victim(st.node_tracks[k], m, frame_dt, TrackNoise{})
                                          : init_track(m, TrackNoise{}, t);
        }
        st.tracking = true;

        StrategyConfig sc = spec.strategy;
        sc.noise_seed = mix_seed(spec.strategy.noise_seed, mix_seed(cfg.seed, ai));
        bool emit = false;
        if (spec.target.kind == TargetKind::virtual_obstacle) {
          if (!st.activated) {
            st.activated = true;
            st.virtual_x = victim.x + spec.target.initial_gap;
            st.virtual_lane = road.lane_at(victim.y);
          }
          const double d = st.virtual_x - victim.x;
          if (d < spec.target.min_range) {
            st.finished = true;
            continue;
          }
          emit = in_lane(victim.y, st.virtual_lane, road) && d > 0.0 && d <= max_spoof_range;
          sc.target.d_spoof = d;
          sc.target.v_spoof = spec.target.speed - victim.speed;
          sc.extra_ranges.clear();
          for (double g : spec.target.extra_gaps) sc.extra_ranges.push_back(d + g);
        } else {
          const VehicleActor& a = actor_by_id(spec.target.vehicle);
          st.activated = true;
          const double d = a.x - victim.x;
          emit = in_lane(victim.y, a.spec.lane, road) && d > 0.0 && d <= max_spoof_range;
          sc.target.d_spoof = d;
          sc.target.v_spoof = a.spec.speed - victim.speed;
          sc.target.theta_spoof = target_bearing(spec.target, d);
          Reflector r;
          r.range = std::max(d, 1.0);
          r.reflectivity = reflectivity_from_rcs(a.spec.rcs, cfg.radar.tx.wavelength());
          pctx.echo_power_estimate = cfg.link.echo_power(r);
        }
        if (!emit) continue;
        const std::vector<SpoofCommand> cmds = plan_attack(sc, spec.nodes, st.node_tracks, frame_id, pctx);
        for (const SpoofCommand& c : cmds) {
          if (c.emission.kind == EmissionKind::none) continue;
          emitters.push_back({spec.nodes[static_cast<std::size_t>(c.node_index)], c.emission});
          rec.commands.push_back(c);
        }
      }
      if (!rec.commands.empty() && !sum.first_attack_time) sum.first_attack_time = t;

      // Victim radar.
      RadarConfig rc = cfg.radar;
      if (def.challenge_response) rc.tx = issue_challenge(cfg.radar.tx, def.policy, frame_id);
      FrameSpec fs;
      fs.frame_id = frame_id;
      fs.timestamp = t;
      const IQCube cube = propagate_frame(rc.tx, reflectors, emitters, rc.geometry, cfg.link,
                                          mix_seed(cfg.seed, static_cast<std::uint64_t>(frame_id)), fs);
      const FrameResult fr = process_frame(cube, rc);
      rec.cloud = fr.cloud;
      rec.cloud.frame_id = frame_id;
      rec.cloud.timestamp = t;
      if (opt.capture_at && !result.capture && t >= *opt.capture_at) {
        result.capture = cube;
        result.capture_tx = rc.tx;
      }

      // Defenses drop flagged detections; persistent flags raise the alert.
      std::vector<bool> flagged(rec.cloud.detections.size(), false);
      if (def.challenge_response) {
        const auto v = verify_response(fr.rd, rec.cloud.detections, cr_cal.threshold);
        for (std::size_t i = 0; i < v.size(); ++i) {
          rec.verdicts.push_back({static_cast<int>(i), DefenseKind::challenge_response, v[i].verdict,
                                  linear_to_db(std::max(v[i].concentration, 1e-300))});
          if (v[i].verdict == Verdict::spoofed) flagged[i] = true;
        }
      }
      if (fp_model) {
        for (std::size_t i = 0; i < rec.cloud.detections.size(); ++i) {
          const Detection& d = rec.cloud.detections[i];
          if (detection_snr_db(d, cfg.link.noise_floor, cube.n_samples(), cube.n_chirps()) < def.fp_min_snr_db)
            continue;
          const FingerprintVerdict v = fingerprint_detection(*fp_model, cube, d.range_bin);
          rec.verdicts.push_back({static_cast<int>(i), DefenseKind::fingerprint, v.verdict, v.spoofed_fraction});
          if (v.verdict == Verdict::spoofed) flagged[i] = true;
        }
      }
      PointCloud accepted = rec.cloud;
      accepted.detections.clear();
      int n_flagged = 0;
      for (std::size_t i = 0; i < rec.cloud.detections.size(); ++i) {
        if (flagged[i]) {
          ++n_flagged;
        } else {
          accepted.detections.push_back(rec.cloud.detections[i]);
        }
      }
      sum.flagged_detections += n_flagged;
      if (n_flagged > 0 && !sum.first_flag_time) sum.first_flag_time = t;
      flag_history.push_back(n_flagged > 0 ? 1 : 0);
      if (static_cast<int>(flag_history.size()) > def.alert_window_frames) flag_history.pop_front();
      int recent = 0;
      for (int f : flag_history) recent += f;
      if (recent >= def.alert_min_flags) alert_until = t + def.alert_hold;
      rec.alert = t <= alert_until;
      if (rec.alert && !sum.first_alert_time) sum.first_alert_time = t;

      // Perception and planning.
      const PointCloud on_road = road_filter(accepted, road, victim, cfg.planner);
      tracker.step(to_measurements(on_road, victim), t, frame_id);
      rec.tracks = tracker.confirmed();
      DecisionContext dctx;
      dctx.time = t;
      dctx.must_stop = cfg.traffic_light && t < cfg.traffic_light->green_at;
      dctx.alert = rec.alert;
      const Decision dec = decide(victim, rec.tracks, cfg.planner, road, dctx);
      rec.decision = dec.event;
      rec.decision.timestamp = t;
      victim = dec.next;
      rec.victim = victim;
      if (dec.event.kind == DecisionKind::hard_brake && !sum.hard_brake_time) {
        sum.hard_brake_time = t;
        sum.hard_brake_ttc = dec.event.ttc;
      }
      if ((dec.event.kind == DecisionKind::lane_change || dec.event.kind == DecisionKind::side_pass) &&
          !sum.lane_change_time)
        sum.lane_change_time = t;
      log.frames.push_back(std::move(rec));
    }

    if (tick == n_ticks) break;

    // Kinematics.
    victim = integrate(victim, dt, cfg.planner, road);
    for (VehicleActor& a : actors) a.x += a.spec.speed * dt;
    for (std::size_t ai = 0; ai < cfg.attacks.size(); ++ai)
      if (attacks[ai].activated) attacks[ai].virtual_x += cfg.attacks[ai].target.speed * dt;

    // Collision and time to collision against genuine vehicles.
    bool collided = false;
    for (const VehicleActor& a : actors) {
      if (std::abs(a.y - victim.y) >= cfg.vehicle_width) continue;
      const double gap = a.x - victim.x;
      if (gap < -a.spec.length - 4.5) continue;
      const double closing = victim.speed - a.spec.speed;
      if (gap > 0.0 && closing > 0.0) sum.min_ttc = std::min(sum.min_ttc, (gap - kCollisionGap) / closing);
      if (gap <= kCollisionGap && gap > -a.spec.length) {
        collided = true;
        sum.collision_time = t + dt;
        sum.collision_with = a.spec.id;
        sum.min_ttc = std::min(sum.min_ttc, closing > 0.0 ? (gap - kCollisionGap) / closing : 0.0);
      }
    }
    if (collided) {
      FrameRecord rec;
      rec.frame_id = tick + 1;
      rec.timestamp = t + dt;
      rec.victim = victim;
      rec.decision.timestamp = t + dt;
      rec.decision.kind = log.frames.empty() ? DecisionKind::maintain : log.frames.back().decision.kind;
      rec.decision.ttc = 0.0;
      log.frames.push_back(std::move(rec));
      break;
    }
  }

  sum.final_speed = victim.speed;
  sum.outcome = classify_outcome(log);
  return result;
}

RunLog run(const ScenarioConfig& cfg, const RunOptions& opt) { return run_scenario(cfg, opt).log; }

Outcome classify_outcome(const RunLog& log) {
  if (log.summary.collision_time) return Outcome::collision;
  bool hard = false, lane = false, flagged = false;
  for (const FrameRecord& f : log.frames) {
    hard = hard || f.decision.kind == DecisionKind::hard_brake;
    lane = lane || f.decision.kind == DecisionKind::lane_change || f.decision.kind == DecisionKind::side_pass;
    flagged = flagged || f.alert;
    for (const DefenseRecord& v : f.verdicts) flagged = flagged || v.verdict == Verdict::spoofed;
  }
  if (hard) return Outcome::hard_braked;
  if (lane) return Outcome::lane_changed;
  if (flagged) return Outcome::attack_detected;
  if (log.green_at) {
    bool any = false, moved = false;
    for (const FrameRecord& f : log.frames) {
      if (f.timestamp < *log.green_at) continue;
      any = true;
      moved = moved || f.victim.speed > 0.0;
    }
    if (any && !moved) return Outcome::stalled;
  }
  return Outcome::no_effect;
}

// ---------------------------------------------------------------- export

namespace {

void write_file(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error(p.string() + ": cannot open for writing");
  out << s;
  if (!out) throw std::runtime_error(p.string() + ": write failed");
}

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return "inf";
  return std::stod(fmt(*v));
}

}  // namespace

void export_log(const RunLog& log, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error(dir.string() + ": " + ec.message());

  std::string pc = "frame_id,timestamp,range,velocity,angle,power,flagged\n";
  std::string dec = "timestamp,kind,cause,target_lane,ttc\n";
  std::string sp = "timestamp,x,y,speed,accel,lane,mode\n";
  for (const FrameRecord& f : log.frames) {
    for (std::size_t i = 0; i < f.cloud.detections.size(); ++i) {
      const Detection& d = f.cloud.detections[i];
      bool flagged = false;
      for (const DefenseRecord& v : f.verdicts)
        flagged = flagged || (v.detection == static_cast<int>(i) && v.verdict == Verdict::spoofed);
      pc += std::to_string(f.frame_id) + "," + fmt(f.timestamp) + "," + fmt(d.range) + "," + fmt(d.velocity) + "," +
            fmt(d.angle) + "," + fmt(d.power) + "," + (flagged ? "1" : "0") + "\n";
    }
    const DecisionEvent& e = f.decision;
    dec += fmt(f.timestamp) + "," + to_string(e.kind) + "," + (e.cause ? std::to_string(*e.cause) : "") + "," +
           std::to_string(e.target_lane) + "," + fmt(e.ttc) + "\n";
    const VehicleState& v = f.victim;
    sp += fmt(f.timestamp) + "," + fmt(v.x) + "," + fmt(v.y) + "," + fmt(v.speed) + "," + fmt(v.accel) + "," +
          std::to_string(v.lane_id) + "," + to_string(v.mode) + "\n";
  }
  write_file(dir / "pointclouds.csv", pc);
  write_file(dir / "decisions.csv", dec);
  write_file(dir / "speed_timeline.csv", sp);

  const RunSummary& s = log.summary;
  nlohmann::ordered_json j;
  j["scenario"] = log.scenario;
  j["seed"] = log.seed;
  j["baseline"] = log.baseline;
  j["defense"] = log.defense;
  j["outcome"] = to_string(classify_outcome(log));
  j["frames"] = log.frames.size();
  j["min_ttc_s"] = opt_json(s.min_ttc);
  j["hard_brake_time_s"] = opt_json(s.hard_brake_time);
  j["hard_brake_ttc_s"] = opt_json(s.hard_brake_ttc);
  j["lane_change_time_s"] = opt_json(s.lane_change_time);
  j["collision_time_s"] = opt_json(s.collision_time);
  j["collision_with"] = s.collision_with;
  j["first_attack_time_s"] = opt_json(s.first_attack_time);
  j["first_flag_time_s"] = opt_json(s.first_flag_time);
  j["first_alert_time_s"] = opt_json(s.first_alert_time);
  j["detection_latency_s"] = opt_json(s.detection_latency());
  j["flagged_detections"] = s.flagged_detections;
  j["final_speed_mps"] = opt_json(s.final_speed);
  write_file(dir / "summary.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------- sweep

std::vector<SweepPoint> sweep(const std::filesystem::path& config,
                              const std::vector<std::pair<std::string, std::vector<std::string>>>& grid,
                              const RunOptions& opt, int threads) {
  std::vector<std::vector<ConfigOverride>> points{{}};
  for (const auto& [path, values] : grid) {
    if (values.empty()) throw ConfigError(path + ": sweep needs at least one value");
    std::vector<std::vector<ConfigOverride>> next;
    for (const auto& p : points)
      for (const std::string& v : values) {
        auto q = p;
        q.emplace_back(path, v);
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }
  // Parse everything up front so config errors surface before any run starts.
  std::vector<ScenarioConfig> cfgs;
  for (const auto& p : points) cfgs.push_back(load_config(config, p));
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  std::vector<SweepPoint> out(points.size());
  std::size_t next = 0;
  std::mutex m;
  auto worker = [&]() {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(m);
        if (next >= points.size()) return;
        i = next++;
      }
      out[i].overrides = points[i];
      out[i].summary = run(cfgs[i], opt).summary;
    }
  };
  std::vector<std::future<void>> pool;
  for (int k = 0; k < threads; ++k) pool.push_back(std::async(std::launch::async, worker));
  for (auto& f : pool) f.get();
  return out;
}

}  // namespace mmspoof
