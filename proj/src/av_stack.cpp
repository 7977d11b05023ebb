#include "mmspoof/av_stack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mmspoof {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kComfortDecelShare = 0.5;   // of soft_decel, left as margin for tracking noise

double corridor_half_width(const RoadGeometry& road, const PlannerParams& p) {
  return road.lane_width / 2.0 + p.max_nudge_distance;
}

struct Lead {
  const ObstacleTrack* track = nullptr;
  double gap = kInf;
  double closing = 0.0;
};

Lead nearest_in_lane(const VehicleState& v, const std::vector<ObstacleTrack>& tracks, const PlannerParams& p,
                     const RoadGeometry& road) {
  Lead lead;
  const double center = road.lane_center(v.lane_id);
  for (const auto& t : tracks) {
    const double gap = t.x[0] - v.x;
    if (gap <= 0.0 || gap > p.roi_horizon) continue;
    if (std::abs(t.x[1] - center) > corridor_half_width(road, p)) continue;
    if (gap < lead.gap) {
      lead.track = &t;
      lead.gap = gap;
      lead.closing = v.speed - t.x[2];
    }
  }
  return lead;
}

DecisionKind speed_kind(double a) {
  if (a < -0.05) return DecisionKind::decelerate;
  if (a > 0.05) return DecisionKind::accelerate;
  return DecisionKind::maintain;
}

}  // namespace

int RoadGeometry::lane_at(double y) const {
  return std::clamp(static_cast<int>(std::floor(y / lane_width)), 0, lanes - 1);
}

void RoadGeometry::validate() const {
  require(lanes >= 1, "road.lanes must be >= 1");
  require(lane_width > 0.0, "road.lane_width_m must be > 0");
  require(length > 0.0, "road.length_m must be > 0");
}

void PlannerParams::validate() const {
  for (double d : {min_lane_change_length, min_lane_change_prepare_length, follow_min_distance,
                   min_stop_distance_obstacle, max_stop_distance_obstacle, lane_change_prepare_length,
                   min_nudge_distance, max_nudge_distance, min_yield_distance, d_n, d_c, roi_horizon,
                   stop_hold_range})
    require(d > 0.0, "planner distances must be > 0");
  require(d_c < d_n, "planner.d_c must be < planner.d_n");
  require(c_nudge >= 0.0 && c_collision >= 0.0 && speed_loss_cost >= 0.0, "planner cost constants must be >= 0");
  require(lane_change_scale > 0.0 && lane_change_duration > 0.0, "planner lane-change settings must be > 0");
  require(max_accel > 0.0 && soft_decel > 0.0 && hard_decel >= soft_decel, "planner accelerations invalid");
  require(hard_brake_ttc > 0.0 && closing_time > 0.0 && speed_time_constant > 0.0 && follow_headway >= 0.0,
          "planner time constants must be > 0");
}

void VehicleState::validate(const RoadGeometry& road) const {
  require(speed >= 0.0, "vehicle.speed must be >= 0");
  require(set_speed >= 0.0, "vehicle.set_speed must be >= 0");
  require(road.has_lane(lane_id), "vehicle.lane_id must name a lane of the road");
}

std::string to_string(DecisionKind k) {
  switch (k) {
    case DecisionKind::hold_stop: return "hold_stop";
    case DecisionKind::proceed: return "proceed";
    case DecisionKind::soft_brake: return "soft_brake";
    case DecisionKind::hard_brake: return "hard_brake";
    case DecisionKind::lane_change: return "lane_change";
    case DecisionKind::side_pass: return "side_pass";
    case DecisionKind::accelerate: return "accelerate";
    case DecisionKind::decelerate: return "decelerate";
    case DecisionKind::maintain: return "maintain";
  }
  return "unknown";
}

std::string to_string(DriveMode m) {
  switch (m) {
    case DriveMode::stopped: return "stopped";
    case DriveMode::cruising: return "cruising";
    case DriveMode::following: return "following";
    case DriveMode::braking: return "braking";
    case DriveMode::lane_changing: return "lane_changing";
  }
  return "unknown";
}

// ---------------------------------------------------------------- perception

Eigen::Vector2d detection_world(const Detection& d, const VehicleState& v) {
  const double th = deg_to_rad(d.angle);
  return {v.x + d.range * std::cos(th), v.y + d.range * std::sin(th)};
}

PointCloud roi_filter(const PointCloud& cloud, const RoadGeometry& road, const VehicleState& vehicle,
                      const PlannerParams& params) {
  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.timestamp = cloud.timestamp;
  const double center = road.lane_center(vehicle.lane_id);
  const double half = corridor_half_width(road, params);
  for (const auto& d : cloud.detections) {
    const Eigen::Vector2d w = detection_world(d, vehicle);
    const double ahead = w.x() - vehicle.x;
    if (ahead <= 0.0 || ahead > params.roi_horizon) continue;
    if (std::abs(w.y() - center) > half) continue;
    out.detections.push_back(d);
  }
  return out;
}

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  require(cost.rows() == cost.cols(), "hungarian: cost matrix must be square");
  const int n = static_cast<int>(cost.rows());
  if (n == 0) return {};
  // Row/column potentials with 1-based augmenting paths.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) col[p[j] - 1] = j - 1;
  return col;
}

MatchResult match_tracks(const std::vector<Eigen::Vector2d>& track_positions,
                         const std::vector<Eigen::Vector2d>& detections, double gate) {
  require(gate > 0.0, "match_tracks: gate must be > 0");
  const int nt = static_cast<int>(track_positions.size());
  const int nd = static_cast<int>(detections.size());
  const int n = std::max(nt, nd);
  MatchResult res;
  // Forbidden and dummy pairs share one cost larger than any full set of
  // gated pairs, so the solver first maximizes the gated pair count.
  const double big = gate * (n + 1) + 1.0;
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(n, n, big);
  for (int i = 0; i < nt; ++i)
    for (int j = 0; j < nd; ++j) {
      const double d = (track_positions[i] - detections[j]).norm();
      if (d <= gate) cost(i, j) = d;
    }
  const std::vector<int> col = hungarian(cost);
  std::vector<char> det_used(nd, 0);
  for (int i = 0; i < nt; ++i) {
    const int j = col[i];
    if (j >= 0 && j < nd && cost(i, j) < big) {
      res.pairs.emplace_back(i, j);
      res.total_cost += cost(i, j);
      det_used[j] = 1;
    } else {
      res.unmatched_tracks.push_back(i);
    }
  }
  for (int j = 0; j < nd; ++j)
    if (!det_used[j]) res.unmatched_detections.push_back(j);
  return res;
}

std::vector<ObstacleMeasurement> to_measurements(const PointCloud& roi_cloud, const VehicleState& v) {
  std::vector<ObstacleMeasurement> out;
  for (const auto& d : roi_cloud.detections) {
    ObstacleMeasurement m;
    m.position = detection_world(d, v);
    m.vx = v.speed + d.velocity * std::cos(deg_to_rad(d.angle));
    out.push_back(m);
  }
  return out;
}

MatchResult ObstacleTracker::step(const std::vector<ObstacleMeasurement>& meas, double t, long frame_id) {
  const double dt = started_ ? t - t_ : 0.0;
  require(dt >= 0.0, "ObstacleTracker: time must not run backwards");
  started_ = true;
  t_ = t;

  Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
  f(0, 2) = f(1, 3) = dt;
  Eigen::Matrix4d q = Eigen::Matrix4d::Zero();
  const double a = p_.accel_psd;
  for (int k = 0; k < 2; ++k) {
    q(k, k) = a * dt * dt * dt / 3.0;
    q(k, k + 2) = q(k + 2, k) = a * dt * dt / 2.0;
    q(k + 2, k + 2) = a * dt;
  }
  for (auto& tr : tracks_) {
    tr.x = f * tr.x;
    tr.P = f * tr.P * f.transpose() + q;
    ++tr.age;
  }

  std::vector<Eigen::Vector2d> pred, pos;
  for (const auto& tr : tracks_) pred.emplace_back(tr.x[0], tr.x[1]);
  for (const auto& m : meas) pos.push_back(m.position);
  MatchResult res = match_tracks(pred, pos, p_.gate);

  Eigen::Matrix<double, 3, 4> h = Eigen::Matrix<double, 3, 4>::Zero();
  h(0, 0) = h(1, 1) = h(2, 2) = 1.0;
  Eigen::Matrix3d r = Eigen::Matrix3d::Zero();
  r(0, 0) = r(1, 1) = p_.sigma_position * p_.sigma_position;
  r(2, 2) = p_.sigma_velocity * p_.sigma_velocity;
  for (const auto& [ti, di] : res.pairs) {
    ObstacleTrack& tr = tracks_[static_cast<std::size_t>(ti)];
    const ObstacleMeasurement& m = meas[static_cast<std::size_t>(di)];
    const Eigen::Vector3d z(m.position.x(), m.position.y(), m.vx);
    const Eigen::Matrix3d s = h * tr.P * h.transpose() + r;
    const Eigen::Matrix<double, 4, 3> k = tr.P * h.transpose() * s.inverse();
    tr.x += k * (z - h * tr.x);
    const Eigen::Matrix4d ikh = Eigen::Matrix4d::Identity() - k * h;
    tr.P = ikh * tr.P * ikh.transpose() + k * r * k.transpose();
    ++tr.hits;
    tr.last_seen = frame_id;
  }
  for (int di : res.unmatched_detections) {
    const ObstacleMeasurement& m = meas[static_cast<std::size_t>(di)];
    ObstacleTrack tr;
    tr.id = next_id_++;
    tr.x << m.position.x(), m.position.y(), m.vx, 0.0;
    tr.P = Eigen::Vector4d(r(0, 0), r(1, 1), r(2, 2), 1.0).asDiagonal();
    tr.last_seen = frame_id;
    tracks_.push_back(tr);
  }
  std::erase_if(tracks_, [&](const ObstacleTrack& tr) { return frame_id - tr.last_seen > p_.prune_frames; });
  return res;
}

std::vector<ObstacleTrack> ObstacleTracker::confirmed() const {
  std::vector<ObstacleTrack> out;
  for (const auto& tr : tracks_)
    if (tr.confirmed(p_.confirm_hits)) out.push_back(tr);
  return out;
}

// ---------------------------------------------------------------- planning

double obstacle_cost(double d, const PlannerParams& p) {
  require(d >= 0.0, "obstacle_cost: d must be >= 0");
  if (d > p.d_n) return 0.0;
  if (d >= p.d_c) return p.c_nudge * (d - p.d_c);
  return p.c_collision;
}

double time_to_collision(double gap, double closing_speed) {
  if (closing_speed <= 0.0) return kInf;
  return gap / closing_speed;
}

Decision decide(const VehicleState& vehicle, const std::vector<ObstacleTrack>& tracks, const PlannerParams& p,
                const RoadGeometry& road, const DecisionContext& ctx) {
  Decision out;
  out.next = vehicle;
  DecisionEvent& ev = out.event;
  ev.timestamp = ctx.time;
  VehicleState& nv = out.next;

  const Lead lead = nearest_in_lane(vehicle, tracks, p, road);
  if (lead.track) ev.cause = lead.track->id;
  ev.ttc = lead.track ? time_to_collision(lead.gap, lead.closing) : kInf;
  const bool stopped = vehicle.mode == DriveMode::stopped || vehicle.speed == 0.0;
  // Adjacent lane with no confirmed obstacle from just behind the bumper to the
  // lane-change threshold ahead; -1 when none.
  auto free_adjacent_lane = [&]() {
    for (int cand : {vehicle.lane_id + 1, vehicle.lane_id - 1}) {
      if (!road.has_lane(cand)) continue;
      const double center = road.lane_center(cand);
      bool blocked = false;
      for (const auto& t : tracks) {
        const double gap = t.x[0] - vehicle.x;
        if (gap > -p.min_lane_change_length && gap <= p.lane_change_threshold() &&
            std::abs(t.x[1] - center) <= corridor_half_width(road, p))
          blocked = true;
      }
      if (!blocked) return cand;
    }
    return -1;
  };
  auto start_lane_change = [&](int target) {
    nv.mode = DriveMode::lane_changing;
    nv.lane_id = target;
    const double dy = road.lane_center(target) - vehicle.y;
    nv.lateral_speed = dy / p.lane_change_duration;
    ev.target_lane = target;
  };

  // Minimum-risk maneuver once a defense raises an alert.
  if (ctx.alert) {
    if (stopped) {
      ev.kind = DecisionKind::hold_stop;
      nv.mode = DriveMode::stopped;
      nv.accel = 0.0;
    } else {
      ev.kind = DecisionKind::soft_brake;
      nv.mode = DriveMode::braking;
      nv.accel = -p.soft_decel;
    }
    return out;
  }

  if (stopped && vehicle.mode != DriveMode::lane_changing) {
    const int adj = free_adjacent_lane();
    if (ctx.must_stop || (lead.track && lead.gap < p.stop_hold_range) || (lead.track && adj < 0)) {
      ev.kind = DecisionKind::hold_stop;
      nv.mode = DriveMode::stopped;
      nv.accel = 0.0;
      return out;
    }
    if (lead.track) {
      ev.kind = DecisionKind::side_pass;
      start_lane_change(adj);
      nv.accel = p.max_accel / 2.0;
      return out;
    }
    ev.kind = DecisionKind::proceed;
    nv.mode = DriveMode::cruising;
    nv.accel = std::min(p.max_accel, vehicle.set_speed / p.speed_time_constant);
    return out;
  }

  if (ctx.must_stop) {
    ev.kind = DecisionKind::soft_brake;
    nv.mode = DriveMode::braking;
    nv.accel = -p.soft_decel;
    return out;
  }

  if (ev.ttc < p.hard_brake_ttc) {
    ev.kind = DecisionKind::hard_brake;
    nv.mode = vehicle.mode == DriveMode::lane_changing ? DriveMode::lane_changing : DriveMode::braking;
    nv.accel = -p.hard_decel;
    return out;
  }

  // Lane change when the current lane, costed by the obstacle over the
  // maneuver plus the speed lost behind it, is dearer than the free adjacent lane.
  if (lead.track && vehicle.mode != DriveMode::lane_changing && lead.gap < p.lane_change_threshold()) {
    const double projected = std::max(0.0, lead.gap - std::max(0.0, lead.closing) * p.lane_change_duration);
    const double lead_speed = std::max(0.0, lead.track->x[2]);
    const double loss =
        vehicle.set_speed > 0.0 ? std::max(0.0, vehicle.set_speed - lead_speed) / vehicle.set_speed : 0.0;
    const double cost = obstacle_cost(projected, p) + p.speed_loss_cost * loss;
    const int adj = cost > p.lane_change_penalty ? free_adjacent_lane() : -1;
    if (adj >= 0) {
      ev.kind = DecisionKind::lane_change;
      start_lane_change(adj);
      nv.accel = 0.0;
      return out;
    }
  }

  const double to_set = (vehicle.set_speed - vehicle.speed) / p.speed_time_constant;
  if (!lead.track) {
    nv.accel = std::clamp(to_set, -p.soft_decel, p.max_accel);
    ev.kind = speed_kind(nv.accel);
    if (vehicle.mode != DriveMode::lane_changing) nv.mode = DriveMode::cruising;
    return out;
  }

  // Follow: absorb the gap in excess of the desired one over closing_time,
  // capped so the closing speed can still be shed at a comfortable decel.
  const double lead_speed = std::max(0.0, lead.track->x[2]);
  const double desired_gap = p.follow_min_distance + p.follow_headway * lead_speed;
  const double excess = lead.gap - desired_gap;
  double desired_closing = excess / p.closing_time;
  if (excess > 0.0) desired_closing = std::min(desired_closing, std::sqrt(2.0 * kComfortDecelShare * p.soft_decel * excess));
  double a = (desired_closing - lead.closing) / p.speed_time_constant;
  a = std::min(a, to_set);
  nv.accel = std::clamp(a, -p.soft_decel, p.max_accel);
  ev.kind = speed_kind(nv.accel);
  if (vehicle.mode != DriveMode::lane_changing) nv.mode = DriveMode::following;

  return out;
}

VehicleState integrate(const VehicleState& v, double dt, const PlannerParams& p, const RoadGeometry& road) {
  VehicleState n = v;
  n.speed = std::max(0.0, v.speed + v.accel * dt);
  n.x = v.x + 0.5 * (v.speed + n.speed) * dt;
  if (n.speed == 0.0 && v.accel <= 0.0 && v.mode != DriveMode::lane_changing) {
    n.mode = DriveMode::stopped;
    n.accel = 0.0;
  }
  if (v.mode == DriveMode::lane_changing) {
    const double target = road.lane_center(v.lane_id);
    // Lateral motion needs forward motion; a stopped car does not slide sideways.
    const double step = v.lateral_speed * dt * (v.speed > 0.0 || v.accel > 0.0 ? 1.0 : 0.0);
    if (std::abs(target - v.y) <= std::abs(step)) {
      n.y = target;
      n.lateral_speed = 0.0;
      n.mode = n.speed > 0.0 ? DriveMode::cruising : DriveMode::stopped;
    } else {
      n.y = v.y + step;
    }
  }
  (void)p;
  return n;
}

}  // namespace mmspoof
