#pragma once

#include "mmspoof/radar_dsp.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace mmspoof {

// World frame: x along the road, y to the left, lane 0 is the rightmost lane
// centred at y = lane_width / 2. Radar bearings are positive to the left.

struct RoadGeometry {
  int lanes = 2;
  double lane_width = 3.7;  // m
  double length = 400.0;    // m

  double lane_center(int lane) const { return (lane + 0.5) * lane_width; }
  int lane_at(double y) const;
  bool has_lane(int lane) const { return lane >= 0 && lane < lanes; }
  void validate() const;
};

struct PlannerParams {
  // Table of planner distances, m.
  double min_lane_change_length = 5.0;
  double min_lane_change_prepare_length = 60.0;
  double follow_min_distance = 3.0;
  double min_stop_distance_obstacle = 6.0;
  double max_stop_distance_obstacle = 10.0;
  double lane_change_prepare_length = 80.0;
  double min_nudge_distance = 0.2;
  double max_nudge_distance = 1.1;
  double min_yield_distance = 5.0;
  // Obstacle cost constants.
  double c_nudge = 1.0;        // 1/m
  double c_collision = 1.0e3;
  double d_n = 10.0;           // m
  double d_c = 6.0;            // m
  // Environment cost of occupying a lane other than the current one.
  double lane_change_penalty = 0.5;
  // Weight of the relative speed lost behind a lead slower than the set speed.
  double speed_loss_cost = 1.0;
  // Scales min_lane_change_prepare_length to the scenario's size.
  double lane_change_scale = 0.5;
  double lane_change_duration = 2.0;  // s
  // Rules.
  double hard_brake_ttc = 2.3;   // s
  double stop_hold_range = 15.0; // m
  double roi_horizon = 80.0;     // m
  // Kinematics and cruise control.
  double max_accel = 2.0;        // m/s^2
  double soft_decel = 4.0;       // m/s^2
  double hard_decel = 6.0;       // m/s^2
  double follow_headway = 1.0;   // s
  double closing_time = 3.0;     // s to absorb the excess gap
  double speed_time_constant = 0.5;  // s

  double lane_change_threshold() const { return min_lane_change_prepare_length * lane_change_scale; }
  void validate() const;
};

enum class DriveMode { stopped, cruising, following, braking, lane_changing };

struct VehicleState {
  double x = 0.0;  // m, front bumper, where the radar sits
  double y = 0.0;
  double speed = 0.0;    // m/s
  int lane_id = 0;
  double set_speed = 0.0;
  DriveMode mode = DriveMode::cruising;
  double accel = 0.0;    // last commanded longitudinal acceleration
  double lateral_speed = 0.0;

  void validate(const RoadGeometry& road) const;
};

enum class DecisionKind {
  hold_stop,
  proceed,
  soft_brake,
  hard_brake,
  lane_change,
  side_pass,
  accelerate,
  decelerate,
  maintain
};

std::string to_string(DecisionKind k);
std::string to_string(DriveMode m);

struct DecisionEvent {
  double timestamp = 0.0;
  DecisionKind kind = DecisionKind::maintain;
  int target_lane = -1;      // lane_change / side_pass
  std::optional<int> cause;  // obstacle track id
  double ttc = 0.0;          // s, infinity when not closing
};

// ---------------------------------------------------------------- perception

/// World position of a detection seen from the vehicle's radar.
Eigen::Vector2d detection_world(const Detection& d, const VehicleState& v);

/// Detections inside the vehicle's lane corridor (half lane width plus the
/// maximum nudge on either side), ahead of the bumper and within roi_horizon.
PointCloud roi_filter(const PointCloud& cloud, const RoadGeometry& road, const VehicleState& vehicle,
                      const PlannerParams& params);

struct ObstacleTrack {
  int id = 0;
  Eigen::Vector4d x = Eigen::Vector4d::Zero();  // px, py, vx, vy
  Eigen::Matrix4d P = Eigen::Matrix4d::Identity();
  int age = 1;   // frames since creation
  int hits = 1;  // frames with an associated detection
  long last_seen = 0;

  bool confirmed(int min_hits) const { return hits >= min_hits; }
};

struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (track index, detection index)
  std::vector<int> unmatched_tracks;
  std::vector<int> unmatched_detections;
  double total_cost = 0.0;                 // summed distance over pairs
};

/// Gated optimal assignment: maximizes the number of pairs within the gate,
/// then minimizes their summed Euclidean distance (Hungarian algorithm).
MatchResult match_tracks(const std::vector<Eigen::Vector2d>& track_positions,
                         const std::vector<Eigen::Vector2d>& detections, double gate);

/// Minimum-cost assignment of a square cost matrix; returns the column of each row.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

struct TrackerParams {
  double gate = 2.5;              // m
  int prune_frames = 5;           // drop tracks unseen for longer
  int confirm_hits = 3;
  double sigma_position = 0.3;    // m
  double sigma_velocity = 0.6;    // m/s
  double accel_psd = 4.0;         // (m/s^2)^2 s
};

struct ObstacleMeasurement {
  Eigen::Vector2d position;
  double vx = 0.0;  // from the radial velocity, along the road
};

class ObstacleTracker {
 public:
  explicit ObstacleTracker(TrackerParams p = {}) : p_(p) {}

  /// Predict to t, associate, update, spawn and prune. Returns the association.
  MatchResult step(const std::vector<ObstacleMeasurement>& meas, double t, long frame_id);

  const std::vector<ObstacleTrack>& tracks() const { return tracks_; }
  std::vector<ObstacleTrack> confirmed() const;

 private:
  TrackerParams p_;
  std::vector<ObstacleTrack> tracks_;
  int next_id_ = 1;
  double t_ = 0.0;
  bool started_ = false;
};

/// Measurements of in-ROI detections in world coordinates.
std::vector<ObstacleMeasurement> to_measurements(const PointCloud& roi_cloud, const VehicleState& v);

// ---------------------------------------------------------------- planning

/// Obstacle cost with the printed branches: 0 beyond d_n, C_nudge (d - d_c)
/// on [d_c, d_n], C_collision below d_c.
double obstacle_cost(double d, const PlannerParams& params);

struct DecisionContext {
  double time = 0.0;
  bool must_stop = false;  // red light or equivalent hold
  bool alert = false;      // a defense has flagged an attack
};

struct Decision {
  DecisionEvent event;
  VehicleState next;  // vehicle with the new command and mode, not yet integrated
};

/// One planning tick over confirmed in-lane tracks.
Decision decide(const VehicleState& vehicle, const std::vector<ObstacleTrack>& tracks,
                const PlannerParams& params, const RoadGeometry& road, const DecisionContext& ctx);

/// Point-mass integration of the commanded acceleration and lateral motion.
VehicleState integrate(const VehicleState& v, double dt, const PlannerParams& params, const RoadGeometry& road);

/// Gap from the bumper to the obstacle and closing speed; ttc is infinite when opening.
double time_to_collision(double gap, double closing_speed);

}  // namespace mmspoof
