#pragma once

#include "mmspoof/adversary.hpp"
#include "mmspoof/airsim.hpp"
#include "mmspoof/av_stack.hpp"
#include "mmspoof/defense.hpp"
#include "mmspoof/radar_dsp.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mmspoof {

// ---------------------------------------------------------------- configuration

/// Thrown for malformed or invalid configs; the message names the line or field path.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VictimSpec {
  double x = 0.0;  // m
  int lane = 0;
  double speed = 0.0;  // m/s
  double set_speed = 0.0;
};

/// Scripted vehicle moving at constant speed along its lane.
struct VehicleSpec {
  std::string id;
  double x = 0.0;  // m, rear bumper
  int lane = 0;
  double speed = 0.0;
  double rcs = 10.0;    // m^2
  double length = 4.5;  // m
};

/// Red until green_at, then green. The victim must hold while red.
struct TrafficLight {
  double green_at = 0.0;  // s
};

enum class TargetKind { virtual_obstacle, vehicle };

/// What an attack wants the victim to perceive.
struct TargetSpec {
  TargetKind kind = TargetKind::virtual_obstacle;
  // Virtual obstacle, created in the victim's lane when the attack activates.
  double initial_gap = 20.0;  // m ahead of the victim's bumper
  double speed = 0.0;         // m/s along the road
  double min_range = 0.0;     // m, emission stops for good once the obstacle gets closer
  std::vector<double> extra_gaps;  // m behind the first obstacle, multi_obstacle only
  // Genuine vehicle whose bearing is faked.
  std::string vehicle;
  std::optional<double> theta;    // deg, fixed perceived bearing
  double lateral_offset = 4.0;    // m, adaptive bearing asin(offset / range) when theta is unset
  double max_angle = 9.0;         // deg, limit of the adaptive bearing
};

struct AttackSpec {
  std::string name;
  std::vector<AttackerNode> nodes;  // positions relative to the victim, kept while pacing it
  StrategyConfig strategy;
  TargetSpec target;
  double start = 0.0;  // s, activation window
  double end = 0.0;
};

struct DefenseConfig {
  bool challenge_response = false;
  bool fingerprint = false;
  ChallengePolicy policy;
  double cr_margin_db = 6.0;
  double cr_calibration_snr_db = 10.0;
  std::string fp_model_path;  // empty = train at start
  int fp_training_vectors = 1000;
  double fp_nu = 0.02;
  std::uint64_t fp_seed = 7;
  double fp_min_snr_db = 10.0;  // detections below are not fingerprinted
  // Alert when at least alert_min_flags of the last alert_window_frames frames
  // carried a flagged detection; it then latches for alert_hold s.
  int alert_window_frames = 10;
  int alert_min_flags = 2;
  double alert_hold = 2.0;
};

struct ScenarioConfig {
  std::string name;
  std::string description;
  std::uint64_t seed = 1;
  double duration = 10.0;      // s
  int radar_frame_stride = 10;  // ticks between processed radar frames
  RoadGeometry road;
  VictimSpec victim;
  std::vector<VehicleSpec> vehicles;
  std::optional<TrafficLight> traffic_light;
  std::vector<AttackSpec> attacks;
  RadarConfig radar;
  LinkBudget link = LinkBudget::calibrated();
  PlannerParams planner;
  TrackerParams tracker;
  DefenseConfig defense;
  double vehicle_width = 1.9;  // m, for collision overlap

  double tick() const { return radar.tx.frame_period; }
  /// Throws ConfigError naming the field path of the first violation.
  void validate() const;
};

/// Dotted path (attacks.0.nodes.1.angle_deg) and a JSON literal to assign there.
using ConfigOverride = std::pair<std::string, std::string>;

/// Parses a JSON scenario; see README for the schema. Unknown keys are rejected.
ScenarioConfig parse_config(const std::string& text, const std::string& origin = "<string>",
                            const std::vector<ConfigOverride>& overrides = {});
ScenarioConfig load_config(const std::filesystem::path& path, const std::vector<ConfigOverride>& overrides = {});

/// Path of a bundled scenario file, e.g. bundled_scenario("scenario1").
std::filesystem::path bundled_scenario(const std::string& name);

// ---------------------------------------------------------------- run log

enum class Outcome { no_effect, stalled, hard_braked, lane_changed, collision, attack_detected };
std::string to_string(Outcome o);
/// Severity for the efficacy ordering; no_effect and attack_detected share rank 0.
int severity(Outcome o);

enum class DefenseKind { challenge_response, fingerprint };
std::string to_string(DefenseKind k);

struct DefenseRecord {
  int detection = 0;  // index into the frame's point cloud
  DefenseKind defense = DefenseKind::challenge_response;
  Verdict verdict = Verdict::genuine;
  double score = 0.0;  // concentration dB, or spoofed chirp fraction
};

struct FrameRecord {
  long frame_id = 0;
  double timestamp = 0.0;
  VehicleState victim;
  PointCloud cloud;  // as detected, before defense filtering
  std::vector<ObstacleTrack> tracks;  // confirmed, after this frame
  DecisionEvent decision;
  std::vector<DefenseRecord> verdicts;
  bool alert = false;
  std::vector<SpoofCommand> commands;
};

struct RunSummary {
  Outcome outcome = Outcome::no_effect;
  double min_ttc = 0.0;  // s, infinity if never closing on a genuine obstacle
  std::optional<double> first_attack_time;  // first emission
  std::optional<double> first_flag_time;    // first flagged detection
  std::optional<double> first_alert_time;
  std::optional<double> hard_brake_time;
  std::optional<double> hard_brake_ttc;     // perceived TTC at the first hard brake
  std::optional<double> lane_change_time;
  std::optional<double> collision_time;
  std::string collision_with;
  double final_speed = 0.0;
  int flagged_detections = 0;
  std::optional<double> detection_latency() const;
};

struct RunLog {
  std::string scenario;
  std::uint64_t seed = 0;
  bool baseline = false;
  std::string defense;  // none, cr, fp or both
  std::optional<double> green_at;
  std::vector<FrameRecord> frames;
  RunSummary summary;
};

struct RunOptions {
  bool baseline = false;  // attackers deactivated
  std::optional<std::uint64_t> seed;
  std::optional<std::string> defense;  // overrides the config: none, cr, fp or both
  std::optional<AnomalyModel> fp_model;  // skips training
  std::optional<double> capture_at;      // s, keep the IQ cube of the first frame at or after
};

struct RunResult {
  RunLog log;
  std::optional<IQCube> capture;
  ChirpParams capture_tx;
};

/// Deterministic closed-loop simulation; see README for the per-frame sequence.
RunResult run_scenario(const ScenarioConfig& cfg, const RunOptions& opt = {});
RunLog run(const ScenarioConfig& cfg, const RunOptions& opt = {});

/// Precedence: collision, hard_braked, lane_changed, attack_detected, stalled, no_effect.
Outcome classify_outcome(const RunLog& log);

/// Writes pointclouds.csv, decisions.csv, speed_timeline.csv and summary.json.
void export_log(const RunLog& log, const std::filesystem::path& dir);

/// Training set and model the fingerprint defense uses for this config.
AnomalyModel default_fp_model(const ScenarioConfig& cfg);

struct SweepPoint {
  std::vector<ConfigOverride> overrides;
  RunSummary summary;
};

/// Cartesian grid over path=a,b,c values; runs concurrently, results in grid order.
std::vector<SweepPoint> sweep(const std::filesystem::path& config,
                              const std::vector<std::pair<std::string, std::vector<std::string>>>& grid,
                              const RunOptions& opt = {}, int threads = 0);

// ---------------------------------------------------------------- captures

/// JSON header line followed by little-endian float64 I/Q, antenna-major then chirp then sample.
void save_capture(const std::filesystem::path& path, const IQCube& cube, const ChirpParams& tx);
std::pair<IQCube, ChirpParams> load_capture(const std::filesystem::path& path);

}  // namespace mmspoof
