#pragma once

#include "mmspoof/airsim.hpp"
#include "mmspoof/array_geometry.hpp"
#include "mmspoof/radar_dsp.hpp"
#include "mmspoof/signalcore.hpp"

#include <optional>
#include <span>
#include <vector>

namespace mmspoof {

// ---------------------------------------------------------------- sensing

/// Template length as a fraction of one chirp: 5000 of 101376 samples.
inline constexpr double kTemplateFraction = 5000.0 / 101376.0;

struct SenseResult {
  double detect_time = 0.0;  // s, relative to the window start
  Eigen::Index lag = 0;      // samples
  double confidence = 0.0;   // normalized correlation at the peak
};

/// First M samples of the victim chirp, M = ceil(kTemplateFraction * chirp length).
BasebandSignal victim_template(const ChirpParams& tx, double sample_rate, double fraction = kTemplateFraction);

/// Matched-filter detection of the victim chirp. Returns the earliest lag whose
/// locally normalized correlation exceeds threshold (refined to its local peak).
std::optional<SenseResult> sense_victim(const BasebandSignal& rx_window, const BasebandSignal& templ,
                                        double threshold = 0.6);

// ---------------------------------------------------------------- tracking

/// x = [range m, radial velocity m/s, angle deg].
struct TrackState {
  Eigen::Vector3d x = Eigen::Vector3d::Zero();
  Eigen::Matrix3d P = Eigen::Matrix3d::Identity() * 100.0;
  double t = 0.0;
};

struct TrackMeasurement {
  double range = 0.0;
  double velocity = 0.0;
  double angle = 0.0;
};

struct TrackNoise {
  double accel_psd = 1.0;    // (m/s^2)^2 s, white-acceleration model
  double angle_psd = 0.5;    // deg^2 / s, random-walk angle
  double sigma_range = 0.3;  // m
  double sigma_velocity = 0.5;
  double sigma_angle = 1.0;  // deg
};

TrackState init_track(const TrackMeasurement& m, const TrackNoise& n, double t = 0.0);

/// Constant-velocity Kalman predict and (when measured) update on range and
/// velocity, with an independent scalar channel for angle.
TrackState track_victim(const TrackState& prev, const std::optional<TrackMeasurement>& meas, double dt,
                        const TrackNoise& noise);

// ---------------------------------------------------------------- scheduling

struct DelaySchedule {
  bool feasible = false;
  int frame_lag = 0;
  double fine_delay = 0.0;  // s, hold between sensing and emission
};

struct LagLimits {
  int min_lag = 1;
  int max_lag = 8;
};

/// Smallest lag in [min_lag, max_lag] whose hold is at least the switch latency;
/// propagation uses the tracked victim range.
DelaySchedule schedule_delay(const TrackState& victim_track, const AttackerNode& node, double d_spoof,
                             double frame_period, const LagLimits& limits = {});

/// Largest attacker range that can still spoof d_spoof inside the same frame.
double same_frame_max_range(const AttackerNode& node, double d_spoof);

// ---------------------------------------------------------------- strategies

enum class StrategyKind { add_obstacle, multi_obstacle, random_gaussian, synchronous_pair, asynchronous_pair };

struct SpoofTarget {
  double d_spoof = 20.0;     // m
  double v_spoof = 0.0;      // m/s, positive = receding
  double theta_spoof = 0.0;  // deg, pair strategies only
};

struct StrategyConfig {
  StrategyKind kind = StrategyKind::add_obstacle;
  SpoofTarget target;
  std::vector<double> extra_ranges;       // multi_obstacle: further ranges beyond target.d_spoof
  std::optional<std::pair<double, double>> power_split;  // (P1, P2) scale factors
  int frame_lag = 1;                      // minimum lag
  int max_lag = 8;
  double gaussian_margin_db = 6.0;        // over the estimated echo power
  double noise_to_tone_db = 25.0;         // F over the clean replica
  double noise_cutoff = 2.0e3;            // Hz, keeps F inside one range cell
  double jam_margin_db = 10.0;            // node 2 over the genuine echo
  std::uint64_t noise_seed = 1;

  void validate() const;
};

struct SpoofCommand {
  long frame_id = 0;
  int node_index = 0;
  Emission emission;
};

struct PlanContext {
  ChirpParams tx = ChirpParams::long_range();
  ArrayGeometry geometry;
  LinkBudget link = LinkBudget::calibrated();
  bool perfect_sync = false;
  /// Attacker's estimate of the genuine echo power at the victim, for the Gaussian attack.
  double echo_power_estimate = 0.0;
  int n_samples = 256;
};

/// One command per node, in node order. Nodes must match tracks one to one.
std::vector<SpoofCommand> plan_attack(const StrategyConfig& cfg, std::span<const AttackerNode> nodes,
                                      std::span<const TrackState> tracks, long frame_id, const PlanContext& ctx);

/// F power relative to the replica.
double correlated_noise_power(const StrategyConfig& cfg, const ChirpParams& tx, int n_samples = 256);

/// Perceived angle of a correlated-noise pair predicted from its analytic
/// snapshot covariance. p1, p2 are total received powers; tone_weight is the
/// replica-to-F power ratio inside node 1's emission.
double predict_merged_angle(double theta1, double theta2, double p1, double p2, double tone_weight,
                            const ArrayGeometry& g, const MusicConfig& mc = {});

/// Received power ratio P1/P2 that steers the merged peak to theta_target, by
/// bisection on the oracle above. Clamped to [1/64, 64].
double solve_power_ratio(double theta1, double theta2, double theta_target, double tone_weight,
                         const ArrayGeometry& g, const MusicConfig& mc = {});

/// Node 2 overwhelms a genuine echo sharing its range cell once its received
/// power exceeds the echo's by margin_db.
bool jamming_suppresses(double node2_rx_power, double echo_rx_power, double margin_db);

/// True when the node's received power at the victim, field of view included,
/// clears the in-range margin over the noise floor.
bool attacker_in_range(const AttackerNode& node, const LinkBudget& lb, double margin = 10.0);

}  // namespace mmspoof
