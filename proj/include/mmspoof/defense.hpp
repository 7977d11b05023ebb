#pragma once

#include "mmspoof/airsim.hpp"
#include "mmspoof/radar_dsp.hpp"
#include "mmspoof/signalcore.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmspoof {

// ---------------------------------------------------------------- challenge-response

struct ChallengePolicy {
  bool randomize_phi = true;        // uniform [0, 2 pi) per chirp
  bool randomize_f_start = false;   // one draw from hop_set per frame
  std::vector<double> hop_set;      // Hz
  std::uint64_t seed = 1;
  double band_low = 60.0e9;         // radio band limits, Hz
  double band_high = 64.0e9;

  void validate(const ChirpParams& params) const;
};

/// Chirp parameters for one frame with the randomized fields replaced by
/// seeded draws. Bandwidth and slope are untouched.
ChirpParams issue_challenge(const ChirpParams& params, const ChallengePolicy& policy, long frame_id);

enum class Verdict { genuine, spoofed };
std::string to_string(Verdict v);

struct ResponseVerdict {
  BinIndex bin;
  double concentration = 0.0;  // peak cell over the range bin's Doppler slice, linear
  Verdict verdict = Verdict::genuine;
};

/// Peak Doppler cell power over the total power of that range bin's Doppler slice.
double doppler_concentration(const RangeDopplerCube& rd, int range_bin);

/// Spoofed when the concentration at the detection's range bin is below threshold.
std::vector<ResponseVerdict> verify_response(const RangeDopplerCube& rd, std::span<const Detection> detections,
                                             double threshold);

struct ConcentrationCalibration {
  double clean_mean_db = 0.0;
  double threshold = 0.0;  // linear, clean mean minus margin
};

/// Mean concentration of genuine reflectors under the given radar config, over
/// random ranges and velocities at the given per-sample SNR; threshold is that
/// mean minus margin_db.
ConcentrationCalibration calibrate_concentration(const ChirpParams& tx, const ArrayGeometry& g, double snr_db = 10.0,
                                                 int trials = 16, std::uint64_t seed = 1, double margin_db = 6.0);

// ---------------------------------------------------------------- fingerprinting

struct FeatureVector {
  double std_mag = 0.0;
  double kurtosis_mag = 0.0;
  double skewness_mag = 0.0;
  double std_phase = 0.0;
  double kurtosis_phase = 0.0;
  double skewness_phase = 0.0;

  static constexpr int kSize = 6;
  Eigen::Matrix<double, kSize, 1> as_vector() const;
  bool operator==(const FeatureVector&) const = default;
};

/// Statistics of one rms-normalized chirp. Magnitude moments default to 0 when
/// the magnitude is constant; phase moments use the residual after removing the
/// best-fit quadratic in time from the unwrapped phase.
FeatureVector extract_features(const BasebandSignal& chirp);
FeatureVector extract_features(const CVector& chirp);

/// One chirp of a detection's beat signal, isolated by keeping range-FFT bins
/// within half_width of the peak and of its IQ image, then transforming back.
CVector isolate_detection(const IQCube& cube, int antenna, int chirp, int range_bin, int half_width = 10,
                          int trim = 24);

struct OneClassSvmParams {
  double gamma = 0.1;  // RBF width on standardized features
  double tolerance = 1e-4;
  int max_iterations = 200000;
};

struct AnomalyModel {
  Eigen::Matrix<double, FeatureVector::kSize, 1> mean = Eigen::Matrix<double, FeatureVector::kSize, 1>::Zero();
  Eigen::Matrix<double, FeatureVector::kSize, 1> scale = Eigen::Matrix<double, FeatureVector::kSize, 1>::Ones();
  double gamma = 0.0;
  double rho = 0.0;
  double nu = 0.0;
  Eigen::MatrixXd support;  // standardized support vectors, one per row
  Eigen::VectorXd alpha;    // their coefficients
  double threshold = 0.0;   // decision value below which a vector is spoofed
  int n_train = 0;
  std::uint64_t seed = 0;

  bool fitted() const { return support.rows() > 0; }
  /// Versioned text record; see README.
  void save(std::ostream& os) const;
  static AnomalyModel load(std::istream& is);
};

/// One-class SVM with an RBF kernel, solved by SMO on the dual. Training
/// vectors are standardized first; the result does not depend on their order.
AnomalyModel fit_anomaly_model(std::span<const FeatureVector> training, double nu, std::uint64_t seed = 0,
                               OneClassSvmParams params = {});

struct Score {
  Verdict verdict = Verdict::genuine;
  double margin = 0.0;  // decision value minus threshold; negative = outside
};

Score score(const AnomalyModel& model, const FeatureVector& fv);

/// Synthetic feature vectors from single-source frames: a genuine reflector
/// when attacker is empty, otherwise a chirp-replay attacker with that
/// fingerprint. Range, velocity and per-sample SNR are drawn uniformly.
struct FingerprintSetup {
  ChirpParams tx = ChirpParams::long_range();
  ArrayGeometry geometry;
  double snr_low_db = 10.0;
  double snr_high_db = 45.0;
  double range_low = 8.0;   // m
  double range_high = 50.0;
  double max_speed = 15.0;  // m/s
  int chirp_stride = 16;     // vectors taken from every stride-th chirp
  int half_width = 10;
  int trim = 24;
};

std::vector<FeatureVector> fingerprint_vectors(const FingerprintSetup& setup,
                                               const std::optional<HardwareFingerprint>& attacker, int count,
                                               std::uint64_t seed);

struct FingerprintVerdict {
  Verdict verdict = Verdict::genuine;
  double spoofed_fraction = 0.0;  // of the chirps scored
};

/// Majority vote over every chirp of one detection on antenna 0.
FingerprintVerdict fingerprint_detection(const AnomalyModel& model, const IQCube& cube, int range_bin,
                                         int half_width = 10, int trim = 24);

}  // namespace mmspoof
