#pragma once

#include "mmspoof/array_geometry.hpp"
#include "mmspoof/cube.hpp"
#include "mmspoof/signalcore.hpp"

#include <optional>
#include <vector>

namespace mmspoof {

/// Dechirp one raw chirp: tx * conj(rx), low-pass at cutoff, decimate to n_out samples.
/// With this ordering an echo delayed by tau becomes a positive tone at slope * tau.
CVector dechirp(const BasebandSignal& rx, const BasebandSignal& tx_template, double cutoff, int n_out);

/// rx[antenna][chirp] raw signals aligned to chirp start.
IQCube mix_and_filter(const std::vector<std::vector<BasebandSignal>>& rx, const ChirpParams& tx,
                      double cutoff, int n_out = 256);

double range_bin_width(const ChirpParams& tx);
double velocity_bin_width(const ChirpParams& tx);
double max_unambiguous_velocity(const ChirpParams& tx);

/// Hann-windowed range and Doppler FFTs, normalized so white noise keeps its
/// per-sample power in every cell. Only positive beat frequencies are kept.
RangeDopplerCube range_doppler(const IQCube& cube, const ChirpParams& tx);

struct CfarConfig {
  int training = 8;
  int guard = 2;
  /// Linear factor on the local noise mean; default gives about 2e-4 false alarms per frame.
  double threshold_factor = 25.0;
  int min_range_bin = 2;
  int max_detections = 32;
};

struct BinIndex {
  int range_bin = 0;
  int velocity_bin = 0;
  bool operator==(const BinIndex&) const = default;
};

/// Cross-shaped cell-averaging CFAR on the antenna-averaged power map; returns
/// local maxima above threshold, strongest first.
std::vector<BinIndex> detect(const RangeDopplerCube& rd, const CfarConfig& cfg = {});

/// Same detector on an arbitrary power map, so other components can reuse it.
std::vector<BinIndex> cfar_on_map(const Eigen::MatrixXd& power, const CfarConfig& cfg);

struct MusicResult {
  std::vector<double> angles;  // deg, strongest first
  bool degraded = false;       // true when the beamforming fallback was used
};

struct MusicConfig {
  int k_sources = 1;
  double grid_step = 0.5;   // deg
  double angle_limit = 60.0;
  bool forward_backward = true;
};

/// Spatial covariance of the per-chirp snapshots at one range bin.
Eigen::MatrixXcd snapshot_covariance(const RangeDopplerCube& rd, int range_bin, bool forward_backward);

MusicResult music_from_covariance(const Eigen::MatrixXcd& r, const ArrayGeometry& g, const MusicConfig& cfg);

MusicResult music_angle(const RangeDopplerCube& rd, const BinIndex& bin, const ArrayGeometry& g,
                        const MusicConfig& cfg = {});

/// MUSIC pseudo-spectrum sampled on the configured grid, returned as (angle, value) columns.
Eigen::MatrixX2d music_spectrum(const Eigen::MatrixXcd& r, const ArrayGeometry& g, const MusicConfig& cfg);

/// Argmax of a^H R a over a grid.
double beamforming_peak(const Eigen::MatrixXcd& r, const ArrayGeometry& g, double grid_step,
                        double angle_limit);

struct Detection {
  double range = 0.0;      // m
  double velocity = 0.0;   // m/s, positive = receding
  double angle = 0.0;      // deg
  double power = 0.0;      // dB
  int range_bin = 0;
  int velocity_bin = 0;
  bool angle_degraded = false;
};

struct PointCloud {
  long frame_id = 0;
  double timestamp = 0.0;
  std::vector<Detection> detections;
};

/// Converts bins to physical units with three-point peak interpolation, and sorts by power.
PointCloud point_cloud(const std::vector<BinIndex>& bins, const std::vector<MusicResult>& angles,
                       const RangeDopplerCube& rd);

struct RadarConfig {
  ChirpParams tx = ChirpParams::long_range();
  ArrayGeometry geometry;
  CfarConfig cfar;
  MusicConfig music;
};

struct FrameResult {
  RangeDopplerCube rd;
  std::vector<BinIndex> bins;
  PointCloud cloud;
};

/// Range-Doppler, detection, MUSIC and point-cloud in one call.
FrameResult process_frame(const IQCube& cube, const RadarConfig& cfg);

}  // namespace mmspoof
