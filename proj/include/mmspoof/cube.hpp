#pragma once

#include "mmspoof/signalcore.hpp"

#include <vector>

namespace mmspoof {

using CMatrixRM = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One radar frame of dechirped samples: data[antenna](chirp, fast-time sample).
struct IQCube {
  std::vector<CMatrixRM> data;
  double sample_rate = 0.0;
  long frame_id = 0;
  double timestamp = 0.0;

  IQCube() = default;
  IQCube(int n_rx, int n_chirps, int n_samples, double fs)
      : data(static_cast<std::size_t>(n_rx), CMatrixRM::Zero(n_chirps, n_samples)), sample_rate(fs) {}

  int n_rx() const { return static_cast<int>(data.size()); }
  int n_chirps() const { return data.empty() ? 0 : static_cast<int>(data.front().rows()); }
  int n_samples() const { return data.empty() ? 0 : static_cast<int>(data.front().cols()); }

  CVector chirp(int antenna, int chirp_index) const {
    return data[static_cast<std::size_t>(antenna)].row(chirp_index).transpose();
  }
};

/// cells[antenna](range_bin, velocity_bin). Velocity bins are centred: bin n_chirps/2 is zero.
struct RangeDopplerCube {
  std::vector<Eigen::MatrixXcd> cells;
  /// Range-FFT output before the Doppler FFT, per antenna (chirp, range_bin); MUSIC snapshots.
  std::vector<CMatrixRM> range_profiles;
  double range_bin_width = 0.0;
  double velocity_bin_width = 0.0;
  long frame_id = 0;
  double timestamp = 0.0;

  int n_rx() const { return static_cast<int>(cells.size()); }
  int n_range() const { return cells.empty() ? 0 : static_cast<int>(cells.front().rows()); }
  int n_velocity() const { return cells.empty() ? 0 : static_cast<int>(cells.front().cols()); }

  /// Antenna-averaged power map.
  Eigen::MatrixXd power_map() const {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n_range(), n_velocity());
    for (const auto& c : cells) p += c.cwiseAbs2();
    return p / static_cast<double>(cells.size());
  }
};

}  // namespace mmspoof
