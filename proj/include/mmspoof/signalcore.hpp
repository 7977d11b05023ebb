#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace mmspoof {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

/// Victim FMCW waveform. phi_init holds one initial phase per chirp in the frame.
struct ChirpParams {
  double f_start = 62.61e9;
  double bandwidth = 300e6;
  double t_chirp = 30e-6;
  double inter_chirp = 3e-6;
  int n_chirps = 128;
  double frame_period = 4.224e-3;
  std::vector<double> phi_init;

  double slope() const { return bandwidth / t_chirp; }
  double t_rep() const { return t_chirp + inter_chirp; }
  double wavelength() const { return kSpeedOfLight / f_start; }
  double phase_of(int chirp_index) const {
    return phi_init.empty() ? 0.0 : phi_init[static_cast<std::size_t>(chirp_index)];
  }

  /// Throws std::invalid_argument naming the violated field.
  void validate() const;

  /// Long-range configuration of the victim radar (IWR6843 class, 60 GHz band).
  static ChirpParams long_range();
};

struct BasebandSignal {
  CVector samples;
  double sample_rate = 1.0;
  double t0 = 0.0;

  Eigen::Index size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  double rms_power() const;
};

enum class NoiseKind { white_gaussian, filtered_gaussian };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::white_gaussian;
  double power = 1.0;
  double cutoff = 0.0;  // Hz, filtered kind only
  std::uint64_t seed = 0;

  void validate() const;
};

BasebandSignal make_chirp(const ChirpParams& params, int chirp_index, double sample_rate);

/// Superposition of delayed replicas of one chirp, amplitude 1/sqrt(N) each.
/// Every replica keeps the carrier phase -2*pi*f_start*tau its delay implies.
BasebandSignal make_spoof_train(const ChirpParams& params, std::span<const double> delays,
                                double sample_rate, int chirp_index = 0);

BasebandSignal make_noise(const NoiseSpec& spec, double duration, double sample_rate);

/// Per-chirp Doppler phase a target at radial velocity v_spoof (positive = receding)
/// would imprint on its echo. The increment per chirp is 4*pi*v*T_rep/lambda.
BasebandSignal apply_doppler_phase(const BasebandSignal& signal, int chirp_index,
                                   double v_spoof, const ChirpParams& params);

double doppler_phase_increment(double v, const ChirpParams& params);

/// Linear-phase windowed-sinc low-pass, Hamming window. cutoff is normalized to the
/// sample rate (0 < cutoff < 0.5).
RVector lowpass_taps(double normalized_cutoff, int n_taps = 129);

/// FIR filter with group-delay compensation, output length equals input length.
CVector fir_filter(const CVector& x, const RVector& taps);

/// Peak of |<x, y shifted by lag>| / (|x||y|) over all lags, with the lag at the peak.
struct XcorrPeak {
  double value = 0.0;
  Eigen::Index lag = 0;
};
XcorrPeak normalized_xcorr_peak(const CVector& x, const CVector& y);

/// Complex white Gaussian samples with E|z|^2 = power.
void add_complex_gaussian(CVector& out, double power, std::uint64_t seed);

/// Deterministic seed mixing (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace mmspoof
