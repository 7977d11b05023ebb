#pragma once

#include "mmspoof/array_geometry.hpp"
#include "mmspoof/cube.hpp"
#include "mmspoof/signalcore.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mmspoof {

struct Reflector {
  double range = 10.0;            // m
  double radial_velocity = 0.0;   // m/s, positive = receding
  double angle = 0.0;             // deg, positive = left of boresight
  double reflectivity = 1.0;      // linear amplitude gain, see reflectivity_from_rcs

  void validate() const;
};

/// Amplitude reflectivity for a radar cross section in m^2, chosen so the echo
/// power matches the classic radar equation P G^2 lambda^2 sigma / ((4 pi)^3 d^4).
double reflectivity_from_rcs(double rcs_m2, double wavelength);

struct HardwareFingerprint {
  double iq_gain_imbalance = 0.0;   // dB
  double iq_phase_skew = 0.0;       // rad
  double phase_noise_std = 0.0;     // rad per sample
  double nonlinearity_coeff = 0.0;  // cubic term, relative to the mean signal power
  cplx dc_offset{0.0, 0.0};

  bool ideal() const;
  void validate() const;

  /// Impairments of a commodity software-defined radio used as the default attacker.
  static HardwareFingerprint commodity_sdr() {
    HardwareFingerprint fp;
    fp.iq_gain_imbalance = 1.0;
    fp.phase_noise_std = 0.05;
    return fp;
  }
};

struct PolarPosition {
  double range = 20.0;  // m
  double angle = 0.0;   // deg
};

struct AttackerNode {
  PolarPosition position;
  double tx_power = 0.01;       // W
  double antenna_gain = 23.0;   // dBi
  double cfo = 0.0;             // Hz
  double phase_offset = 0.0;    // rad
  double clock_skew = 0.0;      // dimensionless
  double sensing_latency = 22.5 / kSpeedOfLight - 10e-9;  // s
  double switch_latency = 10e-9;                          // s
  HardwareFingerprint impairment;

  void validate() const;
};

struct LinkBudget {
  double wavelength = kSpeedOfLight / 62.61e9;
  double radar_tx_power = 0.01;  // W
  double radar_gain = 17.0;      // dBi, applied on transmit and on receive
  double noise_floor = 0.0;      // W per complex sample at the decimated rate
  double fov_half_angle = 10.0;  // deg
  double fov_penalty_db = 30.0;

  /// (4 pi d / lambda)^2
  double one_way_loss(double d) const;
  /// (4 pi d / lambda)^4
  double two_way_loss(double d) const;
  /// Power gain applied to an emitter seen at angle_deg (1 inside the field of view).
  double fov_gain(double angle_deg) const;
  /// Echo power of a reflector at the radar receiver.
  double echo_power(const Reflector& r) const;

  /// Budget whose noise floor puts the attack range boundary of the reference
  /// attacker (tx_power 10 mW, 23 dBi) at 26 m, with a 10x power margin.
  static LinkBudget calibrated(double wavelength = kSpeedOfLight / 62.61e9);
};

/// P_attacker * G * lambda^2 / (4 pi d)^2; field of view is not included.
double received_attacker_power(const AttackerNode& node, const LinkBudget& lb);

/// What a node radiates during one frame. Delays are the hold after sensing the
/// victim chirp; the apparent delay at the victim follows from geometry.
enum class EmissionKind {
  none,
  chirp,             // one delayed replica, optional Doppler ramp
  spoof_train,       // several replicas (multi-obstacle)
  gaussian_noise,    // white noise, no replica
  chirp_plus_noise,  // replica plus correlated noise F
  noise_only         // correlated noise F alone
};

struct Emission {
  EmissionKind kind = EmissionKind::none;
  std::vector<double> fine_delays;  // s, one per replica
  int frame_lag = 0;
  double phase_ramp = 0.0;          // rad per chirp added to the emitted replica's phase
  double power_scale = 1.0;         // multiplies the node's transmit power
  double noise_power = 0.0;         // F power relative to the replica (correlated kinds)
  double noise_cutoff = 4.0e5;      // Hz, bandwidth of F around the replica's beat tone
  std::uint64_t noise_seed = 0;
  std::vector<double> replica_phi;  // phases the forger uses; empty = zeros
  double replica_f_start = 0.0;     // 0 = victim's f_start
};

struct ScheduledEmitter {
  AttackerNode node;
  Emission emission;
};

/// Apparent round-trip delay seen by the victim for one replica.
double apparent_delay(const AttackerNode& node, double fine_delay, int frame_lag,
                      const ChirpParams& tx);

struct FrameSpec {
  int n_samples = 256;
  long frame_id = 0;
  double timestamp = 0.0;
  /// Beat-domain sample rate, n_samples / t_chirp.
  double sample_rate(const ChirpParams& tx) const { return n_samples / tx.t_chirp; }
};

/// Dechirped frame received by the victim array, computed analytically in the
/// beat domain (equivalent to propagate_chirp_raw followed by mix_and_filter).
IQCube propagate_frame(const ChirpParams& tx, std::span<const Reflector> reflectors,
                       std::span<const ScheduledEmitter> attackers, const ArrayGeometry& geometry,
                       const LinkBudget& lb, std::uint64_t seed, const FrameSpec& spec = {});

/// An attacker waveform given directly at the raw rate, aligned to the victim
/// chirp start after the node's propagation.
struct RawEmitter {
  AttackerNode node;
  BasebandSignal waveform;
};

/// Full-waveform received signal at one antenna for one chirp (before mixing).
BasebandSignal propagate_chirp_raw(const ChirpParams& tx, int chirp_index,
                                   std::span<const Reflector> reflectors,
                                   std::span<const RawEmitter> attackers,
                                   const ArrayGeometry& geometry, int antenna, const LinkBudget& lb,
                                   double sample_rate, std::uint64_t seed);

/// IQ imbalance, phase-noise random walk, cubic nonlinearity, DC offset, in that order.
BasebandSignal apply_impairment(const BasebandSignal& sig, const HardwareFingerprint& fp,
                                std::uint64_t seed);
void apply_impairment_inplace(CVector& x, const HardwareFingerprint& fp, std::uint64_t seed);

}  // namespace mmspoof
