#include "mmspoof/airsim.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>

namespace mmspoof {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Reference attacker hardware used to place the attack range boundary.
constexpr double kRefAttackerPower = 0.01;
constexpr double kRefAttackerGainDbi = 23.0;
constexpr double kRefAttackRange = 26.0;
constexpr double kInRangeMargin = 10.0;

// Samples of margin on each side when synthesizing the correlated noise, so the
// filter transient never lands inside the chirp.

// Unit-amplitude dechirped tone for a replica arriving with delay tau.
// phase0 collects every per-chirp constant; freq_offset is subtracted from the beat.
void render_tone(CVector& out, double fs, double slope, double tau, double phase0,
                 double freq_offset) {
  const Eigen::Index n = out.size();
  const double w = kTwoPi * (slope * tau - freq_offset) / fs;
  const double p0 = phase0 - kPi * slope * tau * tau;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / fs;
    out[k] = t < tau ? cplx(0.0, 0.0) : std::polar(1.0, p0 + w * static_cast<double>(k));
  }
}

// Band-limited unit-power noise synthesized in the frequency domain, so the
// band edge stays sharp even when cutoff is far below the bin spacing of n.
CVector correlated_noise(std::uint64_t seed, int n, double cutoff, double fs) {
  const int len = 8 * n;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  CVector spec = CVector::Zero(len);
  const double df = fs / len;
  for (int k = 0; k < len; ++k) {
    const double f = (k <= len / 2 ? k : k - len) * df;
    if (k == 0 || std::abs(f) <= cutoff) spec[k] = cplx(g(rng), g(rng));
  }
  Eigen::FFT<double> fft;
  CVector full;
  fft.inv(full, spec);
  CVector out = full.head(n);
  const double p = out.squaredNorm() / n;
  if (p > 0.0) out /= std::sqrt(p);
  return out;
}

}  // namespace

void Reflector::validate() const {
  require(range > 0.0, "Reflector.range must be > 0");
  require(std::abs(angle) <= 90.0, "Reflector.angle must lie in [-90, 90]");
  require(reflectivity >= 0.0, "Reflector.reflectivity must be >= 0");
}

double reflectivity_from_rcs(double rcs_m2, double wavelength) {
  return std::sqrt(4.0 * kPi * rcs_m2) / wavelength;
}

bool HardwareFingerprint::ideal() const {
  return iq_gain_imbalance == 0.0 && iq_phase_skew == 0.0 && phase_noise_std == 0.0 &&
         nonlinearity_coeff == 0.0 && dc_offset == cplx(0.0, 0.0);
}

void HardwareFingerprint::validate() const {
  require(std::isfinite(iq_gain_imbalance) && std::isfinite(iq_phase_skew) &&
              std::isfinite(phase_noise_std) && std::isfinite(nonlinearity_coeff) &&
              std::isfinite(dc_offset.real()) && std::isfinite(dc_offset.imag()),
          "HardwareFingerprint fields must be finite");
  require(phase_noise_std >= 0.0, "HardwareFingerprint.phase_noise_std must be >= 0");
}

void AttackerNode::validate() const {
  require(position.range > 0.0, "AttackerNode.position.range must be > 0");
  require(tx_power >= 0.0, "AttackerNode.tx_power must be >= 0");
  require(sensing_latency >= 0.0, "AttackerNode.sensing_latency must be >= 0");
  require(switch_latency >= 0.0, "AttackerNode.switch_latency must be >= 0");
  impairment.validate();
}

double LinkBudget::one_way_loss(double d) const {
  const double x = 4.0 * kPi * d / wavelength;
  return x * x;
}

double LinkBudget::two_way_loss(double d) const {
  const double l = one_way_loss(d);
  return l * l;
}

double LinkBudget::fov_gain(double angle_deg) const {
  return std::abs(angle_deg) > fov_half_angle ? db_to_linear(-fov_penalty_db) : 1.0;
}

double LinkBudget::echo_power(const Reflector& r) const {
  const double g = db_to_linear(radar_gain);
  const double fov = fov_gain(r.angle);
  return radar_tx_power * g * g * r.reflectivity * r.reflectivity / two_way_loss(r.range) * fov *
         fov;
}

LinkBudget LinkBudget::calibrated(double wavelength) {
  LinkBudget lb;
  lb.wavelength = wavelength;
  AttackerNode ref;
  ref.tx_power = kRefAttackerPower;
  ref.antenna_gain = kRefAttackerGainDbi;
  ref.position.range = kRefAttackRange;
  lb.noise_floor = received_attacker_power(ref, lb) / kInRangeMargin;
  return lb;
}

double received_attacker_power(const AttackerNode& node, const LinkBudget& lb) {
  require(node.position.range > 0.0, "AttackerNode.position.range must be > 0");
  return node.tx_power * db_to_linear(node.antenna_gain) / lb.one_way_loss(node.position.range);
}

double apparent_delay(const AttackerNode& node, double fine_delay, int frame_lag,
                      const ChirpParams& tx) {
  return 2.0 * node.position.range / kSpeedOfLight + node.sensing_latency + fine_delay -
         frame_lag * tx.frame_period;
}

void apply_impairment_inplace(CVector& x, const HardwareFingerprint& fp, std::uint64_t seed) {
  if (fp.ideal()) return;
  const Eigen::Index n = x.size();

  if (fp.iq_gain_imbalance != 0.0 || fp.iq_phase_skew != 0.0) {
    const double g = std::pow(10.0, fp.iq_gain_imbalance / 20.0);
    const cplx mu = 0.5 * (1.0 + g * std::polar(1.0, -fp.iq_phase_skew));
    const cplx nu = 0.5 * (1.0 - g * std::polar(1.0, fp.iq_phase_skew));
    for (Eigen::Index k = 0; k < n; ++k) x[k] = mu * x[k] + nu * std::conj(x[k]);
  }

  if (fp.phase_noise_std > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> step(0.0, fp.phase_noise_std);
    double theta = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      theta += step(rng);
      x[k] *= std::polar(1.0, theta);
    }
  }

  if (fp.nonlinearity_coeff != 0.0) {
    const double mean_power = n > 0 ? x.squaredNorm() / static_cast<double>(n) : 0.0;
    if (mean_power > 0.0) {
      const double c = fp.nonlinearity_coeff / mean_power;
      for (Eigen::Index k = 0; k < n; ++k) x[k] += c * x[k] * std::norm(x[k]);
    }
  }

  if (fp.dc_offset != cplx(0.0, 0.0)) x.array() += fp.dc_offset;
}

BasebandSignal apply_impairment(const BasebandSignal& sig, const HardwareFingerprint& fp,
                                std::uint64_t seed) {
  BasebandSignal out = sig;
  apply_impairment_inplace(out.samples, fp, seed);
  return out;
}

IQCube propagate_frame(const ChirpParams& tx, std::span<const Reflector> reflectors,
                       std::span<const ScheduledEmitter> attackers, const ArrayGeometry& geometry,
                       const LinkBudget& lb, std::uint64_t seed, const FrameSpec& spec) {
  geometry.validate();
  tx.validate();
  require(spec.n_samples > 0 && (spec.n_samples & (spec.n_samples - 1)) == 0,
          "FrameSpec.n_samples must be a power of two");

  const int n_rx = geometry.n_rx;
  const int n_chirps = tx.n_chirps;
  const int n = spec.n_samples;
  const double fs = spec.sample_rate(tx);
  const double slope = tx.slope();
  const double t_rep = tx.t_rep();

  IQCube cube(n_rx, n_chirps, n, fs);
  cube.frame_id = spec.frame_id;
  cube.timestamp = spec.timestamp;

  CVector tone(n);
  auto add_steered = [&](int chirp, const CVector& v, const CVector& a) {
    for (int k = 0; k < n_rx; ++k) cube.data[static_cast<std::size_t>(k)].row(chirp) += a[k] * v.transpose();
  };

  for (const Reflector& r : reflectors) {
    r.validate();
    const double amp = std::sqrt(lb.echo_power(r));
    if (amp == 0.0) continue;
    const CVector a = steering_vector(geometry, r.angle);
    for (int c = 0; c < n_chirps; ++c) {
      const double tau = 2.0 * (r.range + r.radial_velocity * c * t_rep) / kSpeedOfLight;
      // Beyond the IF filter cutoff.
      if (tau >= tx.t_chirp || slope * tau >= fs / 2.0) continue;
      render_tone(tone, fs, slope, tau, kTwoPi * tx.f_start * tau, 0.0);
      add_steered(c, amp * tone, a);
    }
  }

  // One correlated-noise realization per seed and frame, identical for every
  // node using that seed and repeated on every chirp of the frame.
  std::map<std::uint64_t, CVector> f_cache;
  auto shared_noise = [&](const Emission& e) -> const CVector& {
    auto it = f_cache.find(e.noise_seed);
    if (it == f_cache.end()) {
      const std::uint64_t s = mix_seed(e.noise_seed, static_cast<std::uint64_t>(spec.frame_id));
      it = f_cache.emplace(e.noise_seed, correlated_noise(s, n, e.noise_cutoff, fs)).first;
    }
    return it->second;
  };

  std::mt19937_64 jam_rng(mix_seed(seed, 0xa77ac4ULL));
  CVector contrib(n);
  for (std::size_t ai = 0; ai < attackers.size(); ++ai) {
    const AttackerNode& node = attackers[ai].node;
    const Emission& e = attackers[ai].emission;
    node.validate();
    if (e.kind == EmissionKind::none) continue;

    const double p_rx = received_attacker_power(node, lb) * e.power_scale * lb.fov_gain(node.position.angle);
    if (!(p_rx > 0.0)) continue;
    const CVector a = steering_vector(geometry, node.position.angle);
    const double rep_f = e.replica_f_start > 0.0 ? e.replica_f_start : tx.f_start;
    const double f_off = node.cfo + (rep_f - tx.f_start) + tx.f_start * node.clock_skew;
    const std::uint64_t node_seed = mix_seed(seed, 0x5eed0000ULL + ai);

    for (int c = 0; c < n_chirps; ++c) {
      contrib.setZero();
      if (e.kind == EmissionKind::gaussian_noise) {
        std::normal_distribution<double> g(0.0, std::sqrt(0.5));
        for (int k = 0; k < n; ++k) contrib[k] = cplx(g(jam_rng), g(jam_rng));
      } else {
        require(!e.fine_delays.empty(), "Emission needs at least one fine delay");
        const double rep_phi = e.replica_phi.empty() ? 0.0 : e.replica_phi[static_cast<std::size_t>(c)];
        const double chirp_phase = tx.phase_of(c) - rep_phi - e.phase_ramp * c - node.phase_offset -
                                   kTwoPi * f_off * c * t_rep;
        const double per_replica = 1.0 / std::sqrt(static_cast<double>(e.fine_delays.size()));
        for (double fine : e.fine_delays) {
          const double tau = apparent_delay(node, fine, e.frame_lag, tx);
          if (tau < 0.0 || tau >= tx.t_chirp) continue;
          // Outside the IF filter, e.g. a replica on the wrong start frequency.
          if (std::abs(slope * tau - f_off) >= fs / 2.0) continue;
          render_tone(tone, fs, slope, tau, chirp_phase + kTwoPi * tx.f_start * tau, f_off);
          contrib += per_replica * tone;
        }
        if (e.kind == EmissionKind::chirp_plus_noise || e.kind == EmissionKind::noise_only) {
          const CVector& f = shared_noise(e);
          // Both kinds keep unit mean power so power_scale is the node's total.
          if (e.kind == EmissionKind::noise_only) {
            contrib = (contrib.array() * f.array()).matrix();
          } else {
            const double fa = std::sqrt(e.noise_power);
            contrib = (contrib.array() * (1.0 + fa * f.array())).matrix() / std::sqrt(1.0 + e.noise_power);
          }
        }
      }
      apply_impairment_inplace(contrib, node.impairment, mix_seed(node_seed, static_cast<std::uint64_t>(c)));
      add_steered(c, std::sqrt(p_rx) * contrib, a);
    }
  }

  if (lb.noise_floor > 0.0) {
    std::mt19937_64 rng(mix_seed(seed, 0x7e4a1ULL));
    std::normal_distribution<double> g(0.0, std::sqrt(lb.noise_floor / 2.0));
    for (auto& m : cube.data) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += cplx(g(rng), g(rng));
    }
  }
  return cube;
}

BasebandSignal propagate_chirp_raw(const ChirpParams& tx, int chirp_index,
                                   std::span<const Reflector> reflectors,
                                   std::span<const RawEmitter> attackers,
                                   const ArrayGeometry& geometry, int antenna, const LinkBudget& lb,
                                   double sample_rate, std::uint64_t seed) {
  geometry.validate();
  require(antenna >= 0 && antenna < geometry.n_rx, "antenna index out of range");
  require(sample_rate > 0.0, "sample_rate must be > 0");
  const Eigen::Index n = static_cast<Eigen::Index>(std::llround(tx.t_chirp * sample_rate));
  BasebandSignal out;
  out.sample_rate = sample_rate;
  out.samples = CVector::Zero(n);
  const double slope = tx.slope();
  const double phi = tx.phase_of(chirp_index);

  // The mixer conjugates the received signal, so the arrival phase is written
  // conjugated here to give the beat-domain steering vector a(theta).
  for (const Reflector& r : reflectors) {
    r.validate();
    const double amp = std::sqrt(lb.echo_power(r));
    const cplx a = std::conj(steering_vector(geometry, r.angle)[antenna]);
    const double tau = 2.0 * (r.range + r.radial_velocity * chirp_index * tx.t_rep()) / kSpeedOfLight;
    const double carrier = -kTwoPi * tx.f_start * tau;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) / sample_rate - tau;
      if (t < 0.0) continue;
      out.samples[k] += amp * a * std::polar(1.0, kPi * slope * t * t + phi + carrier);
    }
  }

  for (const RawEmitter& em : attackers) {
    em.node.validate();
    const double p_rx = received_attacker_power(em.node, lb) * lb.fov_gain(em.node.position.angle);
    const cplx a = std::conj(steering_vector(geometry, em.node.position.angle)[antenna]);
    const double f_off = em.node.cfo + tx.f_start * em.node.clock_skew;
    const double t_abs0 = chirp_index * tx.t_rep();
    const Eigen::Index m = std::min<Eigen::Index>(n, em.waveform.samples.size());
    for (Eigen::Index k = 0; k < m; ++k) {
      const double t = t_abs0 + static_cast<double>(k) / sample_rate;
      out.samples[k] += std::sqrt(p_rx) * a * em.waveform.samples[k] *
                        std::polar(1.0, em.node.phase_offset + kTwoPi * f_off * t);
    }
  }

  if (lb.noise_floor > 0.0) {
    // Scaled so the in-band share left after decimation equals the noise floor.
    const double fs_beat = 256.0 / tx.t_chirp;
    add_complex_gaussian(out.samples, lb.noise_floor * sample_rate / fs_beat,
                         mix_seed(seed, static_cast<std::uint64_t>(antenna * 100003 + chirp_index)));
  }
  return out;
}

}  // namespace mmspoof
