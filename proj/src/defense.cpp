#include "mmspoof/defense.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace mmspoof {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

struct Moments {
  double std = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;  // excess
};

// Population moments; a (numerically) constant sequence has all three at 0.
Moments moments(const RVector& x) {
  Moments m;
  const double n = static_cast<double>(x.size());
  const double mean = x.mean();
  const RVector d = x.array() - mean;
  const double m2 = d.squaredNorm() / n;
  if (m2 <= 1e-18) return m;
  const double m3 = d.array().cube().sum() / n;
  const double m4 = d.array().square().square().sum() / n;
  m.std = std::sqrt(m2);
  m.skewness = m3 / (m2 * m.std);
  m.kurtosis = m4 / (m2 * m2) - 3.0;
  return m;
}

}  // namespace

// ---------------------------------------------------------------- challenge-response

void ChallengePolicy::validate(const ChirpParams& params) const {
  require(randomize_phi || randomize_f_start, "ChallengePolicy: at least one parameter must be randomized");
  if (randomize_f_start) {
    require(!hop_set.empty(), "ChallengePolicy.hop_set must not be empty when f_start is randomized");
    for (double f : hop_set)
      require(f >= band_low && f + params.bandwidth <= band_high, "ChallengePolicy.hop_set outside the radio band");
  }
}

ChirpParams issue_challenge(const ChirpParams& params, const ChallengePolicy& policy, long frame_id) {
  policy.validate(params);
  ChirpParams out = params;
  std::mt19937_64 rng(mix_seed(policy.seed, static_cast<std::uint64_t>(frame_id)));
  if (policy.randomize_f_start) {
    std::uniform_int_distribution<std::size_t> pick(0, policy.hop_set.size() - 1);
    out.f_start = policy.hop_set[pick(rng)];
  }
  if (policy.randomize_phi) {
    std::uniform_real_distribution<double> u(0.0, kTwoPi);
    out.phi_init.resize(static_cast<std::size_t>(params.n_chirps));
    for (double& p : out.phi_init) p = u(rng);
  }
  return out;
}

std::string to_string(Verdict v) { return v == Verdict::genuine ? "genuine" : "spoofed"; }

double doppler_concentration(const RangeDopplerCube& rd, int range_bin) {
  require(range_bin >= 0 && range_bin < rd.n_range(), "doppler_concentration: range bin out of range");
  RVector slice = RVector::Zero(rd.n_velocity());
  for (const auto& c : rd.cells) slice += c.row(range_bin).transpose().cwiseAbs2();
  const double total = slice.sum();
  return total > 0.0 ? slice.maxCoeff() / total : 0.0;
}

std::vector<ResponseVerdict> verify_response(const RangeDopplerCube& rd, std::span<const Detection> detections,
                                             double threshold) {
  std::vector<ResponseVerdict> out;
  out.reserve(detections.size());
  for (const Detection& d : detections) {
    ResponseVerdict v;
    v.bin = {d.range_bin, d.velocity_bin};
    v.concentration = doppler_concentration(rd, d.range_bin);
    v.verdict = v.concentration < threshold ? Verdict::spoofed : Verdict::genuine;
    out.push_back(v);
  }
  return out;
}

ConcentrationCalibration calibrate_concentration(const ChirpParams& tx, const ArrayGeometry& g, double snr_db,
                                                 int trials, std::uint64_t seed, double margin_db) {
  require(trials > 0, "calibrate_concentration: trials must be > 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> range(5.0, 60.0), vel(-20.0, 20.0), ang(-8.0, 8.0);
  const double vmax = max_unambiguous_velocity(tx);
  double sum_db = 0.0;
  for (int t = 0; t < trials; ++t) {
    Reflector r;
    r.range = range(rng);
    r.radial_velocity = std::clamp(vel(rng), -0.9 * vmax, 0.9 * vmax);
    r.angle = ang(rng);
    LinkBudget lb = LinkBudget::calibrated(tx.wavelength());
    lb.noise_floor = lb.echo_power(r) / db_to_linear(snr_db);
    const std::vector<Reflector> refl{r};
    FrameSpec spec;
    spec.frame_id = t;
    const IQCube cube = propagate_frame(tx, refl, {}, g, lb, mix_seed(seed, static_cast<std::uint64_t>(t)), spec);
    const RangeDopplerCube rd = range_doppler(cube, tx);
    const int bin = static_cast<int>(std::lround(r.range / rd.range_bin_width));
    // The peak may straddle two range bins; take the stronger one.
    int peak_bin = bin;
    double peak = -1.0;
    for (int b = std::max(0, bin - 1); b <= std::min(rd.n_range() - 1, bin + 1); ++b) {
      RVector slice = RVector::Zero(rd.n_velocity());
      for (const auto& c : rd.cells) slice += c.row(b).transpose().cwiseAbs2();
      if (slice.maxCoeff() > peak) peak = slice.maxCoeff(), peak_bin = b;
    }
    sum_db += linear_to_db(doppler_concentration(rd, peak_bin));
  }
  ConcentrationCalibration cal;
  cal.clean_mean_db = sum_db / trials;
  cal.threshold = db_to_linear(cal.clean_mean_db - margin_db);
  return cal;
}

// ---------------------------------------------------------------- fingerprinting

Eigen::Matrix<double, FeatureVector::kSize, 1> FeatureVector::as_vector() const {
  Eigen::Matrix<double, kSize, 1> v;
  v << std_mag, kurtosis_mag, skewness_mag, std_phase, kurtosis_phase, skewness_phase;
  return v;
}

FeatureVector extract_features(const CVector& chirp) {
  const Eigen::Index n = chirp.size();
  require(n >= 64, "extract_features: at least 64 samples required");
  const double rms = std::sqrt(chirp.squaredNorm() / static_cast<double>(n));
  require(rms > 0.0 && std::isfinite(rms), "extract_features: degenerate all-zero input");
  const CVector r = chirp / rms;

  FeatureVector fv;
  const Moments mag = moments(r.cwiseAbs());
  fv.std_mag = mag.std;
  fv.kurtosis_mag = mag.kurtosis;
  fv.skewness_mag = mag.skewness;

  RVector phase(n);
  double prev = std::arg(r[0]), offset = 0.0;
  phase[0] = prev;
  for (Eigen::Index k = 1; k < n; ++k) {
    const double p = std::arg(r[k]);
    double d = p - prev;
    if (d > kPi) offset -= kTwoPi;
    if (d < -kPi) offset += kTwoPi;
    prev = p;
    phase[k] = p + offset;
  }
  // Remove the best-fit quadratic in normalized time.
  Eigen::MatrixXd a(n, 3);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = 2.0 * static_cast<double>(k) / static_cast<double>(n - 1) - 1.0;
    a(k, 0) = 1.0;
    a(k, 1) = t;
    a(k, 2) = t * t;
  }
  const Eigen::Vector3d coef = a.colPivHouseholderQr().solve(phase);
  const Moments ph = moments(phase - a * coef);
  fv.std_phase = ph.std;
  fv.kurtosis_phase = ph.kurtosis;
  fv.skewness_phase = ph.skewness;
  return fv;
}

FeatureVector extract_features(const BasebandSignal& chirp) { return extract_features(chirp.samples); }

CVector isolate_detection(const IQCube& cube, int antenna, int chirp, int range_bin, int half_width, int trim) {
  const int n = cube.n_samples();
  require(antenna >= 0 && antenna < cube.n_rx(), "isolate_detection: antenna out of range");
  require(chirp >= 0 && chirp < cube.n_chirps(), "isolate_detection: chirp out of range");
  require(range_bin >= 0 && range_bin < n / 2 && half_width >= 0, "isolate_detection: bad range bin");
  Eigen::FFT<double> fft;
  CVector in = cube.chirp(antenna, chirp), spec(n), out(n);
  fft.fwd(spec, in);
  CVector kept = CVector::Zero(n);
  for (int d = -half_width; d <= half_width; ++d) {
    for (int centre : {range_bin, -range_bin}) {
      const int k = ((centre + d) % n + n) % n;
      kept[k] = spec[k];
    }
  }
  fft.inv(out, kept);
  // Drop the samples before the echo arrives (under 4 for any bin at this
  // time-bandwidth product) and the ringing at the circular edges.
  require(trim >= 4 && n - 2 * trim >= 64, "isolate_detection: trim leaves too few samples");
  return out.segment(trim, n - 2 * trim);
}

std::vector<FeatureVector> fingerprint_vectors(const FingerprintSetup& setup,
                                               const std::optional<HardwareFingerprint>& attacker, int count,
                                               std::uint64_t seed) {
  require(count >= 0 && setup.chirp_stride > 0, "fingerprint_vectors: bad count or stride");
  const ChirpParams& tx = setup.tx;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ur(setup.range_low, setup.range_high);
  std::uniform_real_distribution<double> uv(-setup.max_speed, setup.max_speed);
  std::uniform_real_distribution<double> usnr(setup.snr_low_db, setup.snr_high_db);
  std::vector<FeatureVector> out;
  out.reserve(static_cast<std::size_t>(count));
  for (long frame = 0; static_cast<int>(out.size()) < count; ++frame) {
    const double range = ur(rng), vel = uv(rng), snr = usnr(rng);
    LinkBudget lb = LinkBudget::calibrated(tx.wavelength());
    std::vector<Reflector> refl;
    std::vector<ScheduledEmitter> em;
    if (!attacker) {
      Reflector r;
      r.range = range;
      r.radial_velocity = vel;
      r.angle = 2.0;
      lb.noise_floor = lb.echo_power(r) / db_to_linear(snr);
      refl.push_back(r);
    } else {
      AttackerNode n;
      n.position = {std::min(10.0, range / 2.0), 2.0};
      n.impairment = *attacker;
      Emission e;
      e.kind = EmissionKind::chirp;
      e.fine_delays = {2.0 * (range - n.position.range) / kSpeedOfLight - n.sensing_latency};
      e.phase_ramp = doppler_phase_increment(vel, tx);
      lb.noise_floor = received_attacker_power(n, lb) / db_to_linear(snr);
      em.push_back({n, e});
    }
    FrameSpec spec;
    spec.frame_id = frame;
    const IQCube cube = propagate_frame(tx, refl, em, setup.geometry, lb,
                                        mix_seed(seed, static_cast<std::uint64_t>(frame)), spec);
    const RangeDopplerCube rd = range_doppler(cube, tx);
    const Eigen::MatrixXd pm = rd.power_map();
    const int bin = static_cast<int>(std::lround(range / rd.range_bin_width));
    int peak_bin = bin;
    double best = -1.0;
    for (int b = std::max(0, bin - 1); b <= std::min(rd.n_range() - 1, bin + 1); ++b)
      if (pm.row(b).maxCoeff() > best) best = pm.row(b).maxCoeff(), peak_bin = b;
    for (int c = 0; c < cube.n_chirps() && static_cast<int>(out.size()) < count; c += setup.chirp_stride)
      out.push_back(extract_features(isolate_detection(cube, 0, c, peak_bin, setup.half_width, setup.trim)));
  }
  return out;
}

FingerprintVerdict fingerprint_detection(const AnomalyModel& model, const IQCube& cube, int range_bin,
                                         int half_width, int trim) {
  int spoofed = 0;
  const int n = cube.n_chirps();
  for (int c = 0; c < n; ++c)
    if (score(model, extract_features(isolate_detection(cube, 0, c, range_bin, half_width, trim))).verdict ==
        Verdict::spoofed)
      ++spoofed;
  FingerprintVerdict v;
  v.spoofed_fraction = n > 0 ? static_cast<double>(spoofed) / n : 0.0;
  v.verdict = 2 * spoofed > n ? Verdict::spoofed : Verdict::genuine;
  return v;
}

}  // namespace mmspoof
