#include "doctest.h"
#include "mmspoof/defense.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

using namespace mmspoof;

namespace {

const ChirpParams kTx = ChirpParams::long_range();
const ArrayGeometry kGeom{};

struct Scene {
  std::vector<Reflector> refl;
  std::vector<ScheduledEmitter> em;
  LinkBudget lb = LinkBudget::calibrated();
};

Scene genuine(double range, double vel, double snr_db, bool noise = true) {
  Scene s;
  Reflector r;
  r.range = range;
  r.radial_velocity = vel;
  r.angle = 3.0;
  s.lb.noise_floor = noise ? s.lb.echo_power(r) / db_to_linear(snr_db) : 0.0;
  s.refl.push_back(r);
  return s;
}

Scene forger(double range, double snr_db, std::vector<double> phi = {}, bool noise = true) {
  Scene s;
  AttackerNode n;
  n.position = {10.0, 3.0};
  Emission e;
  e.kind = EmissionKind::chirp;
  e.fine_delays = {2.0 * (range - 10.0) / kSpeedOfLight - n.sensing_latency};
  e.replica_phi = std::move(phi);
  s.lb.noise_floor = noise ? received_attacker_power(n, s.lb) / db_to_linear(snr_db) : 0.0;
  s.em.push_back({n, e});
  return s;
}

struct Frame {
  IQCube cube;
  RangeDopplerCube rd;
  int bin = 0;  // strongest range bin near the target
};

Frame render(const Scene& s, const ChirpParams& tx, double range, std::uint64_t seed) {
  Frame f;
  FrameSpec spec;
  spec.frame_id = static_cast<long>(seed);
  f.cube = propagate_frame(tx, s.refl, s.em, kGeom, s.lb, seed, spec);
  f.rd = range_doppler(f.cube, tx);
  const Eigen::MatrixXd pm = f.rd.power_map();
  const int b0 = static_cast<int>(std::lround(range / f.rd.range_bin_width));
  double best = -1.0;
  for (int b = b0 - 1; b <= b0 + 1; ++b)
    if (pm.row(b).maxCoeff() > best) best = pm.row(b).maxCoeff(), f.bin = b;
  return f;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

const ConcentrationCalibration& calibration() {
  static const ConcentrationCalibration cal = calibrate_concentration(kTx, kGeom, 10.0, 16, 7);
  return cal;
}

}  // namespace

TEST_CASE("challenge issuance") {
  ChallengePolicy pol;
  const ChirpParams a = issue_challenge(kTx, pol, 5);
  const ChirpParams b = issue_challenge(kTx, pol, 5);
  REQUIRE(a.phi_init.size() == 128);
  CHECK(a.phi_init == b.phi_init);
  CHECK(a.phi_init != issue_challenge(kTx, pol, 6).phi_init);
  CHECK(a.bandwidth == kTx.bandwidth);
  CHECK(a.slope() == kTx.slope());
  // Uniform over [0, 2 pi): all in range, KS distance to the uniform CDF small.
  std::vector<double> all;
  for (long f = 0; f < 20; ++f)
    for (double p : issue_challenge(kTx, pol, f).phi_init) {
      CHECK(p >= 0.0);
      CHECK(p < kTwoPi);
      all.push_back(p);
    }
  std::sort(all.begin(), all.end());
  double d = 0.0;
  for (std::size_t i = 0; i < all.size(); ++i)
    d = std::max(d, std::abs(all[i] / kTwoPi - (i + 0.5) / all.size()));
  CHECK(d < 1.63 / std::sqrt(static_cast<double>(all.size())));  // 1 % critical value

  ChallengePolicy none;
  none.randomize_phi = false;
  CHECK_THROWS(issue_challenge(kTx, none, 0));
  ChallengePolicy hop;
  hop.randomize_f_start = true;
  CHECK_THROWS(issue_challenge(kTx, hop, 0));
  hop.hop_set = {63.9e9};
  CHECK_THROWS(issue_challenge(kTx, hop, 0));

  // Replaying last frame's start frequency mismatches 3 times in 4.
  hop.hop_set = {60.5e9, 61.5e9, 62.5e9, 63.5e9};
  int mismatch = 0;
  const int frames = 4000;
  double prev = issue_challenge(kTx, hop, 0).f_start;
  for (long f = 1; f <= frames; ++f) {
    const double cur = issue_challenge(kTx, hop, f).f_start;
    CHECK(std::find(hop.hop_set.begin(), hop.hop_set.end(), cur) != hop.hop_set.end());
    mismatch += cur != prev;
    prev = cur;
  }
  CHECK(static_cast<double>(mismatch) / frames == doctest::Approx(0.75).epsilon(0.04));
}

TEST_CASE("genuine echo keeps its Doppler concentration under phase randomization") {
  const ChallengePolicy pol;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Scene sc = genuine(25.0, 0.0, 0.0, false);
    const Frame plain = render(sc, kTx, 25.0, s);
    const Frame chal = render(sc, issue_challenge(kTx, pol, static_cast<long>(s)), 25.0, s);
    const double c0 = doppler_concentration(plain.rd, plain.bin);
    const double c1 = doppler_concentration(chal.rd, chal.bin);
    CHECK(std::abs(linear_to_db(c1) - linear_to_db(c0)) < 1.0);
  }
}

TEST_CASE("forger with zero phases smears and is flagged") {
  const ChallengePolicy pol;
  const double thr = calibration().threshold;
  const Frame g = render(genuine(25.0, 0.0, 0.0, false), issue_challenge(kTx, pol, 1), 25.0, 1);
  const Frame f = render(forger(25.0, 0.0, {}, false), issue_challenge(kTx, pol, 1), 25.0, 1);
  const double cg = doppler_concentration(g.rd, g.bin);
  const double cf = doppler_concentration(f.rd, f.bin);
  CHECK(linear_to_db(cg) - linear_to_db(cf) >= 10.0);
  Detection d;
  d.range_bin = f.bin;
  const std::vector<Detection> dets{d};
  const auto v = verify_response(f.rd, dets, thr);
  REQUIRE(v.size() == 1);
  CHECK(v[0].verdict == Verdict::spoofed);
  CHECK(verify_response(f.rd, std::vector<Detection>{}, thr).empty());
}

TEST_CASE("challenge soundness and completeness over 100 seeds") {
  const ChallengePolicy pol;
  const double thr = calibration().threshold;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ur(8.0, 50.0), uv(-15.0, 15.0), uphi(0.0, kTwoPi);
  // A fixed forger phase sequence, independent of the challenge.
  std::vector<double> fixed(128);
  for (double& p : fixed) p = uphi(rng);
  int genuine_ok = 0, flagged = 0;
  double sum_g = 0.0, sum_f = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const ChirpParams tx = issue_challenge(kTx, pol, static_cast<long>(s));
    const double r = ur(rng), v = uv(rng);
    const Frame g = render(genuine(r, v, 10.0), tx, r, s);
    const Frame f = render(forger(r, 20.0, fixed), tx, r, s + 1000);
    const double cg = doppler_concentration(g.rd, g.bin);
    const double cf = doppler_concentration(f.rd, f.bin);
    genuine_ok += cg >= thr;
    flagged += cf < thr;
    sum_g += linear_to_db(cg);
    sum_f += linear_to_db(cf);
  }
  CHECK(genuine_ok >= 99);
  CHECK(flagged >= 99);
  CHECK(sum_f / 100 <= sum_g / 100 - 10.0);
}

TEST_CASE("calibrated threshold sits 6 dB under the clean mean") {
  const auto& cal = calibration();
  CHECK(linear_to_db(cal.threshold) == doctest::Approx(cal.clean_mean_db - 6.0));
  CHECK(cal.clean_mean_db < 0.0);
  CHECK(cal.clean_mean_db > -6.0);
}

TEST_CASE("feature extraction") {
  CVector tone(256);
  for (int k = 0; k < 256; ++k) tone[k] = std::polar(1.0, 0.3 * k);
  const FeatureVector f = extract_features(tone);
  CHECK(f.std_mag == 0.0);
  CHECK(f.kurtosis_mag == 0.0);
  CHECK(f.skewness_mag == 0.0);
  CHECK(f.std_phase < 1e-9);

  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  CVector x(200);
  for (auto& v : x) v = cplx(g(rng), g(rng));
  const FeatureVector base = extract_features(x);
  CHECK(extract_features(CVector(4.0 * x)) == base);  // power-of-two scaling is exact
  for (double alpha : {5.0, 1e-3, 7.3e4}) {
    const FeatureVector s = extract_features(CVector(alpha * x));
    CHECK((s.as_vector() - base.as_vector()).cwiseAbs().maxCoeff() < 1e-9);
  }
  CHECK(base.as_vector().allFinite());
  CHECK_THROWS(extract_features(CVector(CVector::Zero(100))));
  CHECK_THROWS(extract_features(CVector(CVector::Ones(32))));
}

TEST_CASE("impaired chirps separate from clean ones") {
  FingerprintSetup setup;
  HardwareFingerprint fp;
  fp.iq_gain_imbalance = 1.0;
  fp.phase_noise_std = 0.05;
  const auto clean = fingerprint_vectors(setup, std::nullopt, 1000, 1);
  const auto imp = fingerprint_vectors(setup, fp, 1000, 2);
  std::vector<double> a, b;
  for (const auto& v : clean) a.push_back(v.std_phase);
  for (const auto& v : imp) b.push_back(v.std_phase);
  CHECK(ks_statistic(a, b) > 0.5);
}

TEST_CASE("one-class model") {
  FingerprintSetup setup;
  const auto train = fingerprint_vectors(setup, std::nullopt, 1000, 11);
  const auto held = fingerprint_vectors(setup, std::nullopt, 1000, 12);
  const auto spoof = fingerprint_vectors(setup, HardwareFingerprint::commodity_sdr(), 1000, 13);
  const auto ideal = fingerprint_vectors(setup, HardwareFingerprint{}, 1000, 14);
  const double nu = 0.02;
  const AnomalyModel m = fit_anomaly_model(train, nu, 11);
  REQUIRE(m.fitted());
  CHECK(m.n_train == 1000);

  int in_train = 0, fa = 0, det = 0, det_ideal = 0;
  for (const auto& v : train) in_train += score(m, v).margin >= 0.0;
  for (const auto& v : held) fa += score(m, v).verdict == Verdict::spoofed;
  for (const auto& v : spoof) det += score(m, v).verdict == Verdict::spoofed;
  for (const auto& v : ideal) det_ideal += score(m, v).verdict == Verdict::spoofed;
  CHECK(in_train >= (1.0 - nu - 0.02) * 1000);
  CHECK(fa <= 50);
  CHECK(det >= 950);
  CHECK(det_ideal <= 100);  // an unimpaired forger is indistinguishable

  FeatureVector far;
  const auto z = (m.mean + 10.0 * m.scale).eval();
  far.std_mag = z[0];
  far.kurtosis_mag = z[1];
  far.skewness_mag = z[2];
  far.std_phase = z[3];
  far.kurtosis_phase = z[4];
  far.skewness_phase = z[5];
  CHECK(score(m, far).verdict == Verdict::spoofed);

  // Order of the training set does not matter.
  auto shuffled = train;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(99));
  const AnomalyModel m2 = fit_anomaly_model(shuffled, nu, 11);
  for (std::size_t i = 0; i < 200; ++i) {
    CHECK(score(m2, held[i]).verdict == score(m, held[i]).verdict);
    CHECK(score(m2, spoof[i]).verdict == score(m, spoof[i]).verdict);
  }

  std::stringstream ss;
  m.save(ss);
  const AnomalyModel back = AnomalyModel::load(ss);
  for (std::size_t i = 0; i < 50; ++i) CHECK(score(back, held[i]).margin == score(m, held[i]).margin);
  std::stringstream bad("mmspoof-ocsvm 2\n");
  CHECK_THROWS(AnomalyModel::load(bad));

  CHECK_THROWS(fit_anomaly_model(std::span(train).first(50), nu));
  CHECK_THROWS(fit_anomaly_model(train, 0.0));
  CHECK_THROWS(fit_anomaly_model(train, 1.0));
  CHECK_THROWS(score(AnomalyModel{}, held[0]));

  // Frame verdicts by majority over chirps.
  const Frame gf = render(genuine(30.0, 2.0, 25.0), kTx, 30.0, 5);
  CHECK(fingerprint_detection(m, gf.cube, gf.bin).verdict == Verdict::genuine);
  Scene fs = forger(30.0, 25.0);
  fs.em[0].node.impairment = HardwareFingerprint::commodity_sdr();
  const Frame ff = render(fs, kTx, 30.0, 6);
  const FingerprintVerdict fv = fingerprint_detection(m, ff.cube, ff.bin);
  CHECK(fv.verdict == Verdict::spoofed);
  CHECK(fv.spoofed_fraction > 0.8);
}
