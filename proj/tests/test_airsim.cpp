#include "doctest.h"
#include "mmspoof/airsim.hpp"
#include "mmspoof/radar_dsp.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace mmspoof;

namespace {

LinkBudget quiet_budget() {
  LinkBudget lb = LinkBudget::calibrated();
  lb.noise_floor = 0.0;
  return lb;
}

ScheduledEmitter chirp_attacker(double range, double angle, double d_spoof) {
  ScheduledEmitter s;
  s.node.position = {range, angle};
  s.emission.kind = EmissionKind::chirp;
  s.emission.frame_lag = 1;
  const ChirpParams p = ChirpParams::long_range();
  s.emission.fine_delays = {2.0 * d_spoof / kSpeedOfLight - 2.0 * range / kSpeedOfLight -
                            s.node.sensing_latency + p.frame_period};
  return s;
}

Reflector car(double range, double angle = 0.0, double v = 0.0) {
  Reflector r;
  r.range = range;
  r.angle = angle;
  r.radial_velocity = v;
  r.reflectivity = reflectivity_from_rcs(10.0, kSpeedOfLight / 62.61e9);
  return r;
}

double wrapped(double x) { return std::remainder(x, kTwoPi); }

}  // namespace

TEST_CASE("loss model") {
  const LinkBudget lb = LinkBudget::calibrated();
  CHECK(lb.one_way_loss(30.0) * lb.one_way_loss(30.0) == doctest::Approx(lb.two_way_loss(30.0)));
  CHECK(lb.one_way_loss(10.0) < lb.one_way_loss(11.0));
  CHECK(lb.two_way_loss(10.0) < lb.two_way_loss(11.0));

  AttackerNode n;
  n.position.range = 10.0;
  const double p10 = received_attacker_power(n, lb);
  n.position.range = 20.0;
  CHECK(received_attacker_power(n, lb) == doctest::Approx(p10 / 4.0));

  // Reference hardware sits exactly on the in-range boundary at 26 m.
  n.tx_power = 0.01;
  n.antenna_gain = 23.0;
  n.position.range = 26.0;
  CHECK(received_attacker_power(n, lb) == doctest::Approx(10.0 * lb.noise_floor));
  n.position.range = 25.0;
  CHECK(received_attacker_power(n, lb) > 10.0 * lb.noise_floor);
  n.position.range = 27.0;
  CHECK(received_attacker_power(n, lb) < 10.0 * lb.noise_floor);

  CHECK(lb.fov_gain(9.9) == 1.0);
  CHECK(lb.fov_gain(-10.5) == doctest::Approx(1e-3));
}

TEST_CASE("boresight reflector is identical on all antennas") {
  const ChirpParams p = ChirpParams::long_range();
  const std::vector<Reflector> refl{car(30.0)};
  const IQCube cube = propagate_frame(p, refl, {}, ArrayGeometry{}, quiet_budget(), 1);
  for (int a = 1; a < cube.n_rx(); ++a) CHECK((cube.data[a] - cube.data[0]).cwiseAbs().maxCoeff() < 1e-18);
}

TEST_CASE("steering consistency") {
  const ChirpParams p = ChirpParams::long_range();
  for (double th : {-35.0, -7.0, 4.0, 20.0}) {
    const std::vector<Reflector> refl{car(25.0, th)};
    const IQCube cube = propagate_frame(p, refl, {}, ArrayGeometry{}, quiet_budget(), 1);
    const double expect = kTwoPi * 0.5 * std::sin(th * kPi / 180.0);
    for (int a = 1; a < cube.n_rx(); ++a) {
      const double d = std::arg(cube.data[a](3, 100) / cube.data[a - 1](3, 100));
      CHECK(std::abs(wrapped(d - expect)) < 1e-6);
    }
  }
}

TEST_CASE("propagation is linear in the emitter set") {
  const ChirpParams p = ChirpParams::long_range();
  const std::vector<Reflector> r1{car(18.0, 3.0, 2.0)}, r2{car(33.0, -5.0)};
  const std::vector<ScheduledEmitter> a1{chirp_attacker(20.0, 4.0, 12.0)};
  const std::vector<Reflector> r12{r1[0], r2[0]};
  const LinkBudget lb = quiet_budget();
  const IQCube x = propagate_frame(p, r1, a1, ArrayGeometry{}, lb, 3);
  const IQCube y = propagate_frame(p, r2, {}, ArrayGeometry{}, lb, 3);
  const IQCube xy = propagate_frame(p, r12, a1, ArrayGeometry{}, lb, 3);
  for (int a = 0; a < 4; ++a) {
    const double scale = xy.data[a].cwiseAbs().maxCoeff();
    CHECK((xy.data[a] - x.data[a] - y.data[a]).cwiseAbs().maxCoeff() < 1e-9 * scale);
  }
}

TEST_CASE("attacker CFO shifts the beat tone by exactly the offset") {
  const ChirpParams p = ChirpParams::long_range();
  const LinkBudget lb = quiet_budget();
  std::vector<ScheduledEmitter> a{chirp_attacker(15.0, 0.0, 30.0)};
  const IQCube ref = propagate_frame(p, {}, a, ArrayGeometry{}, lb, 1);
  const double df = 250e3;
  a[0].node.cfo = df;
  const IQCube shifted = propagate_frame(p, {}, a, ArrayGeometry{}, lb, 1);
  const double fs = ref.sample_rate;
  const double w0 = std::arg(ref.data[0](0, 101) / ref.data[0](0, 100));
  const double w1 = std::arg(shifted.data[0](0, 101) / shifted.data[0](0, 100));
  CHECK(std::abs(wrapped(w0 - w1) - kTwoPi * df / fs) < 1e-9);
  // In range units the shift is df / slope * c / 2.
  CHECK(df / p.slope() * kSpeedOfLight / 2.0 == doctest::Approx(3.747).epsilon(1e-3));
}

TEST_CASE("impairments") {
  BasebandSignal s;
  s.sample_rate = 1e6;
  s.samples = CVector::Zero(64);
  for (int k = 0; k < 64; ++k) s.samples[k] = std::polar(1.0, 0.3 * k);

  SUBCASE("ideal hardware is the identity") {
    CHECK(apply_impairment(s, HardwareFingerprint{}, 3).samples == s.samples);
  }
  SUBCASE("dc offset on zero input") {
    HardwareFingerprint fp;
    fp.dc_offset = {0.1, 0.0};
    BasebandSignal z = s;
    z.samples.setZero();
    const BasebandSignal out = apply_impairment(z, fp, 3);
    CHECK((out.samples.array() - cplx(0.1, 0.0)).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("phase-noise step statistics") {
    HardwareFingerprint fp;
    fp.phase_noise_std = 0.05;
    BasebandSignal big;
    big.sample_rate = 1e6;
    big.samples = CVector::Constant(20000, cplx(1.0, 0.0));
    const BasebandSignal out = apply_impairment(big, fp, 17);
    Eigen::VectorXd steps(big.size() - 1);
    for (Eigen::Index k = 1; k < big.size(); ++k) steps[k - 1] = std::arg(out.samples[k] / out.samples[k - 1]);
    const double mean = steps.mean();
    const double sd = std::sqrt((steps.array() - mean).square().mean());
    CHECK(sd == doctest::Approx(0.05).epsilon(0.1));
  }
  SUBCASE("deterministic per seed") {
    HardwareFingerprint fp;
    fp.phase_noise_std = 0.01;
    fp.iq_gain_imbalance = 1.0;
    fp.nonlinearity_coeff = 0.02;
    CHECK(apply_impairment(s, fp, 9).samples == apply_impairment(s, fp, 9).samples);
    CHECK(apply_impairment(s, fp, 9).samples != apply_impairment(s, fp, 10).samples);
  }
}

TEST_CASE("full-waveform path matches the beat-domain path") {
  ChirpParams p = ChirpParams::long_range();
  p.n_chirps = 4;
  p.phi_init = {0.0, 1.0, 2.5, 4.0};
  p.frame_period = 4 * p.t_rep();
  const LinkBudget lb = quiet_budget();
  const ArrayGeometry g;
  const std::vector<Reflector> refl{car(30.0, 5.0, 3.0), car(12.0, -3.0)};
  const IQCube fast = propagate_frame(p, refl, {}, g, lb, 1);

  const int dec = 8;
  const double fs_raw = fast.sample_rate * dec;
  std::vector<std::vector<BasebandSignal>> rx(4);
  for (int a = 0; a < 4; ++a) {
    for (int c = 0; c < p.n_chirps; ++c) rx[a].push_back(propagate_chirp_raw(p, c, refl, {}, g, a, lb, fs_raw, 1));
  }
  const IQCube slow = mix_and_filter(rx, p, fast.sample_rate / 2.0, 256);
  for (int a = 0; a < 4; ++a) {
    const CMatrixRM d = slow.data[a].middleCols(20, 216) - fast.data[a].middleCols(20, 216);
    CHECK(d.cwiseAbs().maxCoeff() < 0.02 * fast.data[a].cwiseAbs().maxCoeff());
  }
}

TEST_CASE("white noise power is cut by the mixer low-pass") {
  const double fs = 64e6, cutoff = 4e6;
  BasebandSignal rx, tmpl;
  rx.sample_rate = tmpl.sample_rate = fs;
  rx.samples = CVector::Zero(256 * 16);
  add_complex_gaussian(rx.samples, 1.0, 8);
  tmpl.samples = CVector::Constant(rx.size(), cplx(1.0, 0.0));
  double p = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    rx.samples.setZero();
    add_complex_gaussian(rx.samples, 1.0, 100 + rep);
    p += dechirp(rx, tmpl, cutoff, 256).squaredNorm() / 256.0;
  }
  p /= 20.0;
  CHECK(linear_to_db(1.0 / p) >= 10.0 * std::log10(fs / (2.0 * cutoff)));
}

TEST_CASE("dechirp rejects a cutoff above Nyquist") {
  BasebandSignal rx;
  rx.sample_rate = 1e6;
  rx.samples = CVector::Zero(256);
  CHECK_THROWS_AS(dechirp(rx, rx, 6e5, 256), std::invalid_argument);
}

TEST_CASE("end to end: single reflector ranges to 30 m") {
  RadarConfig rc;
  const std::vector<Reflector> refl{car(30.0)};
  const IQCube cube = propagate_frame(rc.tx, refl, {}, rc.geometry, LinkBudget::calibrated(), 4);
  const FrameResult fr = process_frame(cube, rc);
  REQUIRE(fr.cloud.detections.size() == 1);
  CHECK(std::abs(fr.cloud.detections[0].range - 30.0) <= range_bin_width(rc.tx) / 2.0);
  CHECK(std::abs(fr.cloud.detections[0].velocity) <= velocity_bin_width(rc.tx) / 2.0);
}

TEST_CASE("scheduled attacker at 20 m spoofs an obstacle at 13 m") {
  RadarConfig rc;
  const std::vector<ScheduledEmitter> a{chirp_attacker(20.0, 0.0, 13.0)};
  const IQCube cube = propagate_frame(rc.tx, {}, a, rc.geometry, LinkBudget::calibrated(), 5);
  const FrameResult fr = process_frame(cube, rc);
  REQUIRE(fr.cloud.detections.size() == 1);
  CHECK(std::abs(fr.cloud.detections[0].range - 13.0) <= 0.25);
}

TEST_CASE("field-of-view penalty defeats an off-axis attacker") {
  RadarConfig rc;
  const LinkBudget lb = LinkBudget::calibrated();
  std::vector<ScheduledEmitter> a{chirp_attacker(20.0, 8.0, 13.0)};
  CHECK(process_frame(propagate_frame(rc.tx, {}, a, rc.geometry, lb, 6), rc).cloud.detections.size() == 1);
  // Reference hardware sits 10 dB above the noise floor at 26 m; -30 dB drops it below.
  a = {chirp_attacker(26.0, 15.0, 13.0)};
  a[0].node.antenna_gain = 23.0;
  const double p_sample = received_attacker_power(a[0].node, lb) * lb.fov_gain(15.0) / lb.noise_floor;
  CHECK(p_sample < 0.011);
}
