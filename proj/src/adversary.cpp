#include "mmspoof/adversary.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mmspoof {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void require_psd(const Eigen::Matrix3d& p) {
  const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
  require(((p - p.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * scale), "TrackState.P must be symmetric");
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(p);
  require(es.eigenvalues().minCoeff() >= -1e-9 * scale, "TrackState.P must be positive semidefinite");
}

Eigen::Vector3d clamp_range(Eigen::Vector3d x) {
  x[0] = std::max(0.0, x[0]);
  return x;
}

}  // namespace

// ---------------------------------------------------------------- sensing

BasebandSignal victim_template(const ChirpParams& tx, double sample_rate, double fraction) {
  require(fraction > 0.0 && fraction <= 1.0, "template fraction must lie in (0, 1]");
  BasebandSignal c = make_chirp(tx, 0, sample_rate);
  const Eigen::Index m = std::max<Eigen::Index>(
      2, static_cast<Eigen::Index>(std::ceil(fraction * static_cast<double>(c.size()))));
  c.samples = c.samples.head(m).eval();
  return c;
}

std::optional<SenseResult> sense_victim(const BasebandSignal& rx_window, const BasebandSignal& templ,
                                        double threshold) {
  const Eigen::Index n = rx_window.size();
  const Eigen::Index m = templ.size();
  require(m > 0 && m <= n, "sense_victim: template must not be longer than the window");
  const double tn = templ.samples.norm();
  if (tn == 0.0) return std::nullopt;

  Eigen::Index len = 1;
  while (len < n + m) len <<= 1;
  CVector xp = CVector::Zero(len), tp = CVector::Zero(len);
  xp.head(n) = rx_window.samples;
  tp.head(m) = templ.samples;
  Eigen::FFT<double> fft;
  CVector xf, tf, corr;
  fft.fwd(xf, xp);
  fft.fwd(tf, tp);
  CVector prod = xf.cwiseProduct(tf.conjugate());
  fft.inv(corr, prod);

  // Window energies by prefix sums.
  RVector cum(n + 1);
  cum[0] = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) cum[k + 1] = cum[k] + std::norm(rx_window.samples[k]);
  const Eigen::Index lags = n - m + 1;
  auto score = [&](Eigen::Index lag) {
    const double e = cum[lag + m] - cum[lag];
    return e > 0.0 ? std::abs(corr[lag]) / (tn * std::sqrt(e)) : 0.0;
  };

  for (Eigen::Index lag = 0; lag < lags; ++lag) {
    if (score(lag) < threshold) continue;
    Eigen::Index best = lag;
    double best_v = score(lag);
    for (Eigen::Index k = lag + 1; k < std::min(lags, lag + m); ++k) {
      const double v = score(k);
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    }
    SenseResult r;
    r.lag = best;
    r.confidence = best_v;
    r.detect_time = static_cast<double>(best) / rx_window.sample_rate;
    return r;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- tracking

TrackState init_track(const TrackMeasurement& m, const TrackNoise& n, double t) {
  TrackState s;
  s.x << m.range, m.velocity, m.angle;
  s.P.setZero();
  s.P(0, 0) = n.sigma_range * n.sigma_range;
  s.P(1, 1) = n.sigma_velocity * n.sigma_velocity;
  s.P(2, 2) = n.sigma_angle * n.sigma_angle;
  s.t = t;
  return s;
}

TrackState track_victim(const TrackState& prev, const std::optional<TrackMeasurement>& meas, double dt,
                        const TrackNoise& noise) {
  require(dt > 0.0, "track_victim: dt must be > 0");
  require_psd(prev.P);

  Eigen::Matrix3d f = Eigen::Matrix3d::Identity();
  f(0, 1) = dt;
  Eigen::Matrix3d q = Eigen::Matrix3d::Zero();
  q(0, 0) = noise.accel_psd * dt * dt * dt / 3.0;
  q(0, 1) = q(1, 0) = noise.accel_psd * dt * dt / 2.0;
  q(1, 1) = noise.accel_psd * dt;
  q(2, 2) = noise.angle_psd * dt;

  TrackState s;
  s.t = prev.t + dt;
  s.x = f * prev.x;
  s.P = f * prev.P * f.transpose() + q;

  if (meas) {
    Eigen::Vector3d z(meas->range, meas->velocity, meas->angle);
    Eigen::Matrix3d r = Eigen::Matrix3d::Zero();
    r(0, 0) = noise.sigma_range * noise.sigma_range;
    r(1, 1) = noise.sigma_velocity * noise.sigma_velocity;
    r(2, 2) = noise.sigma_angle * noise.sigma_angle;
    // Angle is decoupled from range/velocity: zero the cross terms so the 3x3
    // update reduces to a 2-state filter plus a scalar one.
    s.P(0, 2) = s.P(2, 0) = s.P(1, 2) = s.P(2, 1) = 0.0;
    const Eigen::Matrix3d sm = s.P + r;
    const Eigen::Matrix3d k = s.P * sm.completeOrthogonalDecomposition().pseudoInverse();
    s.x += k * (z - s.x);
    const Eigen::Matrix3d ikh = Eigen::Matrix3d::Identity() - k;
    s.P = ikh * s.P * ikh.transpose() + k * r * k.transpose();
  }
  s.P = 0.5 * (s.P + s.P.transpose());
  s.x = clamp_range(s.x);
  return s;
}

// ---------------------------------------------------------------- scheduling

double same_frame_max_range(const AttackerNode& node, double d_spoof) {
  return d_spoof - (node.sensing_latency + node.switch_latency) * kSpeedOfLight / 2.0;
}

DelaySchedule schedule_delay(const TrackState& victim_track, const AttackerNode& node, double d_spoof,
                             double frame_period, const LagLimits& limits) {
  require(d_spoof > 0.0, "schedule_delay: d_spoof must be > 0");
  require(frame_period > 0.0, "schedule_delay: frame_period must be > 0");
  require(limits.min_lag >= 0 && limits.max_lag >= limits.min_lag, "schedule_delay: invalid lag limits");
  const double p = std::max(0.0, victim_track.x[0]);
  const double residual = 2.0 * (d_spoof - p) / kSpeedOfLight - node.sensing_latency;
  DelaySchedule s;
  for (int lag = limits.min_lag; lag <= limits.max_lag; ++lag) {
    const double hold = residual + lag * frame_period;
    // A few femtoseconds of slack absorb rounding at the same-frame boundary.
    if (hold >= node.switch_latency - 1e-15) {
      s.feasible = true;
      s.frame_lag = lag;
      s.fine_delay = std::max(hold, node.switch_latency);
      return s;
    }
  }
  return s;
}

// ---------------------------------------------------------------- strategies

void StrategyConfig::validate() const {
  require(target.d_spoof > 0.0, "StrategyConfig.target.d_spoof must be > 0");
  for (double r : extra_ranges) require(r > 0.0, "StrategyConfig.extra_ranges entries must be > 0");
  if (power_split) {
    require(power_split->first > 0.0 && power_split->second > 0.0, "StrategyConfig.power_split must be positive");
  }
  require(frame_lag >= 0 && max_lag >= frame_lag, "StrategyConfig.frame_lag must lie in [0, max_lag]");
  require(noise_cutoff > 0.0, "StrategyConfig.noise_cutoff must be > 0");
  require(std::isfinite(gaussian_margin_db) && std::isfinite(noise_to_tone_db) && std::isfinite(jam_margin_db),
          "StrategyConfig margins must be finite");
}

double correlated_noise_power(const StrategyConfig& cfg, const ChirpParams&, int) {
  // F is narrow enough to fall in the replica's range cell, so its cell power
  // relative to the replica is simply its power ratio.
  return db_to_linear(cfg.noise_to_tone_db);
}

double predict_merged_angle(double theta1, double theta2, double p1, double p2, double tone_weight,
                            const ArrayGeometry& g, const MusicConfig& mc) {
  const CVector a1 = steering_vector(g, theta1);
  const CVector a2 = steering_vector(g, theta2);
  // Node 1 splits its power between the replica and F in the ratio tone_weight : 1.
  const double f1 = p1 / (1.0 + tone_weight);
  const CVector v = std::sqrt(f1) * a1 + std::sqrt(p2) * a2;
  Eigen::MatrixXcd r = tone_weight * f1 * a1 * a1.adjoint() + v * v.adjoint();
  r += 1e-9 * (p1 + p2) * Eigen::MatrixXcd::Identity(g.n_rx, g.n_rx);
  return music_from_covariance(r, g, mc).angles.front();
}

double solve_power_ratio(double theta1, double theta2, double theta_target, double tone_weight,
                         const ArrayGeometry& g, const MusicConfig& mc) {
  MusicConfig fine = mc;
  fine.grid_step = std::min(mc.grid_step, 0.05);
  // Work in log ratio; the merged angle moves monotonically towards theta1 as log r grows.
  const double toward1 = theta1 > theta2 ? 1.0 : -1.0;
  auto f = [&](double lr) {
    return toward1 * (predict_merged_angle(theta1, theta2, std::exp(lr), 1.0, tone_weight, g, fine) - theta_target);
  };
  double lo = std::log(1.0 / 64.0), hi = std::log(64.0);
  if (f(lo) >= 0.0) return std::exp(lo);
  if (f(hi) <= 0.0) return std::exp(hi);
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

bool jamming_suppresses(double node2_rx_power, double echo_rx_power, double margin_db) {
  return node2_rx_power >= echo_rx_power * db_to_linear(margin_db);
}

bool attacker_in_range(const AttackerNode& node, const LinkBudget& lb, double margin) {
  return received_attacker_power(node, lb) * lb.fov_gain(node.position.angle) >= margin * lb.noise_floor;
}

std::vector<SpoofCommand> plan_attack(const StrategyConfig& cfg, std::span<const AttackerNode> nodes,
                                      std::span<const TrackState> tracks, long frame_id, const PlanContext& ctx) {
  cfg.validate();
  require(!nodes.empty(), "plan_attack: no attacker nodes");
  require(nodes.size() == tracks.size(), "plan_attack: one victim track per node required");
  const bool pair = cfg.kind == StrategyKind::synchronous_pair || cfg.kind == StrategyKind::asynchronous_pair;
  require(!pair || nodes.size() >= 2, "plan_attack: pair strategies need two attacker nodes");
  require(cfg.kind != StrategyKind::synchronous_pair || ctx.perfect_sync,
          "plan_attack: synchronous_pair requires perfect_sync");

  std::vector<SpoofCommand> out(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    out[i].frame_id = frame_id;
    out[i].node_index = static_cast<int>(i);
  }
  const LagLimits limits{cfg.frame_lag, cfg.max_lag};
  const double tf = ctx.tx.frame_period;
  const double ramp = -doppler_phase_increment(cfg.target.v_spoof, ctx.tx);

  auto replica = [&](std::size_t i, double d) -> std::optional<DelaySchedule> {
    const DelaySchedule s = schedule_delay(tracks[i], nodes[i], d, tf, limits);
    if (!s.feasible) return std::nullopt;
    return s;
  };

  switch (cfg.kind) {
    case StrategyKind::add_obstacle: {
      if (auto s = replica(0, cfg.target.d_spoof)) {
        Emission& e = out[0].emission;
        e.kind = EmissionKind::chirp;
        e.fine_delays = {s->fine_delay};
        e.frame_lag = s->frame_lag;
        e.phase_ramp = ramp;
      }
      break;
    }
    case StrategyKind::multi_obstacle: {
      std::vector<double> ranges{cfg.target.d_spoof};
      ranges.insert(ranges.end(), cfg.extra_ranges.begin(), cfg.extra_ranges.end());
      // Every replica rides on the same sensed chirp, so share the largest lag.
      int lag = -1;
      for (double d : ranges) {
        auto s = replica(0, d);
        if (!s) return out;
        lag = std::max(lag, s->frame_lag);
      }
      Emission& e = out[0].emission;
      e.kind = EmissionKind::spoof_train;
      e.frame_lag = lag;
      e.phase_ramp = ramp;
      const double p = std::max(0.0, tracks[0].x[0]);
      for (double d : ranges) {
        e.fine_delays.push_back(2.0 * (d - p) / kSpeedOfLight - nodes[0].sensing_latency + lag * tf);
      }
      break;
    }
    case StrategyKind::random_gaussian: {
      Emission& e = out[0].emission;
      const double p_rx = received_attacker_power(nodes[0], ctx.link) * ctx.link.fov_gain(nodes[0].position.angle);
      if (p_rx <= 0.0 || ctx.echo_power_estimate <= 0.0) break;
      e.kind = EmissionKind::gaussian_noise;
      // White noise gets none of the victim's range-compression gain, so the
      // margin is set against the compressed echo (Hann window: 2N/3).
      const double compressed = ctx.echo_power_estimate * 2.0 * ctx.n_samples / 3.0;
      e.power_scale = compressed * db_to_linear(cfg.gaussian_margin_db) / p_rx;
      break;
    }
    case StrategyKind::synchronous_pair: {
      for (std::size_t i = 0; i < 2; ++i) {
        if (auto s = replica(i, cfg.target.d_spoof)) {
          Emission& e = out[i].emission;
          e.kind = EmissionKind::chirp;
          e.fine_delays = {s->fine_delay};
          e.frame_lag = s->frame_lag;
          e.phase_ramp = ramp;
          if (cfg.power_split) e.power_scale = i == 0 ? cfg.power_split->first : cfg.power_split->second;
        }
      }
      break;
    }
    case StrategyKind::asynchronous_pair: {
      auto s1 = replica(0, cfg.target.d_spoof);
      auto s2 = replica(1, cfg.target.d_spoof);
      if (!s1 || !s2) break;
      double scale1 = 1.0, scale2 = 1.0;
      if (cfg.power_split) {
        scale1 = cfg.power_split->first;
        scale2 = cfg.power_split->second;
      } else {
        // Bearings of the nodes as the victim sees them, known from the shared geometry.
        const double th1 = nodes[0].position.angle;
        const double th2 = nodes[1].position.angle;
        const double tone_weight = 1.0 / db_to_linear(cfg.noise_to_tone_db);
        const double ratio = solve_power_ratio(th1, th2, cfg.target.theta_spoof, tone_weight, ctx.geometry);
        const double p1 = received_attacker_power(nodes[0], ctx.link) * ctx.link.fov_gain(nodes[0].position.angle);
        const double p2 = received_attacker_power(nodes[1], ctx.link) * ctx.link.fov_gain(nodes[1].position.angle);
        // Back off whichever node would have to exceed its transmit power.
        scale2 = p1 / (ratio * p2);
        if (scale2 > 1.0) {
          scale1 = 1.0 / scale2;
          scale2 = 1.0;
        }
      }
      const double np = correlated_noise_power(cfg, ctx.tx, ctx.n_samples);
      Emission& e1 = out[0].emission;
      e1.kind = EmissionKind::chirp_plus_noise;
      e1.fine_delays = {s1->fine_delay};
      e1.frame_lag = s1->frame_lag;
      e1.phase_ramp = ramp;
      e1.power_scale = scale1;
      e1.noise_power = np;
      e1.noise_cutoff = cfg.noise_cutoff;
      e1.noise_seed = cfg.noise_seed;
      Emission& e2 = out[1].emission;
      e2 = e1;
      e2.kind = EmissionKind::noise_only;
      e2.fine_delays = {s2->fine_delay};
      e2.frame_lag = s2->frame_lag;
      e2.power_scale = scale2;
      break;
    }
  }
  return out;
}

}  // namespace mmspoof
