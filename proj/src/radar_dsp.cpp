#include "mmspoof/radar_dsp.hpp"

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

RVector hann(int n) {
  RVector w(n);
  for (int k = 0; k < n; ++k) w[k] = 0.5 - 0.5 * std::cos(kTwoPi * k / n);
  return w;
}

int wrap(int i, int n) { return ((i % n) + n) % n; }

// Offset of the true peak from the centre sample, from log-power samples.
double parabolic_offset(double lm, double l0, double lp) {
  const double den = lm - 2.0 * l0 + lp;
  if (!(den < 0.0)) return 0.0;
  return std::clamp(0.5 * (lm - lp) / den, -0.5, 0.5);
}

double safe_log(double x) { return std::log(std::max(x, 1e-300)); }

}  // namespace

CVector dechirp(const BasebandSignal& rx, const BasebandSignal& tx_template, double cutoff, int n_out) {
  require(n_out > 0, "dechirp: n_out must be > 0");
  require(rx.size() == tx_template.size(), "dechirp: rx and template lengths differ");
  const double fs = rx.sample_rate;
  require(cutoff > 0.0 && cutoff <= fs / 2.0, "dechirp: cutoff above Nyquist");
  const Eigen::Index n = rx.size();
  require(n % n_out == 0, "dechirp: raw length must be a multiple of n_out");
  const Eigen::Index dec = n / n_out;

  CVector mixed = tx_template.samples.array() * rx.samples.conjugate().array();
  CVector out(n_out);
  if (cutoff >= fs / 2.0 * (1.0 - 1e-12) || dec == 1) {
    for (int k = 0; k < n_out; ++k) out[k] = mixed[k * dec];
    return out;
  }
  const int taps_n = std::max<int>(129, static_cast<int>(8 * dec + 1)) | 1;
  const RVector h = lowpass_taps(cutoff / fs, taps_n);
  const Eigen::Index mid = h.size() / 2;
  // Evaluate the linear-phase filter only at the retained samples.
  for (int k = 0; k < n_out; ++k) {
    const Eigen::Index c = k * dec;
    cplx acc(0.0, 0.0);
    for (Eigen::Index j = 0; j < h.size(); ++j) {
      const Eigen::Index idx = c + mid - j;
      if (idx < 0 || idx >= n) continue;
      acc += h[j] * mixed[idx];
    }
    out[k] = acc;
  }
  return out;
}

IQCube mix_and_filter(const std::vector<std::vector<BasebandSignal>>& rx, const ChirpParams& tx,
                      double cutoff, int n_out) {
  require(!rx.empty() && !rx.front().empty(), "mix_and_filter: empty input");
  const int n_rx = static_cast<int>(rx.size());
  const int n_chirps = static_cast<int>(rx.front().size());
  require(n_chirps <= tx.n_chirps, "mix_and_filter: more chirps than the waveform defines");
  const double fs = rx.front().front().sample_rate;
  IQCube cube(n_rx, n_chirps, n_out, n_out / tx.t_chirp);
  for (int c = 0; c < n_chirps; ++c) {
    const BasebandSignal tmpl = make_chirp(tx, c, fs);
    for (int a = 0; a < n_rx; ++a) {
      require(static_cast<int>(rx[static_cast<std::size_t>(a)].size()) == n_chirps,
              "mix_and_filter: ragged antenna input");
      cube.data[static_cast<std::size_t>(a)].row(c) =
          dechirp(rx[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)], tmpl, cutoff, n_out).transpose();
    }
  }
  return cube;
}

double range_bin_width(const ChirpParams& tx) { return kSpeedOfLight / (2.0 * tx.bandwidth); }

double velocity_bin_width(const ChirpParams& tx) {
  return tx.wavelength() / (2.0 * tx.n_chirps * tx.t_rep());
}

double max_unambiguous_velocity(const ChirpParams& tx) { return tx.wavelength() / (4.0 * tx.t_rep()); }

RangeDopplerCube range_doppler(const IQCube& cube, const ChirpParams& tx) {
  const int n_rx = cube.n_rx();
  const int n_chirps = cube.n_chirps();
  const int n = cube.n_samples();
  require(n > 0 && (n & (n - 1)) == 0, "range_doppler: n_samples must be a power of two");
  const int n_range = n / 2;

  const RVector w_r = hann(n);
  const RVector w_d = hann(n_chirps);
  const double g_r = 1.0 / std::sqrt(w_r.squaredNorm());
  const double g_d = 1.0 / std::sqrt(w_d.squaredNorm());

  RangeDopplerCube rd;
  rd.range_bin_width = range_bin_width(tx);
  rd.velocity_bin_width = velocity_bin_width(tx);
  rd.frame_id = cube.frame_id;
  rd.timestamp = cube.timestamp;
  rd.cells.assign(static_cast<std::size_t>(n_rx), Eigen::MatrixXcd(n_range, n_chirps));
  rd.range_profiles.assign(static_cast<std::size_t>(n_rx), CMatrixRM(n_chirps, n_range));

  Eigen::FFT<double> fft;
  CVector in(n), out(n), din(n_chirps), dout(n_chirps);
  for (int a = 0; a < n_rx; ++a) {
    const CMatrixRM& x = cube.data[static_cast<std::size_t>(a)];
    CMatrixRM& prof = rd.range_profiles[static_cast<std::size_t>(a)];
    for (int c = 0; c < n_chirps; ++c) {
      in = x.row(c).transpose().cwiseProduct(w_r.cast<cplx>());
      fft.fwd(out, in);
      prof.row(c) = (g_r * out.head(n_range)).transpose();
    }
    Eigen::MatrixXcd& cells = rd.cells[static_cast<std::size_t>(a)];
    const int half = n_chirps / 2;
    for (int r = 0; r < n_range; ++r) {
      din = prof.col(r).cwiseProduct(w_d.cast<cplx>());
      fft.fwd(dout, din);
      for (int v = 0; v < n_chirps; ++v) cells(r, wrap(v + half, n_chirps)) = g_d * dout[v];
    }
  }
  return rd;
}

std::vector<BinIndex> cfar_on_map(const Eigen::MatrixXd& p, const CfarConfig& cfg) {
  require(cfg.training > 0 && cfg.guard >= 0, "CfarConfig: training must be > 0 and guard >= 0");
  const int nr = static_cast<int>(p.rows());
  const int nv = static_cast<int>(p.cols());
  struct Hit {
    BinIndex bin;
    double power;
  };
  std::vector<Hit> hits;
  for (int r = std::max(0, cfg.min_range_bin); r < nr; ++r) {
    for (int v = 0; v < nv; ++v) {
      const double cut = p(r, v);
      bool is_max = true;
      for (int dr = -1; dr <= 1 && is_max; ++dr) {
        const int rr = r + dr;
        if (rr < 0 || rr >= nr) continue;
        for (int dv = -1; dv <= 1; ++dv) {
          if (dr == 0 && dv == 0) continue;
          if (p(rr, wrap(v + dv, nv)) > cut) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max) continue;

      double sum = 0.0;
      int count = 0;
      for (int k = cfg.guard + 1; k <= cfg.guard + cfg.training; ++k) {
        if (r - k >= 0) sum += p(r - k, v), ++count;
        if (r + k < nr) sum += p(r + k, v), ++count;
        sum += p(r, wrap(v - k, nv)) + p(r, wrap(v + k, nv));
        count += 2;
      }
      const double noise = sum / count;
      if (cut > cfg.threshold_factor * noise) hits.push_back({{r, v}, cut});
    }
  }
  std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.power > b.power; });
  std::vector<BinIndex> out;
  for (const Hit& h : hits) {
    if (static_cast<int>(out.size()) >= cfg.max_detections) break;
    out.push_back(h.bin);
  }
  return out;
}

std::vector<BinIndex> detect(const RangeDopplerCube& rd, const CfarConfig& cfg) {
  if (rd.cells.empty()) return {};
  return cfar_on_map(rd.power_map(), cfg);
}

Eigen::MatrixXcd snapshot_covariance(const RangeDopplerCube& rd, int range_bin, bool forward_backward) {
  const int n_rx = rd.n_rx();
  require(n_rx > 0, "snapshot_covariance: empty cube");
  const int m = static_cast<int>(rd.range_profiles.front().rows());
  Eigen::MatrixXcd x(n_rx, m);
  for (int a = 0; a < n_rx; ++a) x.row(a) = rd.range_profiles[static_cast<std::size_t>(a)].col(range_bin).transpose();
  Eigen::MatrixXcd r = x * x.adjoint() / static_cast<double>(m);
  if (forward_backward) {
    const Eigen::MatrixXcd j = Eigen::MatrixXcd::Identity(n_rx, n_rx).rowwise().reverse();
    r = 0.5 * (r + j * r.conjugate() * j);
  }
  return r;
}

double beamforming_peak(const Eigen::MatrixXcd& r, const ArrayGeometry& g, double grid_step,
                        double angle_limit) {
  double best = -1.0;
  double best_angle = 0.0;
  const int steps = static_cast<int>(std::llround(2.0 * angle_limit / grid_step));
  for (int i = 0; i <= steps; ++i) {
    const double th = -angle_limit + i * grid_step;
    const CVector a = steering_vector(g, th);
    const double v = (a.adjoint() * r * a)(0, 0).real();
    if (v > best) {
      best = v;
      best_angle = th;
    }
  }
  return best_angle;
}

Eigen::MatrixX2d music_spectrum(const Eigen::MatrixXcd& r, const ArrayGeometry& g, const MusicConfig& cfg) {
  const int n_rx = static_cast<int>(r.rows());
  require(cfg.k_sources >= 1 && cfg.k_sources < n_rx, "MUSIC requires 1 <= k_sources < n_rx");
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(r);
  const Eigen::MatrixXcd en = es.eigenvectors().leftCols(n_rx - cfg.k_sources);
  const int steps = static_cast<int>(std::llround(2.0 * cfg.angle_limit / cfg.grid_step));
  Eigen::MatrixX2d spec(steps + 1, 2);
  for (int i = 0; i <= steps; ++i) {
    const double th = -cfg.angle_limit + i * cfg.grid_step;
    const CVector a = steering_vector(g, th);
    const double d = (en.adjoint() * a).squaredNorm();
    spec(i, 0) = th;
    spec(i, 1) = 1.0 / std::max(d, 1e-300);
  }
  return spec;
}

MusicResult music_from_covariance(const Eigen::MatrixXcd& r, const ArrayGeometry& g, const MusicConfig& cfg) {
  g.validate();
  require(r.rows() == g.n_rx && r.cols() == g.n_rx, "MUSIC covariance size must match the array");
  require(cfg.grid_step > 0.0, "MusicConfig.grid_step must be > 0");
  MusicResult res;
  const double tr = r.trace().real();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(r);
  const RVector ev = es.eigenvalues();
  const int n = g.n_rx;
  const bool finite = std::isfinite(tr) && ev.allFinite();
  const bool separated = finite && ev[n - cfg.k_sources] > ev[n - cfg.k_sources - 1] * (1.0 + 1e-9) &&
                         ev[n - cfg.k_sources] > 0.0;
  if (!finite || !(tr > 0.0) || !separated) {
    res.degraded = true;
    res.angles.push_back(finite ? beamforming_peak(r, g, cfg.grid_step, cfg.angle_limit) : 0.0);
    return res;
  }

  const Eigen::MatrixX2d spec = music_spectrum(r, g, cfg);
  const Eigen::Index m = spec.rows();
  std::vector<std::pair<double, double>> peaks;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double v = spec(i, 1);
    const bool left = i == 0 || v > spec(i - 1, 1);
    const bool right = i == m - 1 || v >= spec(i + 1, 1);
    if (left && right) peaks.emplace_back(v, spec(i, 0));
  }
  std::sort(peaks.begin(), peaks.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (int k = 0; k < cfg.k_sources && k < static_cast<int>(peaks.size()); ++k) res.angles.push_back(peaks[k].second);
  if (res.angles.empty()) {
    Eigen::Index best;
    spec.col(1).maxCoeff(&best);
    res.angles.push_back(spec(best, 0));
  }
  return res;
}

MusicResult music_angle(const RangeDopplerCube& rd, const BinIndex& bin, const ArrayGeometry& g,
                        const MusicConfig& cfg) {
  require(bin.range_bin >= 0 && bin.range_bin < rd.n_range(), "music_angle: range bin out of range");
  return music_from_covariance(snapshot_covariance(rd, bin.range_bin, cfg.forward_backward), g, cfg);
}

PointCloud point_cloud(const std::vector<BinIndex>& bins, const std::vector<MusicResult>& angles,
                       const RangeDopplerCube& rd) {
  PointCloud pc;
  pc.frame_id = rd.frame_id;
  pc.timestamp = rd.timestamp;
  if (bins.empty()) return pc;
  require(angles.size() == bins.size(), "point_cloud: one angle result per detection required");
  const Eigen::MatrixXd p = rd.power_map();
  const int nr = static_cast<int>(p.rows());
  const int nv = static_cast<int>(p.cols());
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const BinIndex& b = bins[i];
    Detection d;
    d.range_bin = b.range_bin;
    d.velocity_bin = b.velocity_bin;
    const double l0 = safe_log(p(b.range_bin, b.velocity_bin));
    double dr = 0.0;
    if (b.range_bin > 0 && b.range_bin < nr - 1) {
      dr = parabolic_offset(safe_log(p(b.range_bin - 1, b.velocity_bin)), l0,
                            safe_log(p(b.range_bin + 1, b.velocity_bin)));
    }
    const double dv = parabolic_offset(safe_log(p(b.range_bin, wrap(b.velocity_bin - 1, nv))), l0,
                                       safe_log(p(b.range_bin, wrap(b.velocity_bin + 1, nv))));
    d.range = (b.range_bin + dr) * rd.range_bin_width;
    d.velocity = (b.velocity_bin - nv / 2 + dv) * rd.velocity_bin_width;
    d.power = linear_to_db(std::max(p(b.range_bin, b.velocity_bin), 1e-300));
    if (!angles[i].angles.empty()) d.angle = angles[i].angles.front();
    d.angle_degraded = angles[i].degraded;
    pc.detections.push_back(d);
  }
  std::stable_sort(pc.detections.begin(), pc.detections.end(),
                   [](const Detection& a, const Detection& b) { return a.power > b.power; });
  return pc;
}

FrameResult process_frame(const IQCube& cube, const RadarConfig& cfg) {
  FrameResult fr;
  fr.rd = range_doppler(cube, cfg.tx);
  fr.bins = detect(fr.rd, cfg.cfar);
  std::vector<MusicResult> angles;
  angles.reserve(fr.bins.size());
  for (const BinIndex& b : fr.bins) angles.push_back(music_angle(fr.rd, b, cfg.geometry, cfg.music));
  fr.cloud = point_cloud(fr.bins, angles, fr.rd);
  return fr;
}

}  // namespace mmspoof
