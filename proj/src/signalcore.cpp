#include "mmspoof/signalcore.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace mmspoof {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

Eigen::Index sample_count(double duration, double sample_rate) {
  return static_cast<Eigen::Index>(std::llround(duration * sample_rate));
}

}  // namespace

void ChirpParams::validate() const {
  require(std::isfinite(bandwidth) && bandwidth > 0.0, "ChirpParams.bandwidth must be > 0");
  require(std::isfinite(t_chirp) && t_chirp > 0.0, "ChirpParams.t_chirp must be > 0");
  require(std::isfinite(slope()) && slope() > 0.0, "ChirpParams slope must be finite and positive");
  require(inter_chirp >= 0.0, "ChirpParams.inter_chirp must be >= 0");
  require(n_chirps >= 1, "ChirpParams.n_chirps must be >= 1");
  // Allow one part in 1e9 of rounding on the frame budget.
  require(frame_period >= n_chirps * t_rep() * (1.0 - 1e-9),
          "ChirpParams.frame_period must cover n_chirps * (t_chirp + inter_chirp)");
  require(f_start > 0.0, "ChirpParams.f_start must be > 0");
  if (!phi_init.empty()) {
    require(phi_init.size() == static_cast<std::size_t>(n_chirps),
            "ChirpParams.phi_init must have n_chirps entries");
    for (double p : phi_init) {
      require(p >= 0.0 && p < kTwoPi, "ChirpParams.phi_init entries must lie in [0, 2pi)");
    }
  }
}

ChirpParams ChirpParams::long_range() {
  ChirpParams p;
  p.phi_init.assign(static_cast<std::size_t>(p.n_chirps), 0.0);
  return p;
}

double BasebandSignal::rms_power() const {
  if (samples.size() == 0) return 0.0;
  return samples.squaredNorm() / static_cast<double>(samples.size());
}

void NoiseSpec::validate() const {
  require(std::isfinite(power) && power >= 0.0, "NoiseSpec.power must be >= 0");
  if (kind == NoiseKind::filtered_gaussian) {
    require(cutoff > 0.0, "NoiseSpec.cutoff must be > 0 for filtered noise");
  }
}

BasebandSignal make_chirp(const ChirpParams& params, int chirp_index, double sample_rate) {
  require(sample_rate > 0.0, "sample_rate must be > 0");
  require(chirp_index >= 0 && chirp_index < params.n_chirps, "chirp_index out of range");
  const Eigen::Index n = sample_count(params.t_chirp, sample_rate);
  const double slope = params.slope();
  const double phi = params.phase_of(chirp_index);
  BasebandSignal out;
  out.sample_rate = sample_rate;
  out.samples.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / sample_rate;
    out.samples[k] = std::polar(1.0, kPi * slope * t * t + phi);
  }
  return out;
}

BasebandSignal make_spoof_train(const ChirpParams& params, std::span<const double> delays,
                                double sample_rate, int chirp_index) {
  require(!delays.empty(), "make_spoof_train: delay list is empty");
  require(sample_rate > 0.0, "sample_rate must be > 0");
  require(chirp_index >= 0 && chirp_index < params.n_chirps, "chirp_index out of range");
  for (double d : delays) {
    require(d >= 0.0 && d < params.t_chirp, "make_spoof_train: delay must lie in [0, t_chirp)");
  }
  const Eigen::Index n = sample_count(params.t_chirp, sample_rate);
  const double slope = params.slope();
  const double phi = params.phase_of(chirp_index);
  const double amp = 1.0 / std::sqrt(static_cast<double>(delays.size()));
  BasebandSignal out;
  out.sample_rate = sample_rate;
  out.samples = CVector::Zero(n);
  for (double tau : delays) {
    const double carrier = -kTwoPi * params.f_start * tau;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) / sample_rate - tau;
      if (t < 0.0) continue;
      out.samples[k] += std::polar(amp, kPi * slope * t * t + phi + carrier);
    }
  }
  return out;
}

void add_complex_gaussian(CVector& out, double power, std::uint64_t seed) {
  if (power <= 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, std::sqrt(power / 2.0));
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    const double re = g(rng);
    const double im = g(rng);
    out[k] += cplx(re, im);
  }
}

BasebandSignal make_noise(const NoiseSpec& spec, double duration, double sample_rate) {
  spec.validate();
  require(duration > 0.0, "make_noise: duration must be > 0");
  require(sample_rate > 0.0, "sample_rate must be > 0");
  if (spec.kind == NoiseKind::filtered_gaussian) {
    require(spec.cutoff < sample_rate / 2.0, "NoiseSpec.cutoff must be below Nyquist");
  }
  const Eigen::Index n = std::max<Eigen::Index>(1, sample_count(duration, sample_rate));
  BasebandSignal out;
  out.sample_rate = sample_rate;
  out.samples = CVector::Zero(n);
  if (spec.power == 0.0) return out;

  if (spec.kind == NoiseKind::white_gaussian) {
    add_complex_gaussian(out.samples, spec.power, spec.seed);
    return out;
  }
  CVector white = CVector::Zero(n);
  add_complex_gaussian(white, 1.0, spec.seed);
  out.samples = fir_filter(white, lowpass_taps(spec.cutoff / sample_rate));
  const double p = out.rms_power();
  if (p > 0.0) out.samples *= std::sqrt(spec.power / p);
  return out;
}

double doppler_phase_increment(double v, const ChirpParams& params) {
  return 4.0 * kPi * v * params.t_rep() / params.wavelength();
}

BasebandSignal apply_doppler_phase(const BasebandSignal& signal, int chirp_index,
                                   double v_spoof, const ChirpParams& params) {
  BasebandSignal out = signal;
  if (v_spoof == 0.0) return out;
  const double phase = -doppler_phase_increment(v_spoof, params) * chirp_index;
  out.samples *= std::polar(1.0, phase);
  return out;
}

RVector lowpass_taps(double normalized_cutoff, int n_taps) {
  require(normalized_cutoff > 0.0 && normalized_cutoff < 0.5, "lowpass cutoff must be in (0, 0.5)");
  require(n_taps >= 3 && n_taps % 2 == 1, "lowpass tap count must be odd and >= 3");
  RVector h(n_taps);
  const int mid = n_taps / 2;
  for (int k = 0; k < n_taps; ++k) {
    const double m = k - mid;
    const double sinc = m == 0 ? 2.0 * normalized_cutoff
                               : std::sin(kTwoPi * normalized_cutoff * m) / (kPi * m);
    const double w = 0.54 - 0.46 * std::cos(kTwoPi * k / (n_taps - 1));
    h[k] = sinc * w;
  }
  return h / h.sum();
}

CVector fir_filter(const CVector& x, const RVector& taps) {
  const Eigen::Index n = x.size();
  const Eigen::Index m = taps.size();
  const Eigen::Index mid = m / 2;
  CVector y = CVector::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    cplx acc(0.0, 0.0);
    const Eigen::Index lo = std::max<Eigen::Index>(0, k + mid - (n - 1));
    const Eigen::Index hi = std::min<Eigen::Index>(m - 1, k + mid);
    for (Eigen::Index j = lo; j <= hi; ++j) acc += taps[j] * x[k + mid - j];
    y[k] = acc;
  }
  return y;
}

XcorrPeak normalized_xcorr_peak(const CVector& x, const CVector& y) {
  const double nx = x.norm();
  const double ny = y.norm();
  XcorrPeak best;
  if (nx == 0.0 || ny == 0.0) return best;
  const Eigen::Index n = x.size();
  const Eigen::Index m = y.size();
  Eigen::Index len = 1;
  while (len < n + m - 1) len <<= 1;
  // c[lag] = sum_j x[j + lag] conj(y[j]), computed as ifft(X * conj(Y)).
  CVector xp = CVector::Zero(len), yp = CVector::Zero(len);
  xp.head(n) = x;
  yp.head(m) = y;
  Eigen::FFT<double> fft;
  CVector xf, yf, c;
  fft.fwd(xf, xp);
  fft.fwd(yf, yp);
  CVector prod = xf.cwiseProduct(yf.conjugate());
  fft.inv(c, prod);
  for (Eigen::Index lag = -(m - 1); lag < n; ++lag) {
    const Eigen::Index idx = lag >= 0 ? lag : len + lag;
    const double v = std::abs(c[idx]) / (nx * ny);
    if (v > best.value) {
      best.value = v;
      best.lag = lag;
    }
  }
  return best;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace mmspoof
