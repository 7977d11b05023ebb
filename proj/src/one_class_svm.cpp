#include "mmspoof/defense.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace mmspoof {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

// ---------------------------------------------------------------- one-class SVM

namespace {

constexpr int kD = FeatureVector::kSize;
using FVec = Eigen::Matrix<double, kD, 1>;

double rbf(const FVec& a, const FVec& b, double gamma) { return std::exp(-gamma * (a - b).squaredNorm()); }

}  // namespace

AnomalyModel fit_anomaly_model(std::span<const FeatureVector> training, double nu, std::uint64_t seed,
                               OneClassSvmParams params) {
  require(training.size() >= 100, "fit_anomaly_model: at least 100 training vectors required");
  require(nu > 0.0 && nu < 1.0, "fit_anomaly_model: nu must be in (0, 1)");
  const int l = static_cast<int>(training.size());

  // Canonical order so the solution does not depend on the input order.
  std::vector<FVec> x;
  x.reserve(training.size());
  for (const auto& f : training) {
    const FVec v = f.as_vector();
    require(v.allFinite(), "fit_anomaly_model: non-finite feature");
    x.push_back(v);
  }
  std::sort(x.begin(), x.end(), [](const FVec& a, const FVec& b) {
    return std::lexicographical_compare(a.data(), a.data() + kD, b.data(), b.data() + kD);
  });

  AnomalyModel m;
  m.nu = nu;
  m.n_train = l;
  m.seed = seed;
  for (const FVec& v : x) m.mean += v;
  m.mean /= l;
  FVec var = FVec::Zero();
  for (const FVec& v : x) var += (v - m.mean).cwiseAbs2();
  var /= l;
  for (int k = 0; k < kD; ++k) m.scale[k] = var[k] > 1e-24 ? std::sqrt(var[k]) : 1.0;
  for (FVec& v : x) v = (v - m.mean).cwiseQuotient(m.scale);
  require(params.gamma > 0.0, "fit_anomaly_model: gamma must be > 0");
  m.gamma = params.gamma;

  Eigen::MatrixXd q(l, l);
  for (int i = 0; i < l; ++i) {
    q(i, i) = 1.0;
    for (int j = i + 1; j < l; ++j) q(i, j) = q(j, i) = rbf(x[i], x[j], m.gamma);
  }

  // Dual: min 1/2 a'Qa subject to 0 <= a_i <= 1, sum a = nu l.
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(l);
  double budget = nu * l;
  for (int i = 0; i < l && budget > 0.0; ++i) {
    alpha[i] = std::min(1.0, budget);
    budget -= alpha[i];
  }
  Eigen::VectorXd grad = q * alpha;
  for (int it = 0; it < params.max_iterations; ++it) {
    int i = -1, j = -1;
    double gmin = 1e300, gmax = -1e300;
    for (int k = 0; k < l; ++k) {
      if (alpha[k] < 1.0 && grad[k] < gmin) gmin = grad[k], i = k;
      if (alpha[k] > 0.0 && grad[k] > gmax) gmax = grad[k], j = k;
    }
    if (i < 0 || j < 0 || gmax - gmin < params.tolerance) break;
    const double quad = std::max(q(i, i) + q(j, j) - 2.0 * q(i, j), 1e-12);
    double t = (gmax - gmin) / quad;
    t = std::min({t, 1.0 - alpha[i], alpha[j]});
    alpha[i] += t;
    alpha[j] -= t;
    grad += t * (q.col(i) - q.col(j));
  }

  double free_sum = 0.0;
  int n_free = 0;
  double ub = 1e300, lb = -1e300;
  for (int k = 0; k < l; ++k) {
    if (alpha[k] > 1e-12 && alpha[k] < 1.0 - 1e-12) {
      free_sum += grad[k];
      ++n_free;
    } else if (alpha[k] <= 1e-12) {
      ub = std::min(ub, grad[k]);
    } else {
      lb = std::max(lb, grad[k]);
    }
  }
  m.rho = n_free > 0 ? free_sum / n_free : 0.5 * (ub + lb);

  int n_sv = 0;
  for (int k = 0; k < l; ++k)
    if (alpha[k] > 1e-12) ++n_sv;
  m.support.resize(n_sv, kD);
  m.alpha.resize(n_sv);
  for (int k = 0, s = 0; k < l; ++k) {
    if (alpha[k] <= 1e-12) continue;
    m.support.row(s) = x[static_cast<std::size_t>(k)].transpose();
    m.alpha[s] = alpha[k];
    ++s;
  }
  return m;
}

Score score(const AnomalyModel& model, const FeatureVector& fv) {
  if (!model.fitted()) throw std::logic_error("score: model is not fitted");
  const FVec z = (fv.as_vector() - model.mean).cwiseQuotient(model.scale);
  double f = -model.rho;
  for (Eigen::Index s = 0; s < model.support.rows(); ++s)
    f += model.alpha[s] * rbf(model.support.row(s).transpose(), z, model.gamma);
  Score out;
  out.margin = f - model.threshold;
  out.verdict = out.margin >= 0.0 ? Verdict::genuine : Verdict::spoofed;
  return out;
}

void AnomalyModel::save(std::ostream& os) const {
  os << "mmspoof-ocsvm 1\n" << std::setprecision(17);
  os << "n_train " << n_train << " seed " << seed << " nu " << nu << " gamma " << gamma << " rho " << rho
     << " threshold " << threshold << "\n";
  os << "mean";
  for (int k = 0; k < kD; ++k) os << ' ' << mean[k];
  os << "\nscale";
  for (int k = 0; k < kD; ++k) os << ' ' << scale[k];
  os << "\nsupport " << support.rows() << "\n";
  for (Eigen::Index s = 0; s < support.rows(); ++s) {
    os << alpha[s];
    for (int k = 0; k < kD; ++k) os << ' ' << support(s, k);
    os << "\n";
  }
}

AnomalyModel AnomalyModel::load(std::istream& is) {
  auto expect = [&](const char* word) {
    std::string w;
    if (!(is >> w) || w != word) throw std::runtime_error(std::string("AnomalyModel::load: expected ") + word);
  };
  AnomalyModel m;
  expect("mmspoof-ocsvm");
  int version = 0;
  if (!(is >> version) || version != 1) throw std::runtime_error("AnomalyModel::load: unsupported version");
  expect("n_train");
  is >> m.n_train;
  expect("seed");
  is >> m.seed;
  expect("nu");
  is >> m.nu;
  expect("gamma");
  is >> m.gamma;
  expect("rho");
  is >> m.rho;
  expect("threshold");
  is >> m.threshold;
  expect("mean");
  for (int k = 0; k < kD; ++k) is >> m.mean[k];
  expect("scale");
  for (int k = 0; k < kD; ++k) is >> m.scale[k];
  expect("support");
  Eigen::Index n = 0;
  is >> n;
  if (!is || n < 0) throw std::runtime_error("AnomalyModel::load: bad support count");
  m.support.resize(n, kD);
  m.alpha.resize(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    is >> m.alpha[s];
    for (int k = 0; k < kD; ++k) is >> m.support(s, k);
  }
  if (!is) throw std::runtime_error("AnomalyModel::load: truncated record");
  return m;
}

}  // namespace mmspoof
