#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace mmspoof {

/// Uniform linear receive array. spacing is in wavelengths.
struct ArrayGeometry {
  int n_rx = 4;
  double spacing = 0.5;

  void validate() const {
    if (n_rx < 2) throw std::invalid_argument("ArrayGeometry.n_rx must be >= 2");
    if (!(spacing > 0.0)) throw std::invalid_argument("ArrayGeometry.spacing must be > 0");
  }
};

template <typename Scalar>
Scalar deg_to_rad(Scalar deg) {
  return deg * std::numbers::pi_v<Scalar> / Scalar(180);
}

template <typename Scalar>
Scalar rad_to_deg(Scalar rad) {
  return rad * Scalar(180) / std::numbers::pi_v<Scalar>;
}

/// Steering vector referenced to the array phase centre, so a(theta) is
/// conjugate-symmetric: J * conj(a) == a.
template <typename Scalar = double>
Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> steering_vector(const ArrayGeometry& g,
                                                                       Scalar angle_deg) {
  Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> a(g.n_rx);
  const Scalar u = Scalar(2) * std::numbers::pi_v<Scalar> * Scalar(g.spacing) *
                   std::sin(deg_to_rad(angle_deg));
  const Scalar centre = Scalar(g.n_rx - 1) / Scalar(2);
  for (int k = 0; k < g.n_rx; ++k) a[k] = std::polar(Scalar(1), u * (Scalar(k) - centre));
  return a;
}

}  // namespace mmspoof
