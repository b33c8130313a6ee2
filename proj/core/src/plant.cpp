#include "lasead/plant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lasead {

void PlantParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("plant: ") + what);
  };
  require(cart_mass > 0.0 && std::isfinite(cart_mass), "cart_mass must be > 0");
  require(pole_mass > 0.0 && std::isfinite(pole_mass), "pole_mass must be > 0");
  require(half_length > 0.0 && std::isfinite(half_length), "half_length must be > 0");
  require(gravity > 0.0 && std::isfinite(gravity), "gravity must be > 0");
  require(dt > 0.0 && std::isfinite(dt), "dt must be > 0");
  require(u_max > 0.0 && std::isfinite(u_max), "u_max must be > 0");
  require(process_noise.allFinite(), "process_noise must be finite");
  require((process_noise - process_noise.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
          "process_noise must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat4> eig(process_noise, Eigen::EigenvaluesOnly);
  require(eig.eigenvalues().minCoeff() >= -1e-15, "process_noise must be PSD");
}

double saturate(double u, double u_max) { return std::clamp(u, -u_max, u_max); }

CartPole::CartPole(PlantParams params) : params_(std::move(params)) { params_.validate(); }

Vec4 CartPole::derivative(const Vec4& x, double u) const {
  const double total_mass = params_.cart_mass + params_.pole_mass;
  const double pole_moment = params_.pole_mass * params_.half_length;
  const double s = std::sin(x[kAngle]);
  const double c = std::cos(x[kAngle]);
  const double omega = x[kAngularVelocity];

  const double temp = (u + pole_moment * omega * omega * s) / total_mass;
  const double angular_accel =
      (params_.gravity * s - c * temp) /
      (params_.half_length * (4.0 / 3.0 - params_.pole_mass * c * c / total_mass));
  const double linear_accel = temp - pole_moment * angular_accel * c / total_mass;
  return {x[kVelocity], linear_accel, omega, angular_accel};
}

Vec4 CartPole::integrate(const Vec4& x, double u, double dt) const {
  const Vec4 k1 = derivative(x, u);
  const Vec4 k2 = derivative(x + 0.5 * dt * k1, u);
  const Vec4 k3 = derivative(x + 0.5 * dt * k2, u);
  const Vec4 k4 = derivative(x + dt * k3, u);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vec4 CartPole::step(const Vec4& x, double u, const std::optional<Vec4>& noise) const {
  if (!x.allFinite() || !std::isfinite(u)) {
    throw std::invalid_argument("plant step: non-finite state or input");
  }
  if (std::abs(u) > params_.u_max) {
    throw std::invalid_argument("plant step: |u| exceeds u_max");
  }
  Vec4 next = integrate(x, u, params_.dt);
  if (noise) {
    if (!noise->allFinite()) throw std::invalid_argument("plant step: non-finite noise");
    next += *noise;
  }
  return next;
}

AffineStep CartPole::affine(const Vec4& x) const {
  constexpr double h = 1e-4;
  const Vec4 plus = integrate(x, h, params_.dt);
  const Vec4 minus = integrate(x, -h, params_.dt);
  return {integrate(x, 0.0, params_.dt), (plus - minus) / (2.0 * h)};
}

Linearization CartPole::linearize(const Vec4& x, double u, double h) const {
  Linearization lin;
  for (int i = 0; i < kStateDim; ++i) {
    Vec4 dx = Vec4::Zero();
    dx[i] = h;
    lin.state_jacobian.col(i) =
        (integrate(x + dx, u, params_.dt) - integrate(x - dx, u, params_.dt)) / (2.0 * h);
  }
  lin.input_jacobian =
      (integrate(x, u + h, params_.dt) - integrate(x, u - h, params_.dt)) / (2.0 * h);
  return lin;
}

}  // namespace lasead
