#pragma once

#include <optional>

#include "lasead/types.hpp"

namespace lasead {

/// Physical and numerical parameters of the cart-pole. Defaults are the
/// classic Barto/Gym values with a 5 ms integration step.
struct PlantParams {
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_length = 0.5;
  double gravity = 9.8;
  double dt = 0.005;
  double u_max = 10.0;
  /// Per-step additive process noise covariance.
  Mat4 process_noise = Vec4(1e-6, 1e-5, 1e-6, 1e-5).asDiagonal();

  /// Throws std::invalid_argument listing the first violated constraint.
  void validate() const;
};

/// Control-affine split of one discrete step: step(x, u) ~ drift + input * u.
struct AffineStep {
  Vec4 drift;
  Vec4 input;
};

struct Linearization {
  Mat4 state_jacobian;
  Vec4 input_jacobian;
};

double saturate(double u, double u_max);

/// Cart-pole dynamics discretized with classic RK4 (input held over the step).
/// Stateless apart from its parameters; every method is reentrant.
class CartPole {
 public:
  CartPole() = default;
  explicit CartPole(PlantParams params);

  const PlantParams& params() const { return params_; }
  double dt() const { return params_.dt; }

  /// Time derivative (v, v_dot, omega, omega_dot) of the Barto equations.
  Vec4 derivative(const Vec4& x, double u) const;

  /// One RK4 step plus optional additive noise. Rejects non-finite input and
  /// |u| beyond u_max.
  Vec4 step(const Vec4& x, double u, const std::optional<Vec4>& noise = std::nullopt) const;

  /// drift = step(x, 0); input = d step / du at u = 0 by central difference.
  AffineStep affine(const Vec4& x) const;

  /// Central-difference Jacobians of the noiseless step.
  Linearization linearize(const Vec4& x, double u, double h = 1e-6) const;

  /// Noiseless RK4 step without range checks; used by finite differencing.
  Vec4 integrate(const Vec4& x, double u, double dt) const;

 private:
  PlantParams params_;
};

}  // namespace lasead
