#ifndef LBILL_GEOMETRY_HPP
#define LBILL_GEOMETRY_HPP

// Boundary of the billiard family w(z) = z + λ z² on the unit circle |z| = 1,
// z = exp(iθ), λ ∈ [0, 1/2].

#include "lbill/errors.hpp"
#include "lbill/numerics.hpp"

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace lbill {

template <Real Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

template <Real Scalar>
struct BoundaryPointT {
  Scalar theta;
  Vec2<Scalar> position;
  Scalar arclength;
  Vec2<Scalar> tangent;        // unit, counterclockwise
  Vec2<Scalar> inward_normal;  // unit, tangent rotated by +90°
  Scalar curvature;            // +1 on the unit circle
};

/// One member of the λ-family. Perimeter and area are cached; arclength uses
/// the closed form s(θ) = 2(1 + 2λ) E(θ/2 | m), m = 8λ/(1 + 2λ)².
template <Real Scalar>
class BilliardShapeT {
 public:
  explicit BilliardShapeT(Scalar lambda) : lambda_(lambda) {
    if (!(lambda >= Scalar(0) && lambda <= Scalar(0.5))) {
      throw DomainError("billiard lambda must lie in [0, 1/2], got " + std::to_string(double(lambda)));
    }
    const Scalar one_plus = Scalar(1) + Scalar(2) * lambda;
    scale_ = Scalar(2) * one_plus;
    modulus_ = std::sqrt(Scalar(8) * lambda) / one_plus;
    perimeter_ = Scalar(2) * scale_ * std::comp_ellint_2(modulus_);
    area_ = std::numbers::pi_v<Scalar> * (Scalar(1) + Scalar(2) * lambda * lambda);
    build_inverse_table();
  }

  Scalar lambda() const noexcept { return lambda_; }
  Scalar perimeter() const noexcept { return perimeter_; }
  Scalar area() const noexcept { return area_; }

  /// Length of the symmetry chord on the x-axis, from w(π) to w(0).
  Scalar symmetry_line_length() const noexcept { return Scalar(2); }

  Vec2<Scalar> position(Scalar theta) const noexcept {
    return {std::cos(theta) + lambda_ * std::cos(Scalar(2) * theta),
            std::sin(theta) + lambda_ * std::sin(Scalar(2) * theta)};
  }

  /// dw/dθ = i e^{iθ}(1 + 2λ e^{iθ}).
  Vec2<Scalar> derivative(Scalar theta) const noexcept {
    return {-std::sin(theta) - Scalar(2) * lambda_ * std::sin(Scalar(2) * theta),
            std::cos(theta) + Scalar(2) * lambda_ * std::cos(Scalar(2) * theta)};
  }

  /// |dw/dθ| = sqrt(1 + 4λ cos θ + 4λ²).
  Scalar speed(Scalar theta) const noexcept {
    return std::sqrt(Scalar(1) + Scalar(4) * lambda_ * std::cos(theta) + Scalar(4) * lambda_ * lambda_);
  }

  Scalar curvature(Scalar theta) const noexcept {
    const Scalar c = std::cos(theta);
    const Scalar l2 = lambda_ * lambda_;
    const Scalar speed_sq = Scalar(1) + Scalar(4) * lambda_ * c + Scalar(4) * l2;
    return (Scalar(1) + Scalar(8) * l2 + Scalar(6) * lambda_ * c) / (speed_sq * std::sqrt(speed_sq));
  }

  /// Arclength from θ = 0, for any real θ (counts full turns).
  Scalar arclength(Scalar theta) const {
    const Scalar turns = std::floor(theta / (Scalar(2) * std::numbers::pi_v<Scalar>));
    const Scalar reduced = theta - turns * Scalar(2) * std::numbers::pi_v<Scalar>;
    return turns * perimeter_ + scale_ * std::ellint_2(modulus_, reduced / Scalar(2));
  }

  /// Inverse of arclength on [0, L); s is wrapped first.
  Scalar theta_at(Scalar s) const {
    constexpr Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
    s = std::fmod(s, perimeter_);
    if (s < Scalar(0)) s += perimeter_;
    const auto n = static_cast<Scalar>(table_s_.size() - 1);
    auto idx = static_cast<std::size_t>(std::upper_bound(table_s_.begin(), table_s_.end(), s) - table_s_.begin());
    idx = std::clamp<std::size_t>(idx, 1, table_s_.size() - 1);
    Scalar lo = two_pi * Scalar(idx - 1) / n;
    Scalar hi = two_pi * Scalar(idx) / n;
    const Scalar s_lo = table_s_[idx - 1], s_hi = table_s_[idx];
    Scalar theta = lo + (hi - lo) * (s - s_lo) / (s_hi - s_lo);
    // Newton on s(θ) - s with a bisection fallback inside the table bracket.
    for (int iter = 0; iter < 60; ++iter) {
      const Scalar f = arclength(theta) - s;
      if (f > Scalar(0)) hi = theta; else lo = theta;
      const Scalar df = speed(theta);
      Scalar next = theta - f / df;
      if (!(next > lo && next < hi)) next = Scalar(0.5) * (lo + hi);
      const Scalar step = std::abs(next - theta);
      theta = next;
      if (step <= Scalar(4) * std::numeric_limits<Scalar>::epsilon() * (Scalar(1) + std::abs(theta))) break;
    }
    return theta;
  }

 private:
  void build_inverse_table() {
    constexpr int nodes = 256;
    table_s_.resize(nodes + 1);
    for (int i = 0; i <= nodes; ++i) {
      table_s_[i] = scale_ * std::ellint_2(modulus_, std::numbers::pi_v<Scalar> * Scalar(i) / Scalar(nodes));
    }
    table_s_.back() = perimeter_;
  }

  Scalar lambda_;
  Scalar scale_;
  Scalar modulus_;
  Scalar perimeter_;
  Scalar area_;
  std::vector<Scalar> table_s_;
};

using BilliardShape = BilliardShapeT<double>;
using BoundaryPoint = BoundaryPointT<double>;

template <Real Scalar>
BoundaryPointT<Scalar> boundary_point(const BilliardShapeT<Scalar>& shape, Scalar theta) {
  constexpr Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  theta = std::fmod(theta, two_pi);
  if (theta < Scalar(0)) theta += two_pi;
  const Vec2<Scalar> d = shape.derivative(theta);
  const Vec2<Scalar> t = d / d.norm();
  return {theta, shape.position(theta), shape.arclength(theta), t, Vec2<Scalar>(-t.y(), t.x()),
          shape.curvature(theta)};
}

template <Real Scalar>
Scalar arclength_of_theta(const BilliardShapeT<Scalar>& shape, Scalar theta) {
  return shape.arclength(theta);
}

template <Real Scalar>
Scalar theta_of_arclength(const BilliardShapeT<Scalar>& shape, Scalar s) {
  return shape.theta_at(s);
}

/// π(1 + 2λ²), exact by Green's theorem.
template <Real Scalar>
Scalar area(const BilliardShapeT<Scalar>& shape) {
  return shape.area();
}

/// Point-in-domain test. The domain is star-shaped about the origin for λ < 1/2,
/// so compare the radius against the boundary radius along the same ray.
template <Real Scalar>
bool contains(const BilliardShapeT<Scalar>& shape, const Vec2<Scalar>& point) {
  const Scalar r = point.norm();
  if (r < Scalar(1) - shape.lambda() - Scalar(1e-12)) return true;
  if (r > Scalar(1) + shape.lambda()) return false;
  // Solve arg w(θ) = arg(point) by Newton on the angle mismatch.
  const Scalar target = std::atan2(point.y(), point.x());
  Scalar theta = target;
  for (int iter = 0; iter < 50; ++iter) {
    const Vec2<Scalar> w = shape.position(theta);
    const Vec2<Scalar> dw = shape.derivative(theta);
    Scalar mismatch = std::atan2(w.y(), w.x()) - target;
    mismatch = std::remainder(mismatch, Scalar(2) * std::numbers::pi_v<Scalar>);
    const Scalar dphase = (w.x() * dw.y() - w.y() * dw.x()) / w.squaredNorm();
    const Scalar step = mismatch / dphase;
    theta -= step;
    if (std::abs(step) < Scalar(1e-15)) break;
  }
  return r < shape.position(theta).norm();
}

}  // namespace lbill

#endif  // LBILL_GEOMETRY_HPP
