#include "lbill/geometry.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace lbill;
using doctest::Approx;

TEST_SUITE("geometry") {

TEST_CASE("boundary points at reference angles") {
  const BilliardShape circle(0.0);
  const BoundaryPoint p0 = boundary_point(circle, 0.0);
  CHECK(p0.position.x() == Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(p0.position.y()) < 1e-15);
  CHECK(p0.curvature == Approx(1.0).epsilon(1e-14));

  const BilliardShape quarter(0.25);
  const BoundaryPoint flat = boundary_point(quarter, std::numbers::pi);
  CHECK(flat.position.x() == Approx(-0.75).epsilon(1e-14));
  CHECK(std::abs(flat.position.y()) < 1e-14);
  CHECK(std::abs(flat.curvature) < 1e-12);

  const BilliardShape mid(0.15);
  const BoundaryPoint top = boundary_point(mid, std::numbers::pi / 2);
  CHECK(top.position.x() == Approx(-0.15).epsilon(1e-14));
  CHECK(top.position.y() == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("frame is orthonormal and arclength increases") {
  for (double lambda : {0.0, 0.1, 0.25, 0.4}) {
    const BilliardShape shape(lambda);
    double prev = -1.0;
    for (int i = 0; i < 500; ++i) {
      const BoundaryPoint b = boundary_point(shape, 2.0 * std::numbers::pi * i / 500.0);
      CHECK(std::abs(b.tangent.norm() - 1.0) < 1e-12);
      CHECK(std::abs(b.inward_normal.norm() - 1.0) < 1e-12);
      CHECK(std::abs(b.tangent.dot(b.inward_normal)) < 1e-12);
      CHECK(b.arclength > prev);
      prev = b.arclength;
    }
  }
}

TEST_CASE("inward normal points into the domain") {
  const BilliardShape shape(0.3);
  for (int i = 0; i < 64; ++i) {
    const BoundaryPoint b = boundary_point(shape, 2.0 * std::numbers::pi * (i + 0.5) / 64.0);
    CHECK(contains(shape, Vec2<double>(b.position + 1e-6 * b.inward_normal)));
    CHECK_FALSE(contains(shape, Vec2<double>(b.position - 1e-6 * b.inward_normal)));
  }
}

TEST_CASE("arclength on the circle is the angle") {
  const BilliardShape circle(0.0);
  CHECK(arclength_of_theta(circle, 1.3) == Approx(1.3).epsilon(1e-14));
  CHECK(circle.perimeter() == Approx(2.0 * std::numbers::pi).epsilon(1e-14));
  CHECK(area(circle) == Approx(std::numbers::pi).epsilon(1e-15));
}

TEST_CASE("arclength and its inverse round-trip") {
  const BilliardShape shape(0.25);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double theta = u(rng);
    worst = std::max(worst, std::abs(theta_of_arclength(shape, arclength_of_theta(shape, theta)) - theta));
  }
  CHECK(worst < 1e-10);
  CHECK(arclength_of_theta(shape, 0.0) == 0.0);
  CHECK(arclength_of_theta(shape, 2.0 * std::numbers::pi) == Approx(shape.perimeter()).epsilon(1e-14));
}

TEST_CASE("perimeter matches quadrature and inscribed polygons") {
  for (double lambda : {0.0, 0.15, 0.25, 0.4, 0.5}) {
    const BilliardShape shape(lambda);
    CHECK(shape.perimeter() == Approx(oracle::perimeter(lambda)).epsilon(1e-12));
    CHECK(shape.perimeter() == Approx(oracle::polygon_perimeter(lambda, 1'000'000)).epsilon(1e-6));
  }
}

TEST_CASE("area matches hit-or-miss integration") {
  for (double lambda : {0.15, 0.5}) {
    const BilliardShape shape(lambda);
    CHECK(area(shape) == Approx(std::numbers::pi * (1.0 + 2.0 * lambda * lambda)).epsilon(1e-15));
    const double mc = oracle::monte_carlo_area(shape, 10'000'000, 3);
    CHECK(std::abs(mc - area(shape)) / area(shape) < 1e-3);
  }
}

TEST_CASE("curvature sign across the convexity threshold") {
  auto min_curvature = [](double lambda) {
    const BilliardShape shape(lambda);
    double lo = 1e300;
    for (int i = 0; i <= 20000; ++i) lo = std::min(lo, shape.curvature(2.0 * std::numbers::pi * i / 20000.0));
    return lo;
  };
  CHECK(min_curvature(0.1) > 0.0);
  CHECK(min_curvature(0.24) > 0.0);
  CHECK(std::abs(min_curvature(0.25)) < 1e-12);
  const BilliardShape quarter(0.25);
  CHECK(quarter.curvature(std::numbers::pi - 0.1) > 0.0);
  CHECK(quarter.curvature(std::numbers::pi + 0.1) > 0.0);
  CHECK(min_curvature(0.3) < 0.0);
  CHECK(BilliardShape(0.3).curvature(std::numbers::pi) < 0.0);
}

TEST_CASE("reflection symmetry about the x-axis") {
  const BilliardShape shape(0.2);
  for (int i = 0; i < 50; ++i) {
    const double theta = 0.123 * i;
    CHECK(boundary_point(shape, theta).position.y() == Approx(-boundary_point(shape, -theta).position.y()).epsilon(1e-14));
  }
}

TEST_CASE("lambda outside the family is rejected") {
  CHECK_THROWS_AS(BilliardShape(-0.1), DomainError);
  CHECK_THROWS_AS(BilliardShape(0.51), DomainError);
}

TEST_CASE("point containment") {
  const BilliardShape shape(0.25);
  CHECK(contains(shape, Vec2<double>(0.0, 0.0)));
  CHECK(contains(shape, Vec2<double>(1.24, 0.0)));
  CHECK_FALSE(contains(shape, Vec2<double>(1.26, 0.0)));
  CHECK(contains(shape, Vec2<double>(-0.74, 0.0)));
  CHECK_FALSE(contains(shape, Vec2<double>(-0.76, 0.0)));
}

TEST_CASE("long double instantiation agrees with double") {
  const BilliardShapeT<long double> wide(0.25L);
  const BilliardShape narrow(0.25);
  CHECK(static_cast<double>(wide.perimeter()) == Approx(narrow.perimeter()).epsilon(1e-12));
  CHECK(static_cast<double>(wide.theta_at(1.0L)) == Approx(narrow.theta_at(1.0)).epsilon(1e-12));
}

}
