#include "lbill/quantum.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>

using namespace lbill;
using doctest::Approx;

namespace {

// ∮ (r·n) u² ds by the midpoint rule on the sample grid.
double boundary_norm(const EigenstateRecord& r, const BilliardShape& shape) {
  const double h = r.perimeter / r.boundary_grid_size();
  double sum = 0.0;
  for (int i = 0; i < r.boundary_grid_size(); ++i) {
    const double theta = shape.theta_at(r.sample_arclength(i));
    const Vec2<double> x = shape.position(theta), d = shape.derivative(theta);
    const Vec2<double> outward = Vec2<double>(d.y(), -d.x()) / d.norm();
    sum += h * x.dot(outward) * r.u_samples[i] * r.u_samples[i];
  }
  return sum;
}

const SpectralWindow& circle_window() {
  static const SpectralWindow w = solve_window(BilliardShape(0.0), 40.0, 42.0);
  return w;
}

const SpectralWindow& quarter_window() {
  static const SpectralWindow w = solve_window(BilliardShape(0.25), 60.0, 61.0);
  return w;
}

}  // namespace

TEST_SUITE("quantum") {

TEST_CASE("circle oracle agrees with interlacing bisection") {
  const auto levels = circle_oracle(100.0);
  const auto zeros = oracle::bessel_zeros(100.0);
  REQUIRE(levels.size() == zeros.size());
  CHECK(levels.front().k == Approx(2.404825557695773).epsilon(1e-14));
  CHECK(levels.front().n == 0);
  CHECK(levels.front().m == 1);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    CHECK(levels[i].k == Approx(zeros[i]).epsilon(1e-12));
    CHECK(std::abs(std::cyl_bessel_j(levels[i].n, levels[i].k)) < 1e-12);
  }
}

TEST_CASE("circle zeros interlace") {
  const auto levels = circle_oracle(60.0);
  std::map<std::pair<int, int>, double> z;
  for (const auto& l : levels) z[{l.n, l.m}] = l.k;
  int checked = 0;
  for (const auto& [key, k] : z) {
    const auto up = z.find({key.first + 1, key.second});
    const auto next = z.find({key.first, key.second + 1});
    if (up == z.end() || next == z.end()) continue;
    CHECK(k < up->second);
    CHECK(up->second < next->second);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("smooth count tracks the circle staircase") {
  const BilliardShape circle(0.0);
  const auto levels = circle_oracle(100.0);

  // Residual between levels, sampled at the midpoints of each step.
  double residual = 0.0;
  int samples = 0;
  for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
    if (levels[i].k < 40.0 || levels[i + 1].k > 60.0) continue;
    residual += static_cast<double>(i + 1) - weyl_count(circle, 0.5 * (levels[i].k + levels[i + 1].k));
    ++samples;
  }
  CHECK(std::abs(residual / samples) < 0.5);

  std::vector<double> ks;
  for (const auto& l : levels) ks.push_back(l.k);
  CHECK(std::abs(fit_weyl_constant(circle, ks) - weyl_constant_even()) < 0.2);
}

TEST_CASE("circle count below 100 within two levels") {
  const BilliardShape circle(0.0);
  const auto levels = circle_oracle(100.0);
  CHECK(std::abs(static_cast<double>(levels.size()) - weyl_count(circle, 100.0)) <= 2.0);
}

TEST_CASE("smooth count is increasing past L/A") {
  for (double lambda : {0.0, 0.25, 0.45}) {
    const BilliardShape shape(lambda);
    double prev = weyl_count(shape, shape.perimeter() / shape.area());
    for (double k = shape.perimeter() / shape.area() + 0.1; k < 200.0; k += 0.5) {
      const double n = weyl_count(shape, k);
      CHECK(n > prev);
      prev = n;
    }
    CHECK(weyl_density(shape, 50.0) ==
          Approx((weyl_count(shape, 50.0 + 1e-5) - weyl_count(shape, 50.0 - 1e-5)) / 2e-5).epsilon(1e-7));
  }
}

TEST_CASE("circle window reproduces the Bessel zeros") {
  const SpectralWindow& w = circle_window();
  std::vector<double> expected;
  for (double z : oracle::bessel_zeros(42.0)) {
    if (z >= 40.0) expected.push_back(z);
  }
  REQUIRE(w.levels.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(std::abs(w.levels[i].k - expected[i]) / expected[i] < 1e-6);
  }
}

TEST_CASE("boundary functions are sampled and normalized") {
  const BilliardShape shape(0.25);
  const SpectralWindow& w = quarter_window();
  REQUIRE(!w.levels.empty());
  double prev = 0.0;
  for (const auto& r : w.levels) {
    CHECK(r.k > prev);
    prev = r.k;
    CHECK(r.parity == Parity::even);
    CHECK(r.tension <= 1e-3);
    CHECK(r.boundary_grid_size() >= std::ceil(6.0 * r.k * shape.perimeter() / (2.0 * std::numbers::pi)));
    CHECK(boundary_norm(r, shape) == Approx(2.0 * r.k * r.k).epsilon(1e-8));
    // Even states: u(s) = u(L - s).
    const int n = r.boundary_grid_size();
    double asym = 0.0, scale = 0.0;
    for (int i = 0; i < n; ++i) {
      asym = std::max(asym, std::abs(r.u_samples[i] - r.u_samples[n - 1 - i]));
      scale = std::max(scale, std::abs(r.u_samples[i]));
    }
    CHECK(asym < 1e-8 * scale);
  }
}

TEST_CASE("level count follows the smooth count") {
  const BilliardShape shape(0.25);
  const SpectralWindow& w = quarter_window();
  const double expected = weyl_count(shape, 61.0) - weyl_count(shape, 60.0);
  CHECK(std::abs(static_cast<double>(w.levels.size()) - expected) <= 2.0);
}

TEST_CASE("levels are stable under basis enlargement") {
  const BilliardShape shape(0.25);
  SolveOptions bigger;
  bigger.basis_scale = 1.25;
  const SpectralWindow a = solve_window(shape, 60.0, 60.6);
  const SpectralWindow b = solve_window(shape, 60.0, 60.6, bigger);
  REQUIRE(a.levels.size() == b.levels.size());
  for (std::size_t i = 0; i < a.levels.size(); ++i) {
    CHECK(std::abs(a.levels[i].k - b.levels[i].k) < 1e-7 * a.levels[i].k);
  }
}

TEST_CASE("boundary integral method agrees with the scaling method") {
  const BilliardShape shape(0.25);
  SolveOptions bim;
  bim.method = SolverMethod::boundary_integral;
  const SpectralWindow a = solve_window(shape, 40.0, 40.3);
  const SpectralWindow b = solve_window(shape, 40.0, 40.3, bim);
  REQUIRE(a.levels.size() == b.levels.size());
  for (std::size_t i = 0; i < a.levels.size(); ++i) {
    CHECK(std::abs(a.levels[i].k - b.levels[i].k) < 2e-5);
    // Same boundary function up to discretization.
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int j = 0; j < a.levels[i].boundary_grid_size(); ++j) {
      dot += a.levels[i].u_samples[j] * b.levels[i].u_samples[j];
      na += a.levels[i].u_samples[j] * a.levels[i].u_samples[j];
      nb += b.levels[i].u_samples[j] * b.levels[i].u_samples[j];
    }
    CHECK(dot / std::sqrt(na * nb) > 0.999);
  }
}

TEST_CASE("window edge cases") {
  const BilliardShape shape(0.25);
  CHECK_NOTHROW(solve_window(shape, 50.0, 50.001));
  CHECK_THROWS_AS(solve_window(shape, 10.0, 12.0), DomainError);
}

TEST_CASE("interior wavefunction of a circle state") {
  const BilliardShape circle(0.0);
  const SpectralWindow& w = circle_window();
  // j_{0,13} ≈ 40.0584 is the radially symmetric state in the window.
  const auto it = std::find_if(w.levels.begin(), w.levels.end(),
                               [](const auto& r) { return std::abs(r.k - 40.05842) < 1e-3; });
  REQUIRE(it != w.levels.end());
  const WavefunctionEvaluator psi(*it, circle);
  std::vector<double> values, bessel;
  for (int i = 0; i < 40; ++i) {
    const double r = 0.02 + 0.95 * i / 40.0;
    values.push_back(psi(Vec2<double>(r * std::cos(0.7), r * std::sin(0.7))));
    bessel.push_back(std::cyl_bessel_j(0, it->k * r));
  }
  CHECK(std::abs(pearson(values, bessel)) > 0.999);
  CHECK_THROWS_AS(psi(Vec2<double>(1.01, 0.0)), PointOutsideDomain);
}

TEST_CASE("interior wavefunction parity and boundary condition") {
  const BilliardShape shape(0.25);
  const EigenstateRecord& r = quarter_window().levels.front();
  const WavefunctionEvaluator psi(r, shape);
  double interior = 0.0, parity = 0.0;
  for (int i = 0; i < 12; ++i) {
    const Vec2<double> p(-0.5 + 0.1 * i, 0.05 + 0.06 * i);
    const double up = psi(p), down = psi(Vec2<double>(p.x(), -p.y()));
    parity = std::max(parity, std::abs(up - down));
    interior = std::max(interior, std::abs(up));
  }
  CHECK(parity < 1e-6 * interior);
  // Near the wall ψ ≈ δ ∂ψ/∂n, so it falls off linearly with the distance δ.
  auto edge = [&](double delta) {
    double worst = 0.0;
    for (int i = 0; i < 24; ++i) {
      const BoundaryPoint b = boundary_point(shape, 2.0 * std::numbers::pi * (i + 0.3) / 24.0);
      worst = std::max(worst, std::abs(psi(Vec2<double>(b.position + delta * b.inward_normal))));
    }
    return worst;
  };
  double prev = edge(1e-3);
  for (double delta : {1e-4, 1e-5, 1e-6}) {
    const double e = edge(delta);
    CHECK(prev / e == Approx(10.0).epsilon(0.5));
    prev = e;
  }
  CHECK(prev < 1e-3 * interior);
  CHECK(wavefunction_at(r, shape, Vec2<double>(0.1, 0.2)) == Approx(psi(Vec2<double>(0.1, 0.2))).epsilon(1e-14));
}

}
