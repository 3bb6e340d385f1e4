#include "lbill/classical.hpp"

#include <algorithm>
#include <random>

namespace lbill {

namespace {

constexpr std::size_t kEnsembleChunk = 2048;

// Cell index of s via the θ-values of the cell edges; avoids one elliptic
// integral per collision in long runs.
class ArclengthBinner {
 public:
  ArclengthBinner(const BilliardShape& shape, int n_q) : edges_(n_q + 1) {
    for (int i = 0; i <= n_q; ++i) edges_[i] = shape.theta_at(shape.perimeter() * i / n_q);
    edges_.front() = 0.0;
    edges_.back() = 2.0 * std::numbers::pi;
  }
  int operator()(double theta) const {
    const auto it = std::upper_bound(edges_.begin(), edges_.end(), theta);
    const int idx = static_cast<int>(it - edges_.begin()) - 1;
    return std::clamp(idx, 0, static_cast<int>(edges_.size()) - 2);
  }

 private:
  std::vector<double> edges_;
};

int momentum_bin(double p, int n_p) {
  const int j = static_cast<int>(std::floor((p + 1.0) * 0.5 * n_p));
  return std::clamp(j, 0, n_p - 1);
}

}  // namespace

TransportResult transport_time(const BilliardShape& shape, std::size_t ensemble_size, std::span<const double> fractions,
                               int max_collisions, std::uint64_t seed, const TransportOptions& options) {
  if (ensemble_size < kMinTransportEnsemble) {
    throw InsufficientData("transport_time: ensemble_size must be >= " + std::to_string(kMinTransportEnsemble));
  }
  if (max_collisions < 10) throw DomainError("transport_time: max_collisions must be >= 10");
  // The circle conserves p, so an ensemble started at p = 0 never spreads.
  if (shape.lambda() == 0.0) throw NotConverged("transport_time: <p²> stays at zero; no transport (integrable dynamics)");
  for (double f : fractions) {
    if (!(f > 0.0 && f < 1.0)) throw DomainError("transport_time: fractions must lie in (0, 1)");
  }
  const std::size_t n_chunks = (ensemble_size + kEnsembleChunk - 1) / kEnsembleChunk;
  const std::size_t len = static_cast<std::size_t>(max_collisions) + 1;
  std::vector<std::vector<double>> chunk_sums(n_chunks);
  const double perimeter = shape.perimeter();

  parallel_for(n_chunks, options.threads, [&](std::size_t chunk) {
    std::vector<double>& sums = chunk_sums[chunk];
    sums.assign(len, 0.0);
    // Stratified start: one uniform draw inside each of the ensemble_size strata of [0, L).
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (chunk + 1)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t begin = chunk * kEnsembleChunk;
    const std::size_t end = std::min(ensemble_size, begin + kEnsembleChunk);
    for (std::size_t i = begin; i < end; ++i) {
      const double s = perimeter * (static_cast<double>(i) + unit(rng)) / static_cast<double>(ensemble_size);
      Collision c{shape.theta_at(s), 0.0};
      for (std::size_t n = 1; n < len; ++n) {
        c = bounce(shape, c);
        sums[n] += c.p * c.p;
      }
    }
  });

  TransportResult result;
  result.second_moment_series.assign(len, 0.0);
  for (std::size_t n = 0; n < len; ++n) {
    CompensatedSum<double> total;
    for (const auto& sums : chunk_sums) total += sums[n];
    result.second_moment_series[n] = total.value() / static_cast<double>(ensemble_size);
  }

  const auto& series = result.second_moment_series;
  const std::size_t tail = std::max<std::size_t>(2, static_cast<std::size_t>(options.tail_fraction * len));
  const std::span<const double> tail_values(series.data() + (len - tail), tail);
  result.asymptote = mean(tail_values);
  if (!(result.asymptote > 1e-12)) {
    throw NotConverged("transport_time: <p²> stays at zero; no transport (integrable dynamics?)");
  }
  std::vector<double> index(tail);
  for (std::size_t i = 0; i < tail; ++i) index[i] = static_cast<double>(i);
  const double drift = std::abs(linear_fit(index, tail_values).slope) * static_cast<double>(tail) / result.asymptote;
  if (drift > options.max_tail_relative_drift) {
    throw NotConverged("transport_time: tail of <p²> still drifting (relative change " + std::to_string(drift) +
                       "); increase max_collisions");
  }
  for (double f : fractions) {
    const double level = f * result.asymptote;
    const auto it = std::find_if(series.begin(), series.end(), [&](double v) { return v >= level; });
    result.n_t_by_criterion[f] = static_cast<int>(it - series.begin());
  }
  return result;
}

double lyapunov_estimate(const BilliardShape& shape, PhasePoint start, int steps) {
  constexpr double d0 = 1e-9;
  Collision a{shape.theta_at(start.s), start.p};
  Collision b{a.theta + d0 / std::sqrt(2.0), a.p + d0 / std::sqrt(2.0)};
  double log_sum = 0.0;
  for (int n = 0; n < steps; ++n) {
    a = bounce(shape, a);
    b = bounce(shape, b);
    const double dth = std::remainder(b.theta - a.theta, 2.0 * std::numbers::pi);
    const double dp = b.p - a.p;
    const double dist = std::hypot(dth, dp);
    log_sum += std::log(dist / d0);
    b = {a.theta + dth * d0 / dist, a.p + dp * d0 / dist};
    if (std::abs(b.p) >= 1.0 - 1e-9) b.p = a.p;
  }
  return log_sum / steps;
}

ChaoticGrid chaotic_grid(const BilliardShape& shape, std::int64_t n_collisions, GridDims dims, std::uint64_t seed,
                         const ChaoticGridOptions& options) {
  if (dims.n_q <= 0 || dims.n_p <= 0) throw DomainError("chaotic_grid: grid dimensions must be positive");
  const double perimeter = shape.perimeter();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-1e-6, 1e-6);

  // Candidate seeds: the preferred start first, then a fixed spread over the section.
  std::vector<PhasePoint> candidates{options.preferred_start};
  for (double p : {0.5, 0.3, 0.7, 0.1, 0.9, -0.5}) {
    for (double frac : {0.0, 0.25, 0.5, 0.75}) candidates.push_back({frac * perimeter, p});
  }
  for (auto& c : candidates) {
    c.s = std::fmod(c.s + perimeter + jitter(rng), perimeter);
    c.p = std::clamp(c.p + jitter(rng), -0.999, 0.999);
  }

  // Among seeds with a positive Lyapunov estimate keep the one whose short
  // probe run covers the most cells: that identifies the dominant component.
  const ArclengthBinner binner(shape, dims.n_q);
  const PhasePoint* chosen = nullptr;
  std::int64_t best_cover = -1;
  std::vector<std::uint8_t> probe(static_cast<std::size_t>(dims.n_q) * dims.n_p);
  for (const auto& c : candidates) {
    if (lyapunov_estimate(shape, c, options.lyapunov_steps) < options.lyapunov_threshold) continue;
    std::fill(probe.begin(), probe.end(), 0);
    Collision state{shape.theta_at(c.s), c.p};
    std::int64_t cover = 0;
    for (std::int64_t n = 0; n < options.probe_collisions; ++n) {
      state = bounce(shape, state);
      auto& cell = probe[static_cast<std::size_t>(binner(state.theta)) * dims.n_p + momentum_bin(state.p, dims.n_p)];
      if (!cell) {
        cell = 1;
        ++cover;
      }
    }
    if (cover > best_cover) {
      best_cover = cover;
      chosen = &c;
    }
  }
  if (chosen == nullptr) {
    throw SeedInRegularRegion("chaotic_grid: no candidate start has a positive Lyapunov exponent");
  }

  ChaoticGrid grid;
  grid.cells = ChaoticGrid::Cells::Constant(dims.n_q, dims.n_p, std::int8_t{-1});
  grid.lambda = shape.lambda();
  grid.perimeter = perimeter;
  grid.seed = seed;
  grid.n_collisions = n_collisions;
  grid.start = *chosen;
  Collision state{shape.theta_at(chosen->s), chosen->p};
  std::int64_t visited = 0;
  for (std::int64_t n = 0; n < n_collisions; ++n) {
    state = bounce(shape, state);
    auto& cell = grid.cells(binner(state.theta), momentum_bin(state.p, dims.n_p));
    if (cell < 0) {
      cell = 1;
      ++visited;
    }
  }
  const double total = static_cast<double>(dims.n_q) * dims.n_p;
  if (visited < options.min_cell_fraction * total) {
    throw SeedInRegularRegion("chaotic_grid: trajectory visited only " + std::to_string(visited) + " cells");
  }
  grid.chi_c = static_cast<double>(visited) / total;
  return grid;
}

double alpha(const BilliardShape&, double k, int n_t) {
  if (!(k > 0.0) || n_t < 1) throw DomainError("alpha: need k > 0 and N_T >= 1");
  return 2.0 * k / n_t;
}

}  // namespace lbill
