#include "lbill/husimi.hpp"

#include <algorithm>

namespace lbill {

namespace {

// Samples inside the Gaussian window around q, with their signed offset
// s - q + mL and Gaussian-weighted value h u exp(-k x²/2).
struct WindowTerms {
  Eigen::ArrayXd offset;
  Eigen::ArrayXd weight;
};

WindowTerms window_terms(const EigenstateRecord& record, double q) {
  const int n = record.boundary_grid_size();
  const double length = record.perimeter;
  const double h = length / n;
  const double half_width = std::sqrt(2.0 * kGaussianCutoff / record.k);
  std::vector<double> offset, weight;
  for (int m = -kCoherentImages; m <= kCoherentImages; ++m) {
    for (int l = 0; l < n; ++l) {
      const double x = record.sample_arclength(l) - q + m * length;
      if (std::abs(x) > half_width) continue;
      offset.push_back(x);
      weight.push_back(h * record.u_samples[l] * std::exp(-0.5 * record.k * x * x));
    }
  }
  return {Eigen::Map<Eigen::ArrayXd>(offset.data(), static_cast<Eigen::Index>(offset.size())),
          Eigen::Map<Eigen::ArrayXd>(weight.data(), static_cast<Eigen::Index>(weight.size()))};
}

void require_normalized(const HusimiGrid& h, const char* what) {
  if (!h.normalized || std::abs(h.values.sum() - 1.0) > 1e-9) {
    throw DomainError(std::string(what) + ": Husimi grid is not normalized");
  }
}

}  // namespace

std::complex<double> coherent_overlap(const EigenstateRecord& record, double q, double p) {
  if (record.u_samples.empty()) throw DomainError("coherent_overlap: empty boundary function");
  const WindowTerms terms = window_terms(record, q);
  std::complex<double> sum = 0.0;
  for (Eigen::Index i = 0; i < terms.offset.size(); ++i) {
    sum += terms.weight(i) * std::polar(1.0, record.k * p * terms.offset(i));
  }
  return sum;
}

HusimiGrid husimi_grid(const EigenstateRecord& record, GridDims dims, int threads) {
  if (dims.n_q <= 0 || dims.n_p <= 0) throw DomainError("husimi_grid: grid dimensions must be positive");
  if (record.u_samples.empty()) throw DomainError("husimi_grid: empty boundary function");
  HusimiGrid grid;
  grid.k = record.k;
  grid.lambda = record.lambda;
  grid.values.resize(dims.n_q, dims.n_p);
  const double dp = 2.0 / dims.n_p;
  const double p0 = -1.0 + 0.5 * dp;

  parallel_for(static_cast<std::size_t>(dims.n_q), threads, [&](std::size_t i) {
    const double q = (i + 0.5) * record.perimeter / dims.n_q;
    const WindowTerms terms = window_terms(record, q);
    // Walk p upward by multiplying each phase with exp(i k Δp x).
    Eigen::ArrayXcd phase(terms.offset.size());
    Eigen::ArrayXcd step(terms.offset.size());
    for (Eigen::Index l = 0; l < terms.offset.size(); ++l) {
      phase(l) = terms.weight(l) * std::polar(1.0, record.k * p0 * terms.offset(l));
      step(l) = std::polar(1.0, record.k * dp * terms.offset(l));
    }
    for (int j = 0; j < dims.n_p; ++j) {
      grid.values(static_cast<Eigen::Index>(i), j) = std::norm(phase.sum());
      phase *= step;
    }
  });

  const double total = grid.values.sum();
  if (!(total > 0.0)) throw NumericalError("husimi_grid: density vanishes on the grid");
  grid.values /= total;
  grid.normalized = true;
  return grid;
}

double entropy_A(const HusimiGrid& h) {
  require_normalized(h, "entropy_A");
  CompensatedSum<double> entropy;
  for (Eigen::Index i = 0; i < h.values.size(); ++i) {
    const double v = h.values.data()[i];
    if (v > 0.0) entropy += -v * std::log(v);
  }
  return std::exp(entropy.value()) / static_cast<double>(h.cells());
}

double nipr(const HusimiGrid& h) {
  require_normalized(h, "nipr");
  return 1.0 / (static_cast<double>(h.cells()) * h.values.square().sum());
}

double overlap_index(const HusimiGrid& h, const ChaoticGrid& k) {
  require_normalized(h, "overlap_index");
  if (!(h.dims() == k.dims())) {
    throw DimensionMismatch("overlap_index: Husimi grid " + std::to_string(h.dims().n_q) + "x" +
                            std::to_string(h.dims().n_p) + " vs chaotic grid " + std::to_string(k.dims().n_q) + "x" +
                            std::to_string(k.dims().n_p));
  }
  return (h.values * k.cells.cast<double>()).sum();
}

StateClass classify(double m, double m_t) { return m >= m_t ? StateClass::chaotic : StateClass::regular; }

double classical_threshold(std::span<const double> m_values, double rho1) {
  if (m_values.empty()) throw InsufficientData("classical_threshold: no overlap indices");
  if (!(rho1 >= 0.0 && rho1 <= 1.0)) throw ParameterOutOfRange("classical_threshold: rho1 must lie in [0, 1]");
  std::vector<double> sorted(m_values.begin(), m_values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  const auto regular = static_cast<std::size_t>(std::llround(rho1 * static_cast<double>(n)));
  if (regular == 0) return std::nextafter(sorted.front(), -2.0);
  if (regular == n) return std::nextafter(sorted.back(), 2.0);
  return 0.5 * (sorted[regular - 1] + sorted[regular]);
}

LocalizationRecord localize(const HusimiGrid& h, const ChaoticGrid& k, double m_t) {
  LocalizationRecord r;
  r.k = h.k;
  r.a = entropy_A(h);
  r.a_normalized = r.a / k.chi_c;
  r.nipr = nipr(h);
  r.m = overlap_index(h, k);
  r.classification = classify(r.m, m_t);
  return r;
}

std::vector<MeasurePair> window_averages(std::span<const LocalizationRecord> records, std::size_t group) {
  if (group == 0) throw DomainError("window_averages: group size must be positive");
  std::vector<MeasurePair> out;
  MeasurePair acc;
  std::size_t count = 0;
  for (const auto& r : records) {
    if (r.classification != StateClass::chaotic) continue;
    acc.a += r.a;
    acc.nipr += r.nipr;
    if (++count == group) {
      out.push_back({acc.a / group, acc.nipr / group});
      acc = {};
      count = 0;
    }
  }
  return out;
}

}  // namespace lbill
