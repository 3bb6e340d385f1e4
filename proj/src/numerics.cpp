#include "lbill/numerics.hpp"

#include <unsupported/Eigen/SpecialFunctions>

#include <array>
#include <queue>
#include <thread>

namespace lbill {

namespace {

constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& other) const { return error < other.error; }
};

Panel kronrod_panel(const std::function<double(double)>& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kKronrodWeights[7];
  double gauss = fc * kGaussWeights[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kKronrodNodes[j];
    const double pair = f(center - dx) + f(center + dx);
    kronrod += kKronrodWeights[j] * pair;
    if (j % 2 == 1) gauss += kGaussWeights[j / 2] * pair;
  }
  kronrod *= half;
  gauss *= half;
  return {a, b, kronrod, std::abs(kronrod - gauss)};
}

}  // namespace

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b, double abs_tol,
                           double rel_tol, int max_intervals) {
  std::priority_queue<Panel> panels;
  Panel first = kronrod_panel(f, a, b);
  double total = first.value;
  double total_error = first.error;
  panels.push(first);
  int evaluations = 15;
  while (total_error > std::max(abs_tol, rel_tol * std::abs(total)) &&
         static_cast<int>(panels.size()) < max_intervals) {
    const Panel worst = panels.top();
    panels.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    const Panel left = kronrod_panel(f, worst.a, mid);
    const Panel right = kronrod_panel(f, mid, worst.b);
    evaluations += 30;
    total += left.value + right.value - worst.value;
    total_error += left.error + right.error - worst.error;
    panels.push(left);
    panels.push(right);
  }
  // Re-sum from scratch; the running total accumulates cancellation error.
  CompensatedSum<double> value;
  CompensatedSum<double> error;
  while (!panels.empty()) {
    value += panels.top().value;
    error += panels.top().error;
    panels.pop();
  }
  return {value.value(), error.value(), evaluations};
}

MinimizeResult brent_minimize(const std::function<double(double)>& f, double a, double b, double x_tol,
                              int max_iter) {
  constexpr double golden = 0.3819660112501051;
  double x = a + golden * (b - a);
  double w = x, v = x;
  double fx = f(x);
  double fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    const double mid = 0.5 * (a + b);
    const double tol1 = x_tol * std::abs(x) + 1e-14;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - mid) <= tol2 - 0.5 * (b - a)) return {x, fx, iter, true};
    bool golden_step = true;
    if (std::abs(e) > tol1) {
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double e_prev = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * e_prev) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = (mid >= x) ? tol1 : -tol1;
        golden_step = false;
      }
    }
    if (golden_step) {
      e = (x >= mid) ? a - x : b - x;
      d = golden * e;
    }
    const double u = (std::abs(d) >= tol1) ? x + d : x + (d > 0 ? tol1 : -tol1);
    const double fu = f(u);
    if (fu <= fx) {
      if (u >= x) a = x; else b = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  return {x, fx, max_iter, false};
}

SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                          const Eigen::VectorXd& step, double f_tol, int max_iter) {
  const Eigen::Index n = x0.size();
  SimplexResult best{x0, f(x0), 0, false};
  Eigen::VectorXd start = x0;
  int total_iter = 0;
  // Two passes: the second restarts from the first optimum to escape a collapsed simplex.
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<Eigen::VectorXd> simplex(n + 1, start);
    std::vector<double> values(n + 1);
    for (Eigen::Index i = 0; i < n; ++i) simplex[i + 1](i) += step(i);
    for (Eigen::Index i = 0; i <= n; ++i) values[i] = f(simplex[i]);
    std::vector<Eigen::Index> order(n + 1);
    bool converged = false;
    int iter = 0;
    for (; iter < max_iter; ++iter) {
      for (Eigen::Index i = 0; i <= n; ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](auto l, auto r) { return values[l] < values[r]; });
      const double f_best = values[order.front()];
      const double f_worst = values[order.back()];
      if (std::abs(f_worst - f_best) <= f_tol * (std::abs(f_best) + f_tol)) {
        converged = true;
        break;
      }
      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (Eigen::Index i = 0; i < n; ++i) centroid += simplex[order[i]];
      centroid /= static_cast<double>(n);
      const Eigen::Index worst = order.back();
      const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
      const double f_reflected = f(reflected);
      if (f_reflected < f_best) {
        const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
        const double f_expanded = f(expanded);
        if (f_expanded < f_reflected) {
          simplex[worst] = expanded;
          values[worst] = f_expanded;
        } else {
          simplex[worst] = reflected;
          values[worst] = f_reflected;
        }
      } else if (f_reflected < values[order[n - 1]]) {
        simplex[worst] = reflected;
        values[worst] = f_reflected;
      } else {
        const bool outside = f_reflected < values[worst];
        const Eigen::VectorXd contracted = outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                                                   : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
        const double f_contracted = f(contracted);
        if (f_contracted < std::min(f_reflected, values[worst])) {
          simplex[worst] = contracted;
          values[worst] = f_contracted;
        } else {
          const Eigen::VectorXd anchor = simplex[order.front()];
          for (Eigen::Index i = 1; i <= n; ++i) {
            simplex[order[i]] = anchor + 0.5 * (simplex[order[i]] - anchor);
            values[order[i]] = f(simplex[order[i]]);
          }
        }
      }
    }
    total_iter += iter;
    const auto best_it = std::min_element(values.begin(), values.end());
    const auto best_index = std::distance(values.begin(), best_it);
    if (*best_it <= best.value) {
      best.x = simplex[best_index];
      best.value = *best_it;
    }
    best.converged = converged;
    start = best.x;
  }
  best.iterations = total_iter;
  return best;
}

double gradient_norm(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x, double h) {
  double sq = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const double g = (f(xp) - f(xm)) / (2.0 * h);
    sq += g * g;
  }
  return std::sqrt(sq);
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(resolve_threads(threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> failures(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) body(i);
        } catch (...) {
          failures[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }
}

double mean(std::span<const double> x) {
  CompensatedSum<double> s;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s.value() / static_cast<double>(x.size());
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

LineFit linear_fit(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

double regularized_gamma_q(double a, double x) {
  if (x <= 0.0) return 1.0;
  return Eigen::numext::igammac(a, x);
}

double regularized_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return Eigen::numext::betainc(a, b, x);
}

double kolmogorov_survival(double t) {
  if (t <= 0.0) return 1.0;
  if (t < 1.0) {
    // Small-t form converges fast where the alternating series does not.
    const double c = std::numbers::pi * std::numbers::pi / (8.0 * t * t);
    double cdf = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double term = std::exp(-(2.0 * k - 1.0) * (2.0 * k - 1.0) * c);
      cdf += term;
      if (term < 1e-18) break;
    }
    return 1.0 - std::sqrt(2.0 * std::numbers::pi) / t * cdf;
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

double ks_pvalue(double d, std::size_t n) {
  const double rn = std::sqrt(static_cast<double>(n));
  return kolmogorov_survival((rn + 0.12 + 0.11 / rn) * d);
}

double ks_statistic(std::span<const double> sorted, const std::function<double(double)>& cdf) {
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace lbill
