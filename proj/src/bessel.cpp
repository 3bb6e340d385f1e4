#include "lbill/bessel.hpp"

#include <algorithm>
#include <cmath>

namespace lbill {

void bessel_j_sequence(double x, std::span<double> out) {
  if (out.empty()) return;
  std::fill(out.begin(), out.end(), 0.0);
  if (x == 0.0) {
    out[0] = 1.0;
    return;
  }
  const int n_max = static_cast<int>(out.size()) - 1;
  const double top = std::max<double>(n_max, x);
  int start = static_cast<int>(top) + 16 + static_cast<int>(std::sqrt(160.0 * top));
  start += start % 2;

  constexpr double big = 1e250;
  double above = 0.0;
  double current = 1e-280;
  double even_sum = 0.0;
  for (int n = start; n >= 1; --n) {
    const double below = 2.0 * n / x * current - above;
    above = current;
    current = below;
    const int order = n - 1;
    if (order <= n_max) out[order] = current;
    if (order > 0 && order % 2 == 0) even_sum += current;
    if (std::abs(current) > big) {
      current /= big;
      above /= big;
      even_sum /= big;
      for (int m = order; m <= n_max; ++m) out[m] /= big;
    }
  }
  const double norm = current + 2.0 * even_sum;
  for (double& v : out) v /= norm;
}

}  // namespace lbill
