#ifndef LBILL_BESSEL_HPP
#define LBILL_BESSEL_HPP

#include <span>

namespace lbill {

/// J_0(x) .. J_{out.size()-1}(x) for x >= 0 by Miller's backward recurrence,
/// normalized with J_0 + 2 Σ J_{2m} = 1. Orders far beyond x underflow to 0.
void bessel_j_sequence(double x, std::span<double> out);

}  // namespace lbill

#endif  // LBILL_BESSEL_HPP
