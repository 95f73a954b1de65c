#pragma once

#include <cstdint>
#include <vector>

#include "defgate/net.hpp"

namespace defgate {

// Central-difference approximation of input_gradient, element by element:
// (sum(f(x + h e_i)) - sum(f(x - h e_i))) / (2h). The network function is
// evaluated in double precision so the estimate is limited by the O(h^2)
// truncation term, not by float32 rounding. Throws on h <= 0.
Tensor finite_difference_oracle(const Network& net, const Tensor& x, double h);

struct FdCheck {
  Tensor grad;                 // the central-difference estimate
  std::vector<std::uint8_t> kink;  // 1 where a relu/leaky pre-activation changed sign between x-h and x+h
};

// Oracle plus per-element kink flags. An element is marked when perturbing it
// by ±h flips the sign of any relu/leaky_relu pre-activation, which makes the
// two-sided difference cross a non-differentiable point.
FdCheck finite_difference_check(const Network& net, const Tensor& x, double h);

}  // namespace defgate
