#pragma once

#include <functional>
#include <span>
#include <vector>

#include "tailnet/tensor.hpp"

namespace tailnet {

// A differentiable scalar function of a parameter list. When grads_out is
// non-null the call must also fill one gradient tensor per parameter
// (same shapes, same order).
using GradFn = std::function<double(std::span<const Tensor>, std::vector<Tensor>* grads_out)>;

struct FdResult {
  double max_rel_error = 0.0;
  size_t tensor_index = 0;
  int64_t elem_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of fn's reported gradients: perturbs every entry
// of every parameter by +-h and compares (L(x+h)-L(x-h))/2h against the
// analytic gradient. Relative error is |a-b| / max(1e-8, |a|+|b|).
//
// The difference quotient carries irreducible double-precision rounding
// noise of roughly eps * (|L(x+h)| + |L(x-h)|) / 2h: a coordinate whose true
// derivative lies near or below that level cannot be certified to any
// relative tolerance by this oracle even when the analytic gradient is
// exact. The denominator therefore also floors at (noise allowance) /
// tolerance, which degrades such coordinates to an absolute-consistency
// check (|a-b| within rounding noise of zero) instead of amplifying noise
// into a spurious relative error. Real defects still register: they move
// the quotient by the gradient's scale, orders of magnitude above rounding
// noise. Coordinates with resolvable derivatives are unaffected by the
// floor and are held to the plain relative formula.
FdResult fd_check(const GradFn& fn, std::vector<Tensor> params, double h = 1e-5,
                  double tolerance = 1e-4);

}  // namespace tailnet
