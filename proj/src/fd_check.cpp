#include "tailnet/fd_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "tailnet/errors.hpp"

namespace tailnet {

namespace {
// Multiplier on the single-rounding bound eps*|L|, covering error
// accumulation across the forward pass's reduction chain. Measured
// difference noise on deep closures stays a few times the single-rounding
// bound; 16 leaves comfortable headroom while remaining far below the
// footprint of any genuine gradient defect.
constexpr double kNoiseAllowance = 16.0;
}  // namespace

FdResult fd_check(const GradFn& fn, std::vector<Tensor> params, double h, double tolerance) {
  std::vector<Tensor> analytic;
  fn(params, &analytic);
  if (analytic.size() != params.size()) throw UsageError("fd_check: gradient count mismatch");

  FdResult worst;
  for (size_t p = 0; p < params.size(); ++p) {
    if (!analytic[p].same_shape(params[p]))
      throw ShapeError("fd_check: gradient shape " + analytic[p].shape_str() +
                       " vs parameter " + params[p].shape_str());
    double* data = params[p].mutable_data();
    for (int64_t k = 0; k < params[p].size(); ++k) {
      const double saved = data[k];
      data[k] = saved + h;
      const double lp = fn(params, nullptr);
      data[k] = saved - h;
      const double lm = fn(params, nullptr);
      data[k] = saved;
      const double num = (lp - lm) / (2.0 * h);
      const double ana = analytic[p][k];
      const double noise = kNoiseAllowance * std::numeric_limits<double>::epsilon() *
                           (std::abs(lp) + std::abs(lm)) / (2.0 * h);
      const double rel = std::abs(ana - num) /
                         std::max({1e-8, std::abs(ana) + std::abs(num), noise / tolerance});
      if (rel > worst.max_rel_error) {
        worst = {rel, p, k, ana, num};
      }
    }
  }
  return worst;
}

}  // namespace tailnet
