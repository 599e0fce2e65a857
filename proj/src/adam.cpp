#include "tailnet/adam.hpp"

#include <cmath>

namespace tailnet {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
}  // namespace

AdamState AdamState::init(const std::vector<const Tensor*>& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const Tensor* p : params) {
    st.m.push_back(zeros_like(*p));
    st.v.push_back(zeros_like(*p));
  }
  return st;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr, double l2) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw UsageError("adam_step: parameter/gradient/state count mismatch");

  ++state.step;
  state.beta1_pow *= kBeta1;
  state.beta2_pow *= kBeta2;
  const double m_corr = 1.0 / (1.0 - state.beta1_pow);
  const double v_corr = 1.0 / (1.0 - state.beta2_pow);

  for (size_t t = 0; t < params.size(); ++t) {
    if (!params[t]->same_shape(grads[t]))
      throw ShapeError("adam_step: gradient shape " + grads[t].shape_str() +
                       " vs parameter " + params[t]->shape_str());
    double* p = params[t]->mutable_data();
    double* m = state.m[t].mutable_data();
    double* v = state.v[t].mutable_data();
    const double* g = grads[t].data();
    const int64_t n = params[t]->size();
    for (int64_t i = 0; i < n; ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      const double m_hat = m[i] * m_corr;
      const double v_hat = v[i] * v_corr;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + kEps) + lr * l2 * p[i];
    }
  }
}

}  // namespace tailnet
