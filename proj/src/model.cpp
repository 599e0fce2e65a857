#include "tailnet/model.hpp"

#include <cmath>

namespace tailnet {

ModelParams ModelParams::init(int32_t n_items, int32_t d, Rng& rng) {
  if (n_items < 2) throw UsageError("model needs at least 2 items");
  if (d < 1) throw UsageError("embedding width must be positive");
  const double s = 1.0 / std::sqrt(static_cast<double>(d));

  ModelParams p;
  p.n_items = n_items;
  p.d = d;
  p.E = Tensor::uniform(n_items, d, -s, s, rng);
  p.W_r = Tensor::uniform(d, 2 * d, -s, s, rng);
  p.W_z = Tensor::uniform(d, 2 * d, -s, s, rng);
  p.W_h = Tensor::uniform(d, 2 * d, -s, s, rng);
  p.W0 = Tensor::uniform(1, d, -s, s, rng);
  p.W1 = Tensor::uniform(d, d, -s, s, rng);
  p.W2 = Tensor::uniform(d, d, -s, s, rng);
  p.b = Tensor::vector(d);
  p.W4 = Tensor::uniform(2 * d, n_items, -s, s, rng);
  p.W0m = Tensor::uniform(1, d, -s, s, rng);
  p.W1m = Tensor::uniform(d, d, -s, s, rng);
  p.W2m = Tensor::uniform(d, d, -s, s, rng);
  p.bm = Tensor::vector(d);
  p.W3 = Tensor::uniform(2 * d, 1, -s, s, rng);
  return p;
}

std::vector<Tensor*> ModelParams::tensors() {
  return {&E, &W_r, &W_z, &W_h, &W0, &W1, &W2, &b, &W4, &W0m, &W1m, &W2m, &bm, &W3};
}

std::vector<const Tensor*> ModelParams::tensors() const {
  return {&E, &W_r, &W_z, &W_h, &W0, &W1, &W2, &b, &W4, &W0m, &W1m, &W2m, &bm, &W3};
}

const std::vector<std::string>& ModelParams::tensor_names() {
  static const std::vector<std::string> names = {"E",  "W_r", "W_z", "W_h", "W0",  "W1",  "W2",
                                                 "b",  "W4",  "W0m", "W1m", "W2m", "bm",  "W3"};
  return names;
}

void ModelParams::validate() const {
  auto expect = [](const Tensor& t, int64_t rows, int64_t cols, const std::string& name) {
    const bool ok = cols == 0 ? (t.is_vector() && t.rows() == rows)
                              : (!t.is_vector() && t.rows() == rows && t.cols() == cols);
    if (!ok)
      throw ShapeError("tensor " + name + " has shape " + t.shape_str() + ", expected " +
                       (cols == 0 ? "(" + std::to_string(rows) + ")"
                                  : "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")"));
  };
  if (n_items < 2 || d < 1) throw ShapeError("bad model dimensions");
  expect(E, n_items, d, "E");
  expect(W_r, d, 2 * d, "W_r");
  expect(W_z, d, 2 * d, "W_z");
  expect(W_h, d, 2 * d, "W_h");
  expect(W0, 1, d, "W0");
  expect(W1, d, d, "W1");
  expect(W2, d, d, "W2");
  expect(b, d, 0, "b");
  expect(W4, 2 * d, n_items, "W4");
  expect(W0m, 1, d, "W0m");
  expect(W1m, d, d, "W1m");
  expect(W2m, d, d, "W2m");
  expect(bm, d, 0, "bm");
  expect(W3, 2 * d, 1, "W3");
  for (const Tensor* t : tensors())
    if (!t->all_finite()) throw ShapeError("non-finite model parameter");
}

BoundParams BoundParams::bind(Tape& tape, const ModelParams& p, bool trainable) {
  auto reg = [&](const Tensor& t) { return trainable ? tape.param(t) : tape.constant_ref(t); };
  BoundParams v{};
  v.E = reg(p.E);
  v.W_r = reg(p.W_r);
  v.W_z = reg(p.W_z);
  v.W_h = reg(p.W_h);
  v.W0 = reg(p.W0);
  v.W1 = reg(p.W1);
  v.W2 = reg(p.W2);
  v.b = reg(p.b);
  v.W4 = reg(p.W4);
  v.W0m = reg(p.W0m);
  v.W1m = reg(p.W1m);
  v.W2m = reg(p.W2m);
  v.bm = reg(p.bm);
  v.W3 = reg(p.W3);
  return v;
}

std::vector<Tape::Var> BoundParams::list() const {
  return {E, W_r, W_z, W_h, W0, W1, W2, b, W4, W0m, W1m, W2m, bm, W3};
}

Tape::Var gru_step(Tape& tape, const BoundParams& p, Tape::Var v_prev, Tape::Var emb) {
  const Tape::Var cat = tape.concat(v_prev, emb);
  const Tape::Var r = tape.sigmoid(tape.affine(p.W_r, cat));
  const Tape::Var z = tape.sigmoid(tape.affine(p.W_z, cat));
  const Tape::Var gated = tape.concat(tape.hadamard(r, v_prev), emb);
  const Tape::Var v_cand = tape.tanh(tape.affine(p.W_h, gated));
  // v = (1 - z) . v_prev + z . v_cand
  return tape.add(tape.sub(v_prev, tape.hadamard(z, v_prev)), tape.hadamard(z, v_cand));
}

std::vector<Tape::Var> encode_session(Tape& tape, const BoundParams& p,
                                      const ModelParams& dims, const Session& prefix) {
  if (prefix.empty()) throw UsageError("cannot encode an empty session");
  std::vector<Tape::Var> v;
  v.reserve(prefix.size());
  Tape::Var state = tape.constant(Tensor::vector(dims.d));  // v_0 = 0
  for (int32_t item : prefix) {
    if (item < 0 || item >= dims.n_items)
      throw UsageError("session item index " + std::to_string(item) + " outside catalog of " +
                       std::to_string(dims.n_items));
    state = gru_step(tape, p, state, tape.row(p.E, item));
    v.push_back(state);
  }
  return v;
}

std::vector<Tape::Var> tail_encode(Tape& tape, const std::vector<Tape::Var>& v,
                                   const std::vector<uint8_t>& tail_flags,
                                   const Session& prefix) {
  if (v.size() != prefix.size()) throw UsageError("hidden states do not align with session");
  std::vector<Tape::Var> out;
  out.reserve(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    const bool tail = tail_flags[static_cast<size_t>(prefix[i])] != 0;
    out.push_back(tail ? tape.axpb(v[i], 1.0, 1.0) : v[i]);
  }
  return out;
}

namespace {

// Shared attention shape: alpha_i = w0 . tanh(Wq q + Wk k_i + bias), then
// pool = sum_i alpha_i k_i with q = last state and k = all states.
Tape::Var attention_pool(Tape& tape, Tape::Var w0, Tape::Var Wq, Tape::Var Wk, Tape::Var bias,
                         const std::vector<Tape::Var>& states) {
  const Tape::Var q_proj = tape.affine(Wq, states.back(), bias);
  Tape::Var pooled = -1;
  for (const Tape::Var vi : states) {
    const Tape::Var act = tape.tanh(tape.add(q_proj, tape.affine(Wk, vi)));
    const Tape::Var alpha = tape.affine(w0, act);  // 1-vector
    const Tape::Var term = tape.scale(vi, alpha);
    pooled = pooled < 0 ? term : tape.add(pooled, term);
  }
  return pooled;
}

}  // namespace

FactorVars preference_factors(Tape& tape, const BoundParams& p,
                              const std::vector<Tape::Var>& v_te) {
  if (v_te.empty()) throw UsageError("preference_factors needs at least one state");
  const Tape::Var pooled = attention_pool(tape, p.W0m, p.W1m, p.W2m, p.bm, v_te);
  const Tape::Var s_p = tape.vecmat(tape.concat(v_te.back(), pooled), p.W3);  // 1-vector
  FactorVars f;
  f.r_head = tape.sigmoid(s_p);
  f.r_tail = tape.axpb(f.r_head, -1.0, 1.0);
  return f;
}

Tape::Var pool_and_score(Tape& tape, const BoundParams& p, const std::vector<Tape::Var>& v) {
  if (v.empty()) throw UsageError("pool_and_score needs at least one state");
  const Tape::Var pooled = attention_pool(tape, p.W0, p.W1, p.W2, p.b, v);
  return tape.vecmat(tape.concat(v.back(), pooled), p.W4);
}

Tape::Var soft_adjust(Tape& tape, Tape::Var c_hat, const FactorVars& f, Tape::Var head_mask,
                      Tape::Var tail_mask) {
  const Tape::Var r = tape.add(tape.scale(head_mask, f.r_head), tape.scale(tail_mask, f.r_tail));
  return tape.softmax(tape.hadamard(c_hat, r));
}

TailNetModel::TailNetModel(ModelParams params, std::vector<uint8_t> tail_flags)
    : params_(std::move(params)), tail_flags_(std::move(tail_flags)) {
  params_.validate();
  if (static_cast<int32_t>(tail_flags_.size()) != params_.n_items)
    throw UsageError("tail flags do not cover the catalog");
  head_mask_ = Tensor::vector(params_.n_items);
  tail_mask_ = Tensor::vector(params_.n_items);
  for (int32_t i = 0; i < params_.n_items; ++i) {
    head_mask_.mutable_data()[i] = tail_flags_[static_cast<size_t>(i)] ? 0.0 : 1.0;
    tail_mask_.mutable_data()[i] = tail_flags_[static_cast<size_t>(i)] ? 1.0 : 0.0;
  }
}

ForwardVars TailNetModel::forward(Tape& tape, const BoundParams& p, const Session& prefix,
                                  int32_t target, bool use_pm) const {
  ForwardVars out;
  out.v = encode_session(tape, p, params_, prefix);
  out.c_hat = pool_and_score(tape, p, out.v);
  if (use_pm) {
    const std::vector<Tape::Var> v_te = tail_encode(tape, out.v, tail_flags_, prefix);
    out.factors = preference_factors(tape, p, v_te);
    out.y_hat = soft_adjust(tape, out.c_hat, out.factors, tape.constant_ref(head_mask_),
                            tape.constant_ref(tail_mask_));
  } else {
    out.y_hat = tape.softmax(out.c_hat);
  }
  if (target >= 0) {
    if (target >= params_.n_items)
      throw UsageError("target index " + std::to_string(target) + " outside catalog");
    out.loss = tape.bce_one_hot(out.y_hat, target);
  }
  return out;
}

TailNetModel::Scores TailNetModel::score(const Session& prefix, bool use_pm) const {
  Tape tape;
  const BoundParams p = BoundParams::bind(tape, params_, false);
  const ForwardVars fw = forward(tape, p, prefix, -1, use_pm);
  Scores s;
  s.y_hat = tape.val(fw.y_hat);
  s.c_hat = tape.val(fw.c_hat);
  if (fw.factors.r_head >= 0) {
    s.r_head = tape.scalar(fw.factors.r_head);
    s.r_tail = tape.scalar(fw.factors.r_tail);
  }
  return s;
}

}  // namespace tailnet
