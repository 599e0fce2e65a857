#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tailnet/fd_check.hpp"
#include "tailnet/model.hpp"
#include "tailnet/rng.hpp"

using namespace tailnet;

namespace {

ModelParams zero_params(int32_t n_items, int32_t d) {
  Rng rng(0);
  ModelParams p = ModelParams::init(n_items, d, rng);
  for (Tensor* t : p.tensors()) t->fill(0.0);
  return p;
}

std::vector<size_t> rank_desc(const Tensor& v) {
  std::vector<size_t> order(static_cast<size_t>(v.size()));
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (v[static_cast<int64_t>(a)] != v[static_cast<int64_t>(b)])
      return v[static_cast<int64_t>(a)] > v[static_cast<int64_t>(b)];
    return a < b;
  });
  return order;
}

// Independent scalar re-computation of the whole forward pass: plain loops
// over doubles, no tensors, no tape. Used as the oracle for the vectorized
// implementation.
namespace oracle {

using Vec = std::vector<double>;

Vec mat_vec(const Tensor& W, const Vec& x) {
  Vec y(static_cast<size_t>(W.rows()), 0.0);
  for (int64_t r = 0; r < W.rows(); ++r)
    for (int64_t c = 0; c < W.cols(); ++c)
      y[static_cast<size_t>(r)] += W.at(r, c) * x[static_cast<size_t>(c)];
  return y;
}

Vec concat(const Vec& a, const Vec& b) {
  Vec out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<Vec> encode(const ModelParams& p, const Session& prefix) {
  const auto d = static_cast<size_t>(p.d);
  std::vector<Vec> states;
  Vec v(d, 0.0);
  for (int32_t item : prefix) {
    Vec emb(d);
    for (size_t k = 0; k < d; ++k) emb[k] = p.E.at(item, static_cast<int64_t>(k));
    const Vec cat = concat(v, emb);
    Vec r = mat_vec(p.W_r, cat), z = mat_vec(p.W_z, cat);
    for (size_t k = 0; k < d; ++k) {
      r[k] = sigmoid(r[k]);
      z[k] = sigmoid(z[k]);
    }
    Vec rv(d);
    for (size_t k = 0; k < d; ++k) rv[k] = r[k] * v[k];
    Vec cand = mat_vec(p.W_h, concat(rv, emb));
    for (size_t k = 0; k < d; ++k) cand[k] = std::tanh(cand[k]);
    for (size_t k = 0; k < d; ++k) v[k] = (1.0 - z[k]) * v[k] + z[k] * cand[k];
    states.push_back(v);
  }
  return states;
}

// alpha_i = w0 . tanh(Wq q + Wk k_i + bias); returns sum_i alpha_i k_i.
Vec attention(const Tensor& w0, const Tensor& Wq, const Tensor& Wk, const Tensor& bias,
              const std::vector<Vec>& states) {
  const size_t d = states[0].size();
  Vec pooled(d, 0.0);
  const Vec q = mat_vec(Wq, states.back());
  for (const Vec& vi : states) {
    const Vec k = mat_vec(Wk, vi);
    double alpha = 0.0;
    for (size_t j = 0; j < d; ++j)
      alpha += w0.at(0, static_cast<int64_t>(j)) *
               std::tanh(q[j] + k[j] + bias[static_cast<int64_t>(j)]);
    for (size_t j = 0; j < d; ++j) pooled[j] += alpha * vi[j];
  }
  return pooled;
}

struct Result {
  Vec y;
  Vec c;
  double r_head = 0.5;
};

Result forward(const ModelParams& p, const std::vector<uint8_t>& tail, const Session& prefix,
               bool use_pm) {
  const std::vector<Vec> v = encode(p, prefix);

  const Vec pooled = attention(p.W0, p.W1, p.W2, p.b, v);
  const Vec cat = concat(v.back(), pooled);
  Vec c(static_cast<size_t>(p.n_items), 0.0);
  for (int64_t j = 0; j < p.n_items; ++j)
    for (int64_t k = 0; k < 2 * p.d; ++k)
      c[static_cast<size_t>(j)] += cat[static_cast<size_t>(k)] * p.W4.at(k, j);

  Result res;
  res.c = c;
  Vec scaled = c;
  if (use_pm) {
    std::vector<Vec> vte = v;
    for (size_t i = 0; i < prefix.size(); ++i)
      if (tail[static_cast<size_t>(prefix[i])])
        for (double& x : vte[i]) x += 1.0;
    const Vec pooled_m = attention(p.W0m, p.W1m, p.W2m, p.bm, vte);
    const Vec cat_m = concat(vte.back(), pooled_m);
    double sp = 0.0;
    for (int64_t k = 0; k < 2 * p.d; ++k) sp += cat_m[static_cast<size_t>(k)] * p.W3.at(k, 0);
    res.r_head = sigmoid(sp);
    for (int64_t j = 0; j < p.n_items; ++j)
      scaled[static_cast<size_t>(j)] *= tail[static_cast<size_t>(j)] ? (1.0 - res.r_head)
                                                                     : res.r_head;
  }
  double mx = *std::max_element(scaled.begin(), scaled.end()), total = 0.0;
  Vec y(scaled.size());
  for (size_t j = 0; j < y.size(); ++j) total += (y[j] = std::exp(scaled[j] - mx));
  for (double& x : y) x /= total;
  res.y = y;
  return res;
}

}  // namespace oracle

GradFn model_grad_fn(int32_t n_items, int32_t d, std::vector<uint8_t> flags, Session prefix,
                     int32_t target, bool use_pm) {
  return [=](std::span<const Tensor> ps, std::vector<Tensor>* grads) -> double {
    ModelParams mp;
    mp.n_items = n_items;
    mp.d = d;
    auto slots = mp.tensors();
    REQUIRE(ps.size() == slots.size());
    for (size_t i = 0; i < slots.size(); ++i) *slots[i] = ps[i];
    const TailNetModel model(std::move(mp), flags);

    Tape tape;
    const BoundParams bp = BoundParams::bind(tape, model.params(), true);
    const ForwardVars fw = model.forward(tape, bp, prefix, target, use_pm);
    if (grads) {
      grads->clear();
      std::vector<Tensor*> outs;
      for (const Tensor& p : ps) grads->push_back(zeros_like(p));
      for (Tensor& g : *grads) outs.push_back(&g);
      const std::vector<Tape::Var> wrt = bp.list();
      tape.backward(fw.loss, wrt, outs);
    }
    return tape.scalar(fw.loss);
  };
}

}  // namespace

TEST_CASE("one recurrence step with zero weights") {
  const int32_t d = 3;
  ModelParams p = zero_params(5, d);
  Tape tape;
  const BoundParams bp = BoundParams::bind(tape, p, false);

  // From a zero state: both gates sit at 1/2, candidate is zero, so the new
  // state stays exactly zero.
  Tape::Var v0 = tape.constant(Tensor::vector(d));
  Tape::Var v1 = gru_step(tape, bp, v0, tape.row(bp.E, 0));
  for (int k = 0; k < d; ++k) CHECK(tape.val(v1)[k] == 0.0);

  // From state u: the update gate blends half the old state with a zero
  // candidate.
  Tape::Var u = tape.constant(Tensor::from({0.4, -0.6, 1.0}));
  Tape::Var v2 = gru_step(tape, bp, u, tape.row(bp.E, 1));
  CHECK(tape.val(v2)[0] == doctest::Approx(0.2));
  CHECK(tape.val(v2)[1] == doctest::Approx(-0.3));
  CHECK(tape.val(v2)[2] == doctest::Approx(0.5));
}

TEST_CASE("one recurrence step matches the scalar oracle") {
  Rng rng(41);
  ModelParams p = ModelParams::init(6, 2, rng);
  const Session prefix = {3};
  Tape tape;
  const BoundParams bp = BoundParams::bind(tape, p, false);
  const auto states = encode_session(tape, bp, p, prefix);
  const auto expect = oracle::encode(p, prefix);
  REQUIRE(states.size() == 1);
  for (int k = 0; k < 2; ++k)
    CHECK(tape.val(states[0])[k] == doctest::Approx(expect[0][static_cast<size_t>(k)]).epsilon(1e-12));
}

TEST_CASE("session encoding folds causally from a zero state") {
  Rng rng(43);
  ModelParams p = ModelParams::init(8, 4, rng);
  Tape tape;
  const BoundParams bp = BoundParams::bind(tape, p, false);

  const Session s3 = {1, 5, 2};
  const Session s2 = {1, 5};
  const auto v3 = encode_session(tape, bp, p, s3);
  const auto v2 = encode_session(tape, bp, p, s2);
  REQUIRE(v3.size() == 3);
  REQUIRE(v2.size() == 2);
  // The first two states do not depend on the third click.
  for (size_t i = 0; i < 2; ++i)
    for (int k = 0; k < 4; ++k) CHECK(tape.val(v3[i])[k] == tape.val(v2[i])[k]);

  // Length-1 session: exactly one state, the fold base case.
  const auto v1 = encode_session(tape, bp, p, {1});
  REQUIRE(v1.size() == 1);
  for (int k = 0; k < 4; ++k) CHECK(tape.val(v1[0])[k] == tape.val(v3[0])[k]);

  CHECK_THROWS_AS(encode_session(tape, bp, p, {}), UsageError);
  CHECK_THROWS_AS(encode_session(tape, bp, p, {99}), UsageError);
}

TEST_CASE("zero weights keep every encoded state at zero") {
  ModelParams p = zero_params(5, 3);
  Tape tape;
  const BoundParams bp = BoundParams::bind(tape, p, false);
  for (const Tape::Var v : encode_session(tape, bp, p, {0, 1, 2, 3}))
    for (int k = 0; k < 3; ++k) CHECK(tape.val(v)[k] == 0.0);
}

TEST_CASE("tail-type encoding shifts tail states by one") {
  Tape tape;
  const std::vector<Tape::Var> v = {tape.constant(Tensor::from({0.1, 0.2})),
                                    tape.constant(Tensor::from({0.1, 0.2}))};
  const std::vector<uint8_t> flags = {0, 1};  // item 0 head, item 1 tail
  const auto out = tail_encode(tape, v, flags, {0, 1});
  CHECK(tape.val(out[0])[0] == doctest::Approx(0.1));
  CHECK(tape.val(out[0])[1] == doctest::Approx(0.2));
  CHECK(tape.val(out[1])[0] == doctest::Approx(1.1));
  CHECK(tape.val(out[1])[1] == doctest::Approx(1.2));

  // All-head sessions pass through untouched (the very same tape nodes).
  const auto same = tail_encode(tape, v, flags, {0, 0});
  CHECK(same[0] == v[0]);
  CHECK(same[1] == v[1]);
}

TEST_CASE("zeroed preference weights land exactly on a half/half split") {
  ModelParams p = zero_params(5, 3);
  Tape tape;
  const BoundParams bp = BoundParams::bind(tape, p, false);
  const std::vector<Tape::Var> v = {tape.constant(Tensor::from({0.3, -0.1, 0.2}))};
  const FactorVars f = preference_factors(tape, bp, v);
  CHECK(tape.scalar(f.r_head) == 0.5);
  CHECK(tape.scalar(f.r_tail) == 0.5);
}

TEST_CASE("preference factors always sum to one") {
  Rng rng(47);
  for (int trial = 0; trial < 30; ++trial) {
    ModelParams p = ModelParams::init(10, 4, rng);
    Tape tape;
    const BoundParams bp = BoundParams::bind(tape, p, false);
    Session prefix;
    const auto len = 1 + rng.below(5);
    for (size_t i = 0; i < len; ++i) prefix.push_back(static_cast<int32_t>(rng.below(10)));
    const auto v = encode_session(tape, bp, p, prefix);
    const FactorVars f = preference_factors(tape, bp, v);
    const double rh = tape.scalar(f.r_head), rt = tape.scalar(f.r_tail);
    CHECK(rh > 0.0);
    CHECK(rh < 1.0);
    CHECK(std::abs(rh + rt - 1.0) < 1e-12);
  }
}

TEST_CASE("preference factors match the scalar oracle on a two-step session") {
  Rng rng(53);
  ModelParams p = ModelParams::init(6, 2, rng);
  const std::vector<uint8_t> flags = {0, 1, 0, 1, 1, 1};
  const Session prefix = {1, 2};

  Tape tape;
  const BoundParams bp = BoundParams::bind(tape, p, false);
  const auto v = encode_session(tape, bp, p, prefix);
  const auto vte = tail_encode(tape, v, flags, prefix);
  const FactorVars f = preference_factors(tape, bp, vte);

  const auto expect = oracle::forward(p, flags, prefix, true);
  CHECK(tape.scalar(f.r_head) == doctest::Approx(expect.r_head).epsilon(1e-12));
}

TEST_CASE("zero scoring projection gives all-zero scores") {
  Rng rng(59);
  ModelParams p = ModelParams::init(7, 3, rng);
  p.W4.fill(0.0);
  Tape tape;
  const BoundParams bp = BoundParams::bind(tape, p, false);
  const auto v = encode_session(tape, bp, p, {1, 4});
  const Tape::Var c = pool_and_score(tape, bp, v);
  for (int j = 0; j < 7; ++j) CHECK(tape.val(c)[j] == 0.0);
}

TEST_CASE("attention pooling and scoring match the scalar oracle") {
  Rng rng(61);
  for (int trial = 0; trial < 10; ++trial) {
    ModelParams p = ModelParams::init(9, 3, rng);
    Session prefix;
    const auto len = 1 + rng.below(4);
    for (size_t i = 0; i < len; ++i) prefix.push_back(static_cast<int32_t>(rng.below(9)));

    Tape tape;
    const BoundParams bp = BoundParams::bind(tape, p, false);
    const auto v = encode_session(tape, bp, p, prefix);
    const Tape::Var c = pool_and_score(tape, bp, v);
    const auto expect = oracle::forward(p, std::vector<uint8_t>(9, 0), prefix, false);
    for (int j = 0; j < 9; ++j)
      CHECK(tape.val(c)[j] == doctest::Approx(expect.c[static_cast<size_t>(j)]).epsilon(1e-10));
  }
}

TEST_CASE("soft adjustment closed forms") {
  Tape tape;
  auto half = [&] { return tape.sigmoid(tape.constant(Tensor::from({0.0}))); };  // exactly 1/2
  FactorVars f;
  f.r_head = half();
  f.r_tail = tape.axpb(f.r_head, -1.0, 1.0);

  // Equal scores, one head and one tail item, both factors 1/2.
  Tape::Var y1 = soft_adjust(tape, tape.constant(Tensor::from({1.0, 1.0})), f,
                             tape.constant(Tensor::from({1.0, 0.0})),
                             tape.constant(Tensor::from({0.0, 1.0})));
  CHECK(tape.val(y1)[0] == doctest::Approx(0.5));
  CHECK(tape.val(y1)[1] == doctest::Approx(0.5));

  // Scores (2,1), both head, factor 1/2: softmax of (1, 0.5).
  Tape::Var y2 = soft_adjust(tape, tape.constant(Tensor::from({2.0, 1.0})), f,
                             tape.constant(Tensor::from({1.0, 1.0})),
                             tape.constant(Tensor::from({0.0, 0.0})));
  CHECK(tape.val(y2)[0] == doctest::Approx(0.6225).epsilon(1e-3));
  CHECK(tape.val(y2)[1] == doctest::Approx(0.3775).epsilon(1e-3));
}

TEST_CASE("equal factors leave the score ordering untouched") {
  Rng rng(67);
  Tape tape;
  FactorVars f;
  f.r_head = tape.sigmoid(tape.constant(Tensor::from({0.0})));
  f.r_tail = tape.axpb(f.r_head, -1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> c(12), hm(12), tm(12);
    for (size_t j = 0; j < 12; ++j) {
      c[j] = rng.uniform(-3, 3);
      hm[j] = rng.below(2) ? 1.0 : 0.0;
      tm[j] = 1.0 - hm[j];
    }
    Tape::Var y = soft_adjust(tape, tape.constant(Tensor::from(c)), f,
                              tape.constant(Tensor::from(hm)), tape.constant(Tensor::from(tm)));
    CHECK(rank_desc(tape.val(y)) == rank_desc(Tensor::from(c)));
  }
}

TEST_CASE("full forward matches the scalar oracle with and without adjustment") {
  Rng rng(71);
  for (int trial = 0; trial < 8; ++trial) {
    const int32_t n = 11, d = 3;
    ModelParams p = ModelParams::init(n, d, rng);
    std::vector<uint8_t> flags(n, 1);
    flags[0] = flags[1] = 0;
    Session prefix;
    const auto len = 1 + rng.below(5);
    for (size_t i = 0; i < len; ++i) prefix.push_back(static_cast<int32_t>(rng.below(n)));

    const TailNetModel model(std::move(p), flags);
    for (bool use_pm : {false, true}) {
      const auto got = model.score(prefix, use_pm);
      const auto expect = oracle::forward(model.params(), flags, prefix, use_pm);
      for (int j = 0; j < n; ++j)
        CHECK(got.y_hat[j] == doctest::Approx(expect.y[static_cast<size_t>(j)]).epsilon(1e-10));
      CHECK(got.r_head == doctest::Approx(use_pm ? expect.r_head : 0.5).epsilon(1e-12));
    }
  }
}

TEST_CASE("probabilities stay on the simplex") {
  Rng rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    const int32_t n = 15, d = 4;
    std::vector<uint8_t> flags(n, 1);
    for (int j = 0; j < 3; ++j) flags[static_cast<size_t>(j)] = 0;
    const TailNetModel model(ModelParams::init(n, d, rng), flags);
    Session prefix;
    const auto len = 1 + rng.below(6);
    for (size_t i = 0; i < len; ++i) prefix.push_back(static_cast<int32_t>(rng.below(n)));
    const auto s = model.score(prefix, trial % 2 == 0);
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      CHECK(s.y_hat[j] >= 0.0);
      total += s.y_hat[j];
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("soft adjustment preserves score order within each popularity class") {
  Rng rng(79);
  for (int trial = 0; trial < 20; ++trial) {
    const int32_t n = 15, d = 4;
    std::vector<uint8_t> flags(n);
    for (int j = 0; j < n; ++j) flags[static_cast<size_t>(j)] = j < 3 ? 0 : 1;
    const TailNetModel model(ModelParams::init(n, d, rng), flags);
    Session prefix;
    const auto len = 1 + rng.below(6);
    for (size_t i = 0; i < len; ++i) prefix.push_back(static_cast<int32_t>(rng.below(n)));
    const auto s = model.score(prefix, true);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (flags[static_cast<size_t>(i)] == flags[static_cast<size_t>(j)] &&
            s.c_hat[i] > s.c_hat[j])
          CHECK(s.y_hat[i] > s.y_hat[j]);
  }
}

TEST_CASE("neutral preference weights rank exactly like the unadjusted model") {
  Rng rng(83);
  ModelParams p = ModelParams::init(12, 4, rng);
  p.W0m.fill(0.0);
  p.W1m.fill(0.0);
  p.W2m.fill(0.0);
  p.bm.fill(0.0);
  p.W3.fill(0.0);
  std::vector<uint8_t> flags(12, 1);
  flags[0] = flags[1] = 0;
  const TailNetModel model(std::move(p), flags);
  const Session prefix = {2, 7, 0};
  const auto with = model.score(prefix, true);
  const auto without = model.score(prefix, false);
  CHECK(with.r_head == 0.5);
  CHECK(rank_desc(with.y_hat) == rank_desc(without.y_hat));
}

TEST_CASE("reverse-mode gradients of the full model match finite differences") {
  Rng rng(89);
  const int32_t n = 12, d = 4;
  std::vector<uint8_t> flags(n);
  for (int j = 0; j < n; ++j) flags[static_cast<size_t>(j)] = j < 2 ? 0 : 1;
  const Session prefix = {3, 0, 7, 3};

  for (bool use_pm : {true, false}) {
    ModelParams p = ModelParams::init(n, d, rng);
    std::vector<Tensor> params;
    for (const Tensor* t : std::as_const(p).tensors()) params.push_back(*t);
    const GradFn fn = model_grad_fn(n, d, flags, prefix, 5, use_pm);
    const FdResult r = fd_check(fn, params, 1e-5);
    CAPTURE(use_pm);
    CAPTURE(r.tensor_index);
    CAPTURE(r.elem_index);
    CAPTURE(r.analytic);
    CAPTURE(r.numeric);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("parameter initialization is seeded and shape-checked") {
  Rng a(5), b(5), c(6);
  ModelParams p1 = ModelParams::init(20, 6, a);
  ModelParams p2 = ModelParams::init(20, 6, b);
  ModelParams p3 = ModelParams::init(20, 6, c);
  p1.validate();

  bool all_equal = true, any_diff = false;
  auto t1 = std::as_const(p1).tensors(), t2 = std::as_const(p2).tensors(),
       t3 = std::as_const(p3).tensors();
  for (size_t i = 0; i < t1.size(); ++i) {
    for (int64_t k = 0; k < t1[i]->size(); ++k) {
      all_equal = all_equal && (*t1[i])[k] == (*t2[i])[k];
      any_diff = any_diff || (*t1[i])[k] != (*t3[i])[k];
      CHECK(std::abs((*t1[i])[k]) <= 1.0 / std::sqrt(6.0));
    }
  }
  CHECK(all_equal);
  CHECK(any_diff);
  CHECK(p1.b.all_finite());
  for (int64_t k = 0; k < p1.b.size(); ++k) CHECK(p1.b[k] == 0.0);

  ModelParams bad = std::move(p3);
  bad.W1 = Tensor::matrix(2, 2);
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}
