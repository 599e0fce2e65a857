#include "tailnet/tape.hpp"

#include <algorithm>
#include <cmath>

namespace tailnet {

namespace {

constexpr double kLogClamp = 1e-12;

void ensure_grad(Tensor& g, const Tensor& like) {
  if (g.size() == 0) {
    g = like.is_vector() ? Tensor::vector(like.rows()) : Tensor::matrix(like.rows(), like.cols());
  }
}

}  // namespace

Tape::Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size() - 1);
}

Tape::Var Tape::check(Var v) const {
  if (v < 0 || v >= size()) throw UsageError("tape var out of range");
  return v;
}

Tape::Var Tape::param(const Tensor& t) {
  Node n;
  n.ext = &t;
  n.needs_grad = true;
  return push(std::move(n));
}

Tape::Var Tape::constant_ref(const Tensor& t) {
  Node n;
  n.ext = &t;
  return push(std::move(n));
}

Tape::Var Tape::constant(Tensor t) {
  Node n;
  n.out = std::move(t);
  return push(std::move(n));
}

const Tensor& Tape::val(Var v) const { return node_val(nodes_[check(v)]); }

double Tape::scalar(Var v) const {
  const Tensor& t = val(v);
  if (!t.is_vector() || t.len() != 1) throw ShapeError("scalar() on " + t.shape_str());
  return t[0];
}

Tape::Var Tape::affine(Var W, Var x) { return affine(W, x, -1); }

Tape::Var Tape::affine(Var W, Var x, Var b) {
  const Tensor& tw = val(W);
  const Tensor& tx = val(x);
  if (tw.is_vector() || !tx.is_vector() || tw.cols() != tx.len())
    throw ShapeError("affine: " + tw.shape_str() + " . " + tx.shape_str());
  const int64_t m = tw.rows(), k = tw.cols();
  Tensor y = Tensor::vector(m);
  double* yd = y.mutable_data();
  const double* wd = tw.data();
  const double* xd = tx.data();
  for (int64_t i = 0; i < m; ++i) {
    const double* wrow = wd + i * k;
    double acc = 0;
    for (int64_t j = 0; j < k; ++j) acc += wrow[j] * xd[j];
    yd[i] = acc;
  }
  if (b >= 0) {
    const Tensor& tb = val(b);
    if (!tb.is_vector() || tb.len() != m)
      throw ShapeError("affine bias: " + tb.shape_str() + " vs rows " + std::to_string(m));
    const double* bd = tb.data();
    for (int64_t i = 0; i < m; ++i) yd[i] += bd[i];
  }
  Node n;
  n.op = Op::kAffine;
  n.a = W;
  n.b = x;
  n.c = b;
  n.out = std::move(y);
  n.needs_grad = nodes_[W].needs_grad || nodes_[x].needs_grad || (b >= 0 && nodes_[b].needs_grad);
  return push(std::move(n));
}

Tape::Var Tape::vecmat(Var x, Var W) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(W);
  if (tw.is_vector() || !tx.is_vector() || tw.rows() != tx.len())
    throw ShapeError("vecmat: " + tx.shape_str() + " . " + tw.shape_str());
  const int64_t m = tw.rows(), k = tw.cols();
  Tensor y = Tensor::vector(k);
  double* yd = y.mutable_data();
  const double* wd = tw.data();
  const double* xd = tx.data();
  for (int64_t i = 0; i < m; ++i) {
    const double xi = xd[i];
    const double* wrow = wd + i * k;
    for (int64_t j = 0; j < k; ++j) yd[j] += xi * wrow[j];
  }
  Node n;
  n.op = Op::kVecMat;
  n.a = x;
  n.b = W;
  n.out = std::move(y);
  n.needs_grad = nodes_[x].needs_grad || nodes_[W].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::row(Var M, int64_t r) {
  const Tensor& tm = val(M);
  if (tm.is_vector() || r < 0 || r >= tm.rows())
    throw ShapeError("row " + std::to_string(r) + " of " + tm.shape_str());
  const int64_t k = tm.cols();
  Tensor y = Tensor::vector(k);
  std::copy_n(tm.data() + r * k, k, y.mutable_data());
  Node n;
  n.op = Op::kRow;
  n.a = M;
  n.iaux = r;
  n.out = std::move(y);
  n.needs_grad = nodes_[M].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::sigmoid(Var v) {
  const Tensor& tv = val(v);
  if (tv.size() == 0) throw ShapeError("sigmoid on empty tensor");
  Tensor y = tv.is_vector() ? Tensor::vector(tv.rows()) : Tensor::matrix(tv.rows(), tv.cols());
  double* yd = y.mutable_data();
  const double* xd = tv.data();
  for (int64_t i = 0; i < tv.size(); ++i) yd[i] = 1.0 / (1.0 + std::exp(-xd[i]));
  Node n;
  n.op = Op::kSigmoid;
  n.a = v;
  n.out = std::move(y);
  n.needs_grad = nodes_[v].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::tanh(Var v) {
  const Tensor& tv = val(v);
  if (tv.size() == 0) throw ShapeError("tanh on empty tensor");
  Tensor y = tv.is_vector() ? Tensor::vector(tv.rows()) : Tensor::matrix(tv.rows(), tv.cols());
  double* yd = y.mutable_data();
  const double* xd = tv.data();
  for (int64_t i = 0; i < tv.size(); ++i) yd[i] = std::tanh(xd[i]);
  Node n;
  n.op = Op::kTanh;
  n.a = v;
  n.out = std::move(y);
  n.needs_grad = nodes_[v].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::softmax(Var v) {
  const Tensor& tv = val(v);
  if (!tv.is_vector() || tv.len() == 0) throw ShapeError("softmax on " + tv.shape_str());
  const int64_t k = tv.len();
  Tensor y = Tensor::vector(k);
  double* yd = y.mutable_data();
  const double* xd = tv.data();
  double mx = xd[0];
  for (int64_t i = 1; i < k; ++i) mx = std::max(mx, xd[i]);
  double z = 0;
  for (int64_t i = 0; i < k; ++i) {
    yd[i] = std::exp(xd[i] - mx);
    z += yd[i];
  }
  const double inv = 1.0 / z;
  for (int64_t i = 0; i < k; ++i) yd[i] *= inv;
  Node n;
  n.op = Op::kSoftmax;
  n.a = v;
  n.out = std::move(y);
  n.needs_grad = nodes_[v].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::hadamard(Var u, Var v) {
  const Tensor& tu = val(u);
  const Tensor& tv = val(v);
  if (!tu.same_shape(tv) || tu.size() == 0)
    throw ShapeError("hadamard: " + tu.shape_str() + " vs " + tv.shape_str());
  Tensor y = tu.is_vector() ? Tensor::vector(tu.rows()) : Tensor::matrix(tu.rows(), tu.cols());
  double* yd = y.mutable_data();
  const double* a = tu.data();
  const double* b = tv.data();
  for (int64_t i = 0; i < tu.size(); ++i) yd[i] = a[i] * b[i];
  Node n;
  n.op = Op::kHadamard;
  n.a = u;
  n.b = v;
  n.out = std::move(y);
  n.needs_grad = nodes_[u].needs_grad || nodes_[v].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::add(Var u, Var v) {
  const Tensor& tu = val(u);
  const Tensor& tv = val(v);
  if (!tu.same_shape(tv) || tu.size() == 0)
    throw ShapeError("add: " + tu.shape_str() + " vs " + tv.shape_str());
  Tensor y = tu.is_vector() ? Tensor::vector(tu.rows()) : Tensor::matrix(tu.rows(), tu.cols());
  double* yd = y.mutable_data();
  const double* a = tu.data();
  const double* b = tv.data();
  for (int64_t i = 0; i < tu.size(); ++i) yd[i] = a[i] + b[i];
  Node n;
  n.op = Op::kAdd;
  n.a = u;
  n.b = v;
  n.out = std::move(y);
  n.needs_grad = nodes_[u].needs_grad || nodes_[v].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::sub(Var u, Var v) {
  const Tensor& tu = val(u);
  const Tensor& tv = val(v);
  if (!tu.same_shape(tv) || tu.size() == 0)
    throw ShapeError("sub: " + tu.shape_str() + " vs " + tv.shape_str());
  Tensor y = tu.is_vector() ? Tensor::vector(tu.rows()) : Tensor::matrix(tu.rows(), tu.cols());
  double* yd = y.mutable_data();
  const double* a = tu.data();
  const double* b = tv.data();
  for (int64_t i = 0; i < tu.size(); ++i) yd[i] = a[i] - b[i];
  Node n;
  n.op = Op::kSub;
  n.a = u;
  n.b = v;
  n.out = std::move(y);
  n.needs_grad = nodes_[u].needs_grad || nodes_[v].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::concat(Var u, Var v) {
  const Tensor& tu = val(u);
  const Tensor& tv = val(v);
  if (!tu.is_vector() || !tv.is_vector())
    throw ShapeError("concat: " + tu.shape_str() + " vs " + tv.shape_str());
  Tensor y = Tensor::vector(tu.len() + tv.len());
  double* yd = y.mutable_data();
  std::copy_n(tu.data(), tu.len(), yd);
  std::copy_n(tv.data(), tv.len(), yd + tu.len());
  Node n;
  n.op = Op::kConcat;
  n.a = u;
  n.b = v;
  n.out = std::move(y);
  n.needs_grad = nodes_[u].needs_grad || nodes_[v].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::scale(Var u, Var s) {
  const Tensor& tu = val(u);
  const Tensor& ts = val(s);
  if (!ts.is_vector() || ts.len() != 1)
    throw ShapeError("scale factor must be a 1-vector, got " + ts.shape_str());
  if (tu.size() == 0) throw ShapeError("scale on empty tensor");
  const double f = ts[0];
  Tensor y = tu.is_vector() ? Tensor::vector(tu.rows()) : Tensor::matrix(tu.rows(), tu.cols());
  double* yd = y.mutable_data();
  const double* a = tu.data();
  for (int64_t i = 0; i < tu.size(); ++i) yd[i] = a[i] * f;
  Node n;
  n.op = Op::kScale;
  n.a = u;
  n.b = s;
  n.out = std::move(y);
  n.needs_grad = nodes_[u].needs_grad || nodes_[s].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::axpb(Var u, double a, double b) {
  const Tensor& tu = val(u);
  if (tu.size() == 0) throw ShapeError("axpb on empty tensor");
  Tensor y = tu.is_vector() ? Tensor::vector(tu.rows()) : Tensor::matrix(tu.rows(), tu.cols());
  double* yd = y.mutable_data();
  const double* xd = tu.data();
  for (int64_t i = 0; i < tu.size(); ++i) yd[i] = a * xd[i] + b;
  Node n;
  n.op = Op::kAxpb;
  n.a = u;
  n.f0 = a;
  n.f1 = b;
  n.out = std::move(y);
  n.needs_grad = nodes_[u].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::sum(Var u) {
  const Tensor& tu = val(u);
  if (tu.size() == 0) throw ShapeError("sum on empty tensor");
  double acc = 0;
  const double* xd = tu.data();
  for (int64_t i = 0; i < tu.size(); ++i) acc += xd[i];
  Tensor y = Tensor::vector(1);
  y.mutable_data()[0] = acc;
  Node n;
  n.op = Op::kSum;
  n.a = u;
  n.out = std::move(y);
  n.needs_grad = nodes_[u].needs_grad;
  return push(std::move(n));
}

Tape::Var Tape::bce_one_hot(Var p, int64_t target) {
  const Tensor& tp = val(p);
  if (!tp.is_vector() || tp.len() == 0) throw ShapeError("bce on " + tp.shape_str());
  if (target < 0 || target >= tp.len())
    throw UsageError("bce target " + std::to_string(target) + " out of range " + tp.shape_str());
  const double* pd = tp.data();
  double acc = 0;
  for (int64_t i = 0; i < tp.len(); ++i) {
    const double arg = (i == target) ? pd[i] : 1.0 - pd[i];
    acc -= std::log(std::clamp(arg, kLogClamp, 1.0 - kLogClamp));
  }
  Tensor y = Tensor::vector(1);
  y.mutable_data()[0] = acc;
  Node n;
  n.op = Op::kBce;
  n.a = p;
  n.iaux = target;
  n.out = std::move(y);
  n.needs_grad = nodes_[p].needs_grad;
  return push(std::move(n));
}

void Tape::run_backward(Var loss, std::vector<Tensor>& grads) {
  check(loss);
  const Tensor& lt = val(loss);
  if (!lt.is_vector() || lt.len() != 1)
    throw UsageError("backward requires a scalar loss, got " + lt.shape_str());
  if (backward_done_) throw UsageError("backward already run on this tape");
  backward_done_ = true;

  grads.assign(nodes_.size(), Tensor());
  grads[loss] = Tensor::vector(1);
  grads[loss].mutable_data()[0] = 1.0;

  for (Var i = loss; i >= 0; --i) {
    Node& n = nodes_[i];
    if (grads[i].size() == 0 || !n.needs_grad) continue;
    const double* g = grads[i].data();
    const int64_t gn = grads[i].size();

    auto want = [&](Var v) { return v >= 0 && nodes_[v].needs_grad; };
    auto gref = [&](Var v) -> Tensor& {
      ensure_grad(grads[v], node_val(nodes_[v]));
      return grads[v];
    };

    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAffine: {
        const Tensor& tw = node_val(nodes_[n.a]);
        const Tensor& tx = node_val(nodes_[n.b]);
        const int64_t m = tw.rows(), k = tw.cols();
        if (want(n.a)) {
          double* gw = gref(n.a).mutable_data();
          const double* xd = tx.data();
          for (int64_t i2 = 0; i2 < m; ++i2) {
            const double gi = g[i2];
            double* grow = gw + i2 * k;
            for (int64_t j = 0; j < k; ++j) grow[j] += gi * xd[j];
          }
        }
        if (want(n.b)) {
          double* gx = gref(n.b).mutable_data();
          const double* wd = tw.data();
          for (int64_t i2 = 0; i2 < m; ++i2) {
            const double gi = g[i2];
            const double* wrow = wd + i2 * k;
            for (int64_t j = 0; j < k; ++j) gx[j] += gi * wrow[j];
          }
        }
        if (n.c >= 0 && want(n.c)) {
          double* gb = gref(n.c).mutable_data();
          for (int64_t i2 = 0; i2 < m; ++i2) gb[i2] += g[i2];
        }
        break;
      }
      case Op::kVecMat: {
        const Tensor& tx = node_val(nodes_[n.a]);
        const Tensor& tw = node_val(nodes_[n.b]);
        const int64_t m = tw.rows(), k = tw.cols();
        if (want(n.a)) {
          double* gx = gref(n.a).mutable_data();
          const double* wd = tw.data();
          for (int64_t i2 = 0; i2 < m; ++i2) {
            const double* wrow = wd + i2 * k;
            double acc = 0;
            for (int64_t j = 0; j < k; ++j) acc += wrow[j] * g[j];
            gx[i2] += acc;
          }
        }
        if (want(n.b)) {
          double* gw = gref(n.b).mutable_data();
          const double* xd = tx.data();
          for (int64_t i2 = 0; i2 < m; ++i2) {
            const double xi = xd[i2];
            double* grow = gw + i2 * k;
            for (int64_t j = 0; j < k; ++j) grow[j] += xi * g[j];
          }
        }
        break;
      }
      case Op::kRow: {
        if (want(n.a)) {
          Tensor& gm = gref(n.a);
          double* grow = gm.mutable_data() + n.iaux * gm.cols();
          for (int64_t j = 0; j < gn; ++j) grow[j] += g[j];
        }
        break;
      }
      case Op::kSigmoid: {
        if (want(n.a)) {
          double* gx = gref(n.a).mutable_data();
          const double* y = n.out.data();
          for (int64_t j = 0; j < gn; ++j) gx[j] += g[j] * y[j] * (1.0 - y[j]);
        }
        break;
      }
      case Op::kTanh: {
        if (want(n.a)) {
          double* gx = gref(n.a).mutable_data();
          const double* y = n.out.data();
          for (int64_t j = 0; j < gn; ++j) gx[j] += g[j] * (1.0 - y[j] * y[j]);
        }
        break;
      }
      case Op::kSoftmax: {
        if (want(n.a)) {
          double* gx = gref(n.a).mutable_data();
          const double* y = n.out.data();
          double dot = 0;
          for (int64_t j = 0; j < gn; ++j) dot += g[j] * y[j];
          for (int64_t j = 0; j < gn; ++j) gx[j] += y[j] * (g[j] - dot);
        }
        break;
      }
      case Op::kHadamard: {
        const Tensor& tu = node_val(nodes_[n.a]);
        const Tensor& tv = node_val(nodes_[n.b]);
        if (want(n.a)) {
          double* gu = gref(n.a).mutable_data();
          const double* vd = tv.data();
          for (int64_t j = 0; j < gn; ++j) gu[j] += g[j] * vd[j];
        }
        if (want(n.b)) {
          double* gv = gref(n.b).mutable_data();
          const double* ud = tu.data();
          for (int64_t j = 0; j < gn; ++j) gv[j] += g[j] * ud[j];
        }
        break;
      }
      case Op::kAdd: {
        if (want(n.a)) {
          double* gu = gref(n.a).mutable_data();
          for (int64_t j = 0; j < gn; ++j) gu[j] += g[j];
        }
        if (want(n.b)) {
          double* gv = gref(n.b).mutable_data();
          for (int64_t j = 0; j < gn; ++j) gv[j] += g[j];
        }
        break;
      }
      case Op::kSub: {
        if (want(n.a)) {
          double* gu = gref(n.a).mutable_data();
          for (int64_t j = 0; j < gn; ++j) gu[j] += g[j];
        }
        if (want(n.b)) {
          double* gv = gref(n.b).mutable_data();
          for (int64_t j = 0; j < gn; ++j) gv[j] -= g[j];
        }
        break;
      }
      case Op::kConcat: {
        const int64_t la = node_val(nodes_[n.a]).len();
        if (want(n.a)) {
          double* gu = gref(n.a).mutable_data();
          for (int64_t j = 0; j < la; ++j) gu[j] += g[j];
        }
        if (want(n.b)) {
          double* gv = gref(n.b).mutable_data();
          for (int64_t j = la; j < gn; ++j) gv[j - la] += g[j];
        }
        break;
      }
      case Op::kScale: {
        const Tensor& tu = node_val(nodes_[n.a]);
        const double f = node_val(nodes_[n.b])[0];
        if (want(n.a)) {
          double* gu = gref(n.a).mutable_data();
          for (int64_t j = 0; j < gn; ++j) gu[j] += g[j] * f;
        }
        if (want(n.b)) {
          double* gs = gref(n.b).mutable_data();
          const double* ud = tu.data();
          double acc = 0;
          for (int64_t j = 0; j < gn; ++j) acc += g[j] * ud[j];
          gs[0] += acc;
        }
        break;
      }
      case Op::kAxpb: {
        if (want(n.a)) {
          double* gu = gref(n.a).mutable_data();
          for (int64_t j = 0; j < gn; ++j) gu[j] += g[j] * n.f0;
        }
        break;
      }
      case Op::kSum: {
        if (want(n.a)) {
          Tensor& gu = gref(n.a);
          double* gud = gu.mutable_data();
          for (int64_t j = 0; j < gu.size(); ++j) gud[j] += g[0];
        }
        break;
      }
      case Op::kBce: {
        if (want(n.a)) {
          const Tensor& tp = node_val(nodes_[n.a]);
          double* gp = gref(n.a).mutable_data();
          const double* pd = tp.data();
          const double g0 = g[0];
          for (int64_t j = 0; j < tp.len(); ++j) {
            // derivative is zero inside the clamped regions, matching the
            // piecewise forward
            if (j == n.iaux) {
              if (pd[j] > kLogClamp && pd[j] < 1.0 - kLogClamp) gp[j] += g0 * (-1.0 / pd[j]);
            } else {
              const double q = 1.0 - pd[j];
              if (q > kLogClamp && q < 1.0 - kLogClamp) gp[j] += g0 * (1.0 / q);
            }
          }
        }
        break;
      }
    }
  }
}

void Tape::backward(Var loss, std::span<const Var> wrt, std::span<Tensor* const> out) {
  if (wrt.size() != out.size()) throw UsageError("backward: wrt/out size mismatch");
  std::vector<Tensor> grads;
  run_backward(loss, grads);
  for (size_t i = 0; i < wrt.size(); ++i) {
    const Var v = check(wrt[i]);
    Tensor* dst = out[i];
    const Tensor& src_val = node_val(nodes_[v]);
    if (!dst->same_shape(src_val))
      throw ShapeError("backward out[" + std::to_string(i) + "]: " + dst->shape_str() + " vs " +
                       src_val.shape_str());
    if (grads[v].size() == 0) continue;  // parameter unused by this loss
    const double* s = grads[v].data();
    double* d = dst->mutable_data();
    for (int64_t j = 0; j < dst->size(); ++j) d[j] += s[j];
  }
}

std::vector<Tensor> Tape::backward_all(Var loss) {
  std::vector<Tensor> grads;
  run_backward(loss, grads);
  return grads;
}

}  // namespace tailnet
