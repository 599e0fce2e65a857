#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tailnet/tensor.hpp"

namespace tailnet {

// Record of primitive applications over tensors. Values are computed
// eagerly as operations are recorded; backward() replays the record in
// reverse and accumulates exact gradients. One tape per forward pass,
// backward at most once.
//
// Leaves come in two flavors: param() borrows an external tensor and
// requires a gradient; constant()/constant_ref() carry no gradient.
// Borrowed tensors must outlive the tape.
class Tape {
 public:
  using Var = int32_t;

  Var param(const Tensor& t);
  Var constant_ref(const Tensor& t);
  Var constant(Tensor t);

  // y = W·x (+ b). W: m x n, x: n, b: m.
  Var affine(Var W, Var x);
  Var affine(Var W, Var x, Var b);
  // y = xᵀ·W. x: m, W: m x n, y: n.
  Var vecmat(Var x, Var W);
  // Row r of a matrix, as a vector.
  Var row(Var M, int64_t r);

  Var sigmoid(Var v);
  Var tanh(Var v);
  Var softmax(Var v);  // max-subtracted

  Var hadamard(Var u, Var v);
  Var add(Var u, Var v);
  Var sub(Var u, Var v);
  Var concat(Var u, Var v);
  // u scaled by the single entry of s.
  Var scale(Var u, Var s);
  // a·u + b elementwise, constants a and b.
  Var axpb(Var u, double a, double b);
  Var sum(Var u);

  // L = -sum_i [ y_i·log p_i + (1-y_i)·log(1-p_i) ] with y one-hot at
  // target; log arguments clamped to [1e-12, 1-1e-12]. Returns a 1-vector.
  Var bce_one_hot(Var p, int64_t target);

  const Tensor& val(Var v) const;
  double scalar(Var v) const;  // value of a 1-vector
  int32_t size() const { return static_cast<int32_t>(nodes_.size()); }

  // Reverse sweep from a scalar loss. Gradients for the vars listed in
  // `wrt` are accumulated (+=) into the matching `out` tensors, which must
  // already have the right shapes. Gradients of a var used several times
  // are summed across uses.
  void backward(Var loss, std::span<const Var> wrt, std::span<Tensor* const> out);

  // Convenience for tests: gradients indexed by Var (empty tensor where no
  // gradient exists).
  std::vector<Tensor> backward_all(Var loss);

 private:
  enum class Op : uint8_t {
    kLeaf, kAffine, kVecMat, kRow, kSigmoid, kTanh, kSoftmax,
    kHadamard, kAdd, kSub, kConcat, kScale, kAxpb, kSum, kBce
  };

  struct Node {
    Op op = Op::kLeaf;
    Var a = -1, b = -1, c = -1;
    Tensor out;                   // owned value (unused for borrowed leaves)
    const Tensor* ext = nullptr;  // borrowed leaf value
    bool needs_grad = false;
    int64_t iaux = 0;   // row index / loss target
    double f0 = 0;      // axpb coefficients
    double f1 = 0;
  };

  const Tensor& node_val(const Node& n) const { return n.ext ? *n.ext : n.out; }
  Var push(Node n);
  Var check(Var v) const;
  void run_backward(Var loss, std::vector<Tensor>& grads);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace tailnet
