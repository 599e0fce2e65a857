#pragma once

#include <string>
#include <vector>

#include "tailnet/catalog.hpp"
#include "tailnet/rng.hpp"
#include "tailnet/tape.hpp"
#include "tailnet/tensor.hpp"

namespace tailnet {

// Every learnable tensor of the model. The declared order below is THE
// canonical order: gradients, optimizer state, and checkpoint sections all
// follow it.
struct ModelParams {
  int32_t n_items = 0;
  int32_t d = 0;

  Tensor E;              // n_items x d  item embeddings
  Tensor W_r, W_z, W_h;  // d x 2d       GRU gate weights over [v_prev; emb]
  Tensor W0;             // 1 x d        main attention readout
  Tensor W1, W2;         // d x d        main attention projections (last state, each state)
  Tensor b;              // d            main attention bias
  Tensor W4;             // 2d x n_items scoring projection
  Tensor W0m;            // 1 x d        preference attention readout
  Tensor W1m, W2m;       // d x d        preference attention projections
  Tensor bm;             // d            preference attention bias
  Tensor W3;             // 2d x 1       preference squash

  // Weights uniform on [-1/sqrt(d), +1/sqrt(d)], biases zero, drawn in
  // declared order so a seed pins the whole initialization.
  static ModelParams init(int32_t n_items, int32_t d, Rng& rng);

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  static const std::vector<std::string>& tensor_names();

  // Shape consistency with (n_items, d); throws ShapeError otherwise.
  void validate() const;
};

// Tape handles for one registration of the parameters. Trainable
// registrations receive gradients; frozen ones are plain constants.
struct BoundParams {
  Tape::Var E, W_r, W_z, W_h, W0, W1, W2, b, W4, W0m, W1m, W2m, bm, W3;

  static BoundParams bind(Tape& tape, const ModelParams& p, bool trainable);
  // Vars in declared parameter order.
  std::vector<Tape::Var> list() const;
};

// Preference factors: complementary multipliers for head and tail scores.
struct FactorVars {
  Tape::Var r_head = -1;
  Tape::Var r_tail = -1;
};

// Handles to the intermediates of one forward pass.
struct ForwardVars {
  std::vector<Tape::Var> v;  // hidden states v_1..v_t
  FactorVars factors;        // set only when the preference mechanism ran
  Tape::Var c_hat = -1;      // n_items raw scores
  Tape::Var y_hat = -1;      // n_items probabilities
  Tape::Var loss = -1;       // set only when a target was given
};

// One GRU step: gates from [v_prev; emb], candidate from [r . v_prev; emb],
// convex blend by the update gate. No gate biases.
Tape::Var gru_step(Tape& tape, const BoundParams& p, Tape::Var v_prev, Tape::Var emb);

// Folds gru_step over the session items starting from v_0 = 0; returns all
// hidden states. Empty sessions and out-of-range items are usage errors.
std::vector<Tape::Var> encode_session(Tape& tape, const BoundParams& p,
                                      const ModelParams& dims, const Session& prefix);

// Tail-type encoding: +1 on every coordinate of states whose clicked item
// is tail; head states pass through unchanged.
std::vector<Tape::Var> tail_encode(Tape& tape, const std::vector<Tape::Var>& v,
                                   const std::vector<uint8_t>& tail_flags,
                                   const Session& prefix);

// Attention over the (tail-encoded) states, squashed to a scalar preference:
// r_head = sigmoid([v_t'; sum_i alpha_i^m v_i'] . W3), r_tail = 1 - r_head.
FactorVars preference_factors(Tape& tape, const BoundParams& p,
                              const std::vector<Tape::Var>& v_te);

// Attention over the raw states pooled with the last state and projected to
// per-item scores: c = [v_t; sum_i alpha_i v_i] . W4.
Tape::Var pool_and_score(Tape& tape, const BoundParams& p, const std::vector<Tape::Var>& v);

// y = softmax(c . R) where R carries r_head on head items and r_tail on
// tail items.
Tape::Var soft_adjust(Tape& tape, Tape::Var c_hat, const FactorVars& f, Tape::Var head_mask,
                      Tape::Var tail_mask);

// The full model: parameters plus the head/tail partition they were trained
// against. Forward passes are pure; many may run concurrently on their own
// tapes over the same model.
class TailNetModel {
 public:
  TailNetModel(ModelParams params, std::vector<uint8_t> tail_flags);

  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  const std::vector<uint8_t>& tail_flags() const { return tail_flags_; }

  // Differentiable forward pass on the caller's tape. target < 0 skips the
  // loss; use_pm=false scores with plain softmax (factors left unset).
  ForwardVars forward(Tape& tape, const BoundParams& p, const Session& prefix, int32_t target,
                      bool use_pm) const;

  // Plain inference: probabilities, raw scores and factors, no gradients.
  struct Scores {
    Tensor y_hat;
    Tensor c_hat;
    double r_head = 0.5;
    double r_tail = 0.5;
  };
  Scores score(const Session& prefix, bool use_pm) const;

 private:
  ModelParams params_;
  std::vector<uint8_t> tail_flags_;
  Tensor head_mask_;  // 1.0 where head
  Tensor tail_mask_;  // 1.0 where tail
};

}  // namespace tailnet
