#include "tailnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tailnet/adam.hpp"
#include "tailnet/eval.hpp"
#include "tailnet/model.hpp"
#include "tailnet/parallel.hpp"
#include "tailnet/rng.hpp"

namespace tailnet {

double valid_mrr20(const std::function<Tensor(const Session&)>& scorer,
                   const std::vector<SessionPair>& pairs, int n_threads) {
  if (pairs.empty()) throw DataError("validation split is empty");
  std::vector<double> rr(pairs.size(), 0.0);
  parallel_for(pairs.size(), n_threads, [&](size_t i) {
    const std::vector<int32_t> list = topk(scorer(pairs[i].prefix), 20);
    const auto hit = std::find(list.begin(), list.end(), pairs[i].target);
    if (hit != list.end()) rr[i] = 1.0 / static_cast<double>(hit - list.begin() + 1);
  });
  double total = 0.0;
  for (double r : rr) total += r;  // fixed order: same result for any thread count
  return 100.0 * total / static_cast<double>(pairs.size());
}

namespace {

// Loss and parameter gradients of a single (prefix, target) pair.
double pair_backward(const TailNetModel& model, const SessionPair& pair, bool use_pm,
                     std::vector<Tensor>& grads_out) {
  Tape tape;
  const BoundParams bp = BoundParams::bind(tape, model.params(), true);
  const ForwardVars fw = model.forward(tape, bp, pair.prefix, pair.target, use_pm);
  const std::vector<Tape::Var> wrt = bp.list();
  std::vector<Tensor*> outs;
  outs.reserve(grads_out.size());
  for (Tensor& g : grads_out) outs.push_back(&g);
  tape.backward(fw.loss, wrt, outs);
  return tape.scalar(fw.loss);
}

std::vector<Tensor> grad_slots(const ModelParams& p) {
  std::vector<Tensor> slots;
  for (const Tensor* t : std::as_const(p).tensors()) slots.push_back(zeros_like(*t));
  return slots;
}

}  // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& config, int n_threads,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.train.empty()) throw DataError("training split is empty");
  if (dataset.valid.empty()) throw DataError("validation split is empty");
  const int32_t n_items = dataset.catalog.size();
  for (const SessionPair& p : dataset.train)
    if (p.target < 0 || p.target >= n_items) throw DataError("train pair outside catalog");

  Rng rng(config.seed);
  TailNetModel model(ModelParams::init(n_items, config.d, rng), dataset.catalog.tail_flags());

  const auto scorer = [&](const Session& prefix) {
    return model.score(prefix, config.use_pm).y_hat;
  };

  TrainResult result;
  result.checkpoint.config = config;
  result.checkpoint.catalog = dataset.catalog;
  result.checkpoint.params = model.params();
  result.checkpoint.best_valid_mrr = valid_mrr20(scorer, dataset.valid, n_threads);
  result.checkpoint.best_epoch = 0;
  result.initial_valid_mrr = result.checkpoint.best_valid_mrr;

  std::vector<size_t> order(dataset.train.size());
  std::iota(order.begin(), order.end(), size_t{0});

  AdamState adam = AdamState::init(std::as_const(model.params()).tensors());
  std::vector<Tensor> batch_grads = grad_slots(model.params());
  int32_t epochs_since_best = 0;

  for (int32_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    size_t batch_index = 0;

    for (size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const size_t count = std::min<size_t>(config.batch_size, order.size() - start);
      for (Tensor& g : batch_grads) g.fill(0.0);
      std::vector<double> losses(count, 0.0);

      if (n_threads > 1) {
        // Per-pair gradient slots, merged in batch order below: bit-equal
        // to the sequential path for any worker count.
        std::vector<std::vector<Tensor>> slots(count);
        parallel_for(count, n_threads, [&](size_t i) {
          slots[i] = grad_slots(model.params());
          losses[i] = pair_backward(model, dataset.train[order[start + i]], config.use_pm,
                                    slots[i]);
        });
        for (size_t i = 0; i < count; ++i)
          for (size_t t = 0; t < batch_grads.size(); ++t) {
            double* acc = batch_grads[t].mutable_data();
            const double* g = slots[i][t].data();
            for (int64_t e = 0; e < batch_grads[t].size(); ++e) acc[e] += g[e];
          }
      } else {
        for (size_t i = 0; i < count; ++i)
          losses[i] = pair_backward(model, dataset.train[order[start + i]], config.use_pm,
                                    batch_grads);
      }

      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      if (!std::isfinite(batch_loss))
        throw TrainError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch_index));
      epoch_loss += batch_loss;

      const double inv = 1.0 / static_cast<double>(count);
      for (Tensor& g : batch_grads) {
        double* data = g.mutable_data();
        for (int64_t e = 0; e < g.size(); ++e) data[e] *= inv;
        if (!g.all_finite())
          throw TrainError("non-finite gradient in epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index));
      }
      adam_step(model.params().tensors(), batch_grads, adam, config.learning_rate, config.l2);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_train_loss = epoch_loss / static_cast<double>(order.size());
    stats.valid_mrr = valid_mrr20(scorer, dataset.valid, n_threads);
    result.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (stats.valid_mrr > result.checkpoint.best_valid_mrr) {
      result.checkpoint.params = model.params();
      result.checkpoint.best_valid_mrr = stats.valid_mrr;
      result.checkpoint.best_epoch = epoch;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= config.early_stop_patience) {
      break;
    }
  }
  return result;
}

}  // namespace tailnet
