#pragma once

#include <functional>
#include <vector>

#include "tailnet/catalog.hpp"
#include "tailnet/checkpoint.hpp"

namespace tailnet {

struct EpochStats {
  int32_t epoch = 0;            // 1-based
  double mean_train_loss = 0;   // mean over the epoch's pairs
  double valid_mrr = 0;         // MRR at cutoff 20 on the validation split, percent
};

struct TrainResult {
  Checkpoint checkpoint;  // parameters of the best validation epoch
  std::vector<EpochStats> epochs;
  double initial_valid_mrr = 0;  // score of the untrained parameters
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Full training run. Each epoch shuffles the train pairs with the seeded
// PRNG, walks them in batches, accumulates per-pair gradients in batch
// order (workers may compute them in parallel, the reduction order is
// fixed), takes the mean, and applies one optimizer step per batch. The
// checkpoint keeps the parameters of the epoch with the best validation
// MRR; training stops early after early_stop_patience epochs without
// improvement. A non-finite loss aborts with a training error naming the
// batch. epochs = 0 returns the initial parameters, still scored on the
// validation split.
TrainResult train(const Dataset& dataset, const TrainConfig& config, int n_threads = 1,
                  const EpochCallback& on_epoch = {});

// MRR at cutoff 20 (percent) of a scoring function over pairs; the scorer
// must return one score per catalog item.
double valid_mrr20(const std::function<Tensor(const Session&)>& scorer,
                   const std::vector<SessionPair>& pairs, int n_threads = 1);

}  // namespace tailnet
