#pragma once

#include <cstdint>
#include <string>

#include "tailnet/catalog.hpp"
#include "tailnet/model.hpp"

namespace tailnet {

// Everything a training run needs; the seed pins the whole run.
struct TrainConfig {
  int32_t d = 100;
  double learning_rate = 1e-3;
  int32_t batch_size = 32;
  int32_t epochs = 30;
  double l2 = 1e-5;
  uint64_t seed = 42;
  bool use_pm = true;
  int32_t early_stop_patience = 10;

  void validate() const;
};

// A trained (or initial) model with its provenance: the exact config, the
// catalog it was trained against, and the validation score that selected it.
struct Checkpoint {
  TrainConfig config;
  ItemCatalog catalog;
  ModelParams params;
  double best_valid_mrr = 0.0;  // MRR at cutoff 20, percent
  int32_t best_epoch = 0;       // 0 = initial parameters
};

// Checkpoint container: magic "TLNT", format version u16, then four
// length-prefixed sections — config, catalog, tensors (declared order,
// row-major f64), meta. All little-endian. Loading validates magic,
// version, section framing, shapes, and flag consistency; any corruption or
// truncation is a format error and no partial checkpoint escapes.
void save_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tailnet
