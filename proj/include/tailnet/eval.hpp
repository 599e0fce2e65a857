#pragma once

#include <functional>
#include <vector>

#include "tailnet/catalog.hpp"
#include "tailnet/tensor.hpp"

namespace tailnet {

// Indices of the k largest scores, ties broken by ascending index. Indices
// flagged in `excluded` (when given) never appear. Returns min(k, eligible)
// entries.
std::vector<int32_t> topk(const Tensor& scores, int k,
                          const std::vector<uint8_t>* excluded = nullptr);

// All five ranking metrics at one cutoff, as percentages.
struct MetricsAtK {
  int k = 0;
  double recall = 0;
  double mrr = 0;
  double coverage = 0;
  double tail_coverage = 0;
  double tail = 0;
};

struct MetricsReport {
  std::vector<MetricsAtK> per_k;
  size_t sessions = 0;
};

// recall = share of sessions whose target made the list; mrr = mean
// reciprocal rank of the target (0 beyond the cutoff). Both in [0, 100].
double recall_at_k(const std::vector<std::vector<int32_t>>& lists,
                   const std::vector<int32_t>& targets);
double mrr_at_k(const std::vector<std::vector<int32_t>>& lists,
                const std::vector<int32_t>& targets);

// coverage = share of the catalog ever recommended; tail_coverage = share
// of the tail catalog ever recommended (0 with a warning when there are no
// tail items).
struct CoveragePair {
  double coverage = 0;
  double tail_coverage = 0;
};
CoveragePair coverage_at_k(const std::vector<std::vector<int32_t>>& lists,
                           const ItemCatalog& catalog);

// Mean share of tail items inside each list.
double tail_at_k(const std::vector<std::vector<int32_t>>& lists, const ItemCatalog& catalog,
                 int k);

// Produces the recommendation lists for one session prefix, one list per
// requested cutoff (aligned with ks).
using ListBuilder =
    std::function<std::vector<std::vector<int32_t>>(const Session& prefix,
                                                    const std::vector<int>& ks)>;

// A plain scorer lifted into a ListBuilder: scores once, then cuts lists at
// every k. With exclude_prefix, items of the prefix are kept out of lists.
using ScoreFn = std::function<Tensor(const Session& prefix)>;
ListBuilder lists_by_score(ScoreFn scorer, bool exclude_prefix = false);

// Runs the builder over every test pair and aggregates all five metrics per
// cutoff. Deterministic for any thread count: per-pair results are computed
// in parallel but reduced in pair order.
MetricsReport evaluate(const ListBuilder& build, const std::vector<SessionPair>& pairs,
                       const ItemCatalog& catalog, std::vector<int> ks, int n_threads = 1);

}  // namespace tailnet
