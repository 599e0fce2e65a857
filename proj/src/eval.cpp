#include "tailnet/eval.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

#include "tailnet/parallel.hpp"

namespace tailnet {

std::vector<int32_t> topk(const Tensor& scores, int k, const std::vector<uint8_t>* excluded) {
  if (k < 1) throw UsageError("topk needs k >= 1");
  const auto n = scores.size();
  std::vector<int32_t> idx;
  idx.reserve(static_cast<size_t>(n));
  for (int32_t i = 0; i < n; ++i)
    if (!excluded || !(*excluded)[static_cast<size_t>(i)]) idx.push_back(i);

  const size_t take = std::min<size_t>(static_cast<size_t>(k), idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<ptrdiff_t>(take), idx.end(),
                    [&](int32_t a, int32_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  idx.resize(take);
  return idx;
}

double recall_at_k(const std::vector<std::vector<int32_t>>& lists,
                   const std::vector<int32_t>& targets) {
  if (lists.size() != targets.size()) throw UsageError("lists/targets size mismatch");
  if (lists.empty()) return 0.0;
  size_t hits = 0;
  for (size_t i = 0; i < lists.size(); ++i)
    if (std::find(lists[i].begin(), lists[i].end(), targets[i]) != lists[i].end()) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(lists.size());
}

double mrr_at_k(const std::vector<std::vector<int32_t>>& lists,
                const std::vector<int32_t>& targets) {
  if (lists.size() != targets.size()) throw UsageError("lists/targets size mismatch");
  if (lists.empty()) return 0.0;
  double total = 0.0;
  for (size_t i = 0; i < lists.size(); ++i) {
    const auto it = std::find(lists[i].begin(), lists[i].end(), targets[i]);
    if (it != lists[i].end())
      total += 1.0 / static_cast<double>(it - lists[i].begin() + 1);
  }
  return 100.0 * total / static_cast<double>(lists.size());
}

CoveragePair coverage_at_k(const std::vector<std::vector<int32_t>>& lists,
                           const ItemCatalog& catalog) {
  std::vector<uint8_t> seen(static_cast<size_t>(catalog.size()), 0);
  for (const auto& list : lists)
    for (int32_t i : list) seen[static_cast<size_t>(i)] = 1;

  size_t all = 0, tail = 0;
  for (int32_t i = 0; i < catalog.size(); ++i) {
    if (!seen[static_cast<size_t>(i)]) continue;
    ++all;
    if (catalog.is_tail(i)) ++tail;
  }
  CoveragePair out;
  out.coverage = 100.0 * static_cast<double>(all) / static_cast<double>(catalog.size());
  if (catalog.tail_count() == 0) {
    std::cerr << "warning: catalog has no tail items; tail coverage reported as 0\n";
    out.tail_coverage = 0.0;
  } else {
    out.tail_coverage = 100.0 * static_cast<double>(tail) /
                        static_cast<double>(catalog.tail_count());
  }
  return out;
}

double tail_at_k(const std::vector<std::vector<int32_t>>& lists, const ItemCatalog& catalog,
                 int k) {
  if (lists.empty()) return 0.0;
  double total = 0.0;
  for (const auto& list : lists) {
    size_t tail = 0;
    for (int32_t i : list)
      if (catalog.is_tail(i)) ++tail;
    total += static_cast<double>(tail) / static_cast<double>(k);
  }
  return 100.0 * total / static_cast<double>(lists.size());
}

ListBuilder lists_by_score(ScoreFn scorer, bool exclude_prefix) {
  return [scorer = std::move(scorer), exclude_prefix](
             const Session& prefix, const std::vector<int>& ks) {
    const Tensor scores = scorer(prefix);
    std::vector<uint8_t> excluded;
    if (exclude_prefix) {
      excluded.assign(static_cast<size_t>(scores.size()), 0);
      for (int32_t i : prefix) excluded[static_cast<size_t>(i)] = 1;
    }
    const int k_max = *std::max_element(ks.begin(), ks.end());
    // One selection at the widest cutoff; narrower lists are its prefixes.
    const std::vector<int32_t> widest =
        topk(scores, k_max, exclude_prefix ? &excluded : nullptr);
    std::vector<std::vector<int32_t>> lists;
    lists.reserve(ks.size());
    for (int k : ks) {
      const size_t take = std::min<size_t>(static_cast<size_t>(k), widest.size());
      lists.emplace_back(widest.begin(), widest.begin() + static_cast<ptrdiff_t>(take));
    }
    return lists;
  };
}

MetricsReport evaluate(const ListBuilder& build, const std::vector<SessionPair>& pairs,
                       const ItemCatalog& catalog, std::vector<int> ks, int n_threads) {
  if (pairs.empty()) throw DataError("cannot evaluate an empty test set");
  if (ks.empty()) throw UsageError("no cutoffs requested");
  for (int k : ks)
    if (k < 1) throw UsageError("cutoffs must be positive");

  // Per-pair lists computed in parallel...
  std::vector<std::vector<std::vector<int32_t>>> per_pair(pairs.size());
  parallel_for(pairs.size(), n_threads,
               [&](size_t i) { per_pair[i] = build(pairs[i].prefix, ks); });

  // ...then aggregated in pair order, so thread count cannot change results.
  MetricsReport report;
  report.sessions = pairs.size();
  for (size_t kslot = 0; kslot < ks.size(); ++kslot) {
    std::vector<std::vector<int32_t>> lists;
    std::vector<int32_t> targets;
    lists.reserve(pairs.size());
    targets.reserve(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
      lists.push_back(per_pair[i][kslot]);
      targets.push_back(pairs[i].target);
    }
    MetricsAtK m;
    m.k = ks[kslot];
    m.recall = recall_at_k(lists, targets);
    m.mrr = mrr_at_k(lists, targets);
    const CoveragePair cov = coverage_at_k(lists, catalog);
    m.coverage = cov.coverage;
    m.tail_coverage = cov.tail_coverage;
    m.tail = tail_at_k(lists, catalog, ks[kslot]);
    report.per_k.push_back(m);
  }
  return report;
}

}  // namespace tailnet
