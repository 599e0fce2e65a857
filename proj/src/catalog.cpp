#include "tailnet/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tailnet {

std::vector<uint8_t> pareto_split(const std::vector<int64_t>& click_counts, double head_fraction) {
  const size_t n = click_counts.size();
  if (n < 2) throw UsageError("pareto_split needs at least 2 items");
  if (!(head_fraction > 0.0 && head_fraction < 1.0))
    throw UsageError("head_fraction must be in (0,1)");

  std::vector<int32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    if (click_counts[a] != click_counts[b]) return click_counts[a] > click_counts[b];
    return a < b;
  });

  const auto head = static_cast<size_t>(std::ceil(head_fraction * static_cast<double>(n)));
  std::vector<uint8_t> is_tail(n, 1);
  for (size_t i = 0; i < head && i < n; ++i) is_tail[static_cast<size_t>(order[i])] = 0;
  return is_tail;
}

ItemCatalog ItemCatalog::build(std::vector<std::string> ids, std::vector<int64_t> counts,
                               double head_fraction) {
  if (ids.size() != counts.size()) throw UsageError("catalog: ids/counts size mismatch");
  if (ids.size() < 2) throw DataError("catalog needs at least 2 items, got " +
                                      std::to_string(ids.size()));
  if (!std::is_sorted(ids.begin(), ids.end())) throw UsageError("catalog ids must be sorted");

  ItemCatalog cat;
  cat.tail_ = pareto_split(counts, head_fraction);
  cat.ids_ = std::move(ids);
  cat.counts_ = std::move(counts);
  cat.head_fraction_ = head_fraction;
  cat.index_.reserve(cat.ids_.size());
  for (size_t i = 0; i < cat.ids_.size(); ++i)
    cat.index_.emplace(cat.ids_[i], static_cast<int32_t>(i));
  if (cat.index_.size() != cat.ids_.size()) throw UsageError("catalog ids must be unique");
  cat.head_count_ = 0;
  for (uint8_t t : cat.tail_)
    if (!t) ++cat.head_count_;
  return cat;
}

}  // namespace tailnet
