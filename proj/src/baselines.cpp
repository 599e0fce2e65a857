#include "tailnet/baselines.hpp"

#include <algorithm>
#include <cmath>

namespace tailnet {

Tensor pop_scores(const ItemCatalog& catalog) {
  Tensor s = Tensor::vector(catalog.size());
  for (int32_t i = 0; i < catalog.size(); ++i)
    s.mutable_data()[i] = static_cast<double>(catalog.click_count(i));
  return s;
}

Tensor spop_scores(const ItemCatalog& catalog, const Session& prefix) {
  Tensor s = pop_scores(catalog);
  int64_t max_count = 0;
  for (int32_t i = 0; i < catalog.size(); ++i)
    max_count = std::max(max_count, catalog.click_count(i));
  const double in_session_weight = static_cast<double>(max_count) + 1.0;
  for (int32_t item : prefix) s.mutable_data()[item] += in_session_weight;
  return s;
}

std::vector<Session> reconstruct_sessions(const std::vector<SessionPair>& pairs) {
  std::vector<Session> sessions;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const bool last_of_run = i + 1 == pairs.size() || pairs[i + 1].prefix.size() == 1;
    if (!last_of_run) continue;
    Session full = pairs[i].prefix;
    full.push_back(pairs[i].target);
    sessions.push_back(std::move(full));
  }
  return sessions;
}

ItemKnn ItemKnn::build(const std::vector<Session>& train_sessions, int32_t n_items) {
  ItemKnn knn;
  knn.n_items_ = n_items;
  knn.supp_.assign(static_cast<size_t>(n_items), 0);

  std::vector<std::pair<int64_t, int64_t>>& co = knn.co_;
  for (const Session& s : train_sessions) {
    Session uniq = s;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (int32_t item : uniq) ++knn.supp_[static_cast<size_t>(item)];
    for (size_t a = 0; a < uniq.size(); ++a)
      for (size_t b = a + 1; b < uniq.size(); ++b)
        co.emplace_back(static_cast<int64_t>(uniq[a]) * n_items + uniq[b], 1);
  }
  std::sort(co.begin(), co.end());
  // Collapse duplicate keys into counts.
  size_t out = 0;
  for (size_t i = 0; i < co.size();) {
    size_t j = i;
    int64_t total = 0;
    while (j < co.size() && co[j].first == co[i].first) total += co[j++].second;
    co[out++] = {co[i].first, total};
    i = j;
  }
  co.resize(out);
  return knn;
}

int64_t ItemKnn::cooccurrence(int32_t a, int32_t b) const {
  if (a == b) return 0;
  if (a > b) std::swap(a, b);
  const int64_t key = static_cast<int64_t>(a) * n_items_ + b;
  const auto it = std::lower_bound(co_.begin(), co_.end(), std::make_pair(key, int64_t{0}));
  return (it != co_.end() && it->first == key) ? it->second : 0;
}

Tensor ItemKnn::score(const Session& prefix) const {
  if (prefix.empty()) throw UsageError("cannot score an empty prefix");
  Tensor s = Tensor::vector(n_items_);
  const int32_t last = prefix.back();
  const int64_t supp_last = supp_[static_cast<size_t>(last)];
  if (supp_last == 0) return s;  // cold item: uniform zeros
  for (int32_t j = 0; j < n_items_; ++j) {
    const int64_t co = cooccurrence(last, j);
    if (co == 0) continue;
    s.mutable_data()[j] = static_cast<double>(co) /
                          std::sqrt(static_cast<double>(supp_last) *
                                    static_cast<double>(supp_[static_cast<size_t>(j)]));
  }
  return s;
}

std::vector<int32_t> proportion_rerank(const Tensor& scores, const Session& prefix,
                                       const ItemCatalog& catalog, int k) {
  if (k < 1) throw UsageError("proportion_rerank needs k >= 1");
  if (prefix.empty()) throw UsageError("proportion_rerank needs a non-empty prefix");

  size_t head_clicks = 0;
  for (int32_t item : prefix)
    if (!catalog.is_tail(item)) ++head_clicks;
  const double p = static_cast<double>(head_clicks) / static_cast<double>(prefix.size());
  const int head_slots = static_cast<int>(std::floor(static_cast<double>(k) * p + 0.5));

  auto ranked = [&](bool tail) {
    std::vector<int32_t> idx;
    for (int32_t i = 0; i < catalog.size(); ++i)
      if (catalog.is_tail(i) == tail) idx.push_back(i);
    std::sort(idx.begin(), idx.end(), [&](int32_t a, int32_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;
    });
    return idx;
  };
  const std::vector<int32_t> heads = ranked(false);
  const std::vector<int32_t> tails = ranked(true);

  // Fill each class quota, borrowing from the other class when one is short.
  size_t want_head = std::min<size_t>(static_cast<size_t>(head_slots), heads.size());
  size_t want_tail = std::min<size_t>(static_cast<size_t>(k - head_slots), tails.size());
  const size_t total = std::min<size_t>(static_cast<size_t>(k), heads.size() + tails.size());
  want_head = std::min(heads.size(), want_head + (total - want_head - want_tail));
  want_tail = total - want_head;

  std::vector<int32_t> picked(heads.begin(), heads.begin() + static_cast<ptrdiff_t>(want_head));
  picked.insert(picked.end(), tails.begin(), tails.begin() + static_cast<ptrdiff_t>(want_tail));
  std::sort(picked.begin(), picked.end(), [&](int32_t a, int32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return picked;
}

}  // namespace tailnet
