#pragma once

#include <vector>

#include "tailnet/catalog.hpp"
#include "tailnet/eval.hpp"
#include "tailnet/tensor.hpp"

namespace tailnet {

// Global popularity: every prefix gets the train click counts.
Tensor pop_scores(const ItemCatalog& catalog);

// Session popularity: in-prefix items outrank everything else (weighted so
// any repetition beats any global count), remaining order falls back to
// global popularity.
Tensor spop_scores(const ItemCatalog& catalog, const Session& prefix);

// Undoes prefix augmentation: consecutive pairs of one session share a
// growing prefix, so a length-1 prefix starts a new session and the last
// pair of each run carries the whole session (prefix + target).
std::vector<Session> reconstruct_sessions(const std::vector<SessionPair>& pairs);

// Item-to-item cosine similarity over train-session co-occurrence.
class ItemKnn {
 public:
  static ItemKnn build(const std::vector<Session>& train_sessions, int32_t n_items);

  // Similarity of every item to the last prefix item:
  // co(last, j) / sqrt(supp(last) * supp(j)); all zeros when the last item
  // never occurred in training sessions.
  Tensor score(const Session& prefix) const;

  int64_t support(int32_t item) const { return supp_[static_cast<size_t>(item)]; }
  int64_t cooccurrence(int32_t a, int32_t b) const;

 private:
  int32_t n_items_ = 0;
  std::vector<int64_t> supp_;
  std::vector<std::pair<int64_t, int64_t>> co_;  // (packed pair key, count), sorted
};

// Hard head/tail slot allocation: p = share of head clicks in the prefix,
// the list takes the round(k*p) best-scoring head items and k - round(k*p)
// best-scoring tail items (borrowing from the other class when one runs
// short), finally ordered by score.
std::vector<int32_t> proportion_rerank(const Tensor& scores, const Session& prefix,
                                       const ItemCatalog& catalog, int k);

}  // namespace tailnet
