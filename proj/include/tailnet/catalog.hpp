#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tailnet/errors.hpp"

namespace tailnet {

// One click from the raw log.
struct RawEvent {
  std::string session_id;
  int64_t timestamp = 0;  // seconds since epoch
  std::string item_id;
};

// A session is a time-ordered list of dense item indices.
using Session = std::vector<int32_t>;

// A training/evaluation case: predict `target` after seeing `prefix`.
struct SessionPair {
  Session prefix;
  int32_t target = 0;
};

// Dense item index space with per-item click counts and the head/tail
// partition. Indices are assigned in ascending item-id order, so ascending
// index is also the id-based tie-break order.
class ItemCatalog {
 public:
  ItemCatalog() = default;

  // ids must be sorted ascending and unique; counts aligned with ids.
  static ItemCatalog build(std::vector<std::string> ids, std::vector<int64_t> counts,
                           double head_fraction);

  int32_t size() const { return static_cast<int32_t>(ids_.size()); }
  int32_t head_count() const { return head_count_; }
  int32_t tail_count() const { return size() - head_count_; }
  double head_fraction() const { return head_fraction_; }

  // Dense index for an item id, or -1 when unknown.
  int32_t index_of(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? -1 : it->second;
  }
  const std::string& id_of(int32_t idx) const { return ids_[static_cast<size_t>(idx)]; }
  int64_t click_count(int32_t idx) const { return counts_[static_cast<size_t>(idx)]; }
  bool is_tail(int32_t idx) const { return tail_[static_cast<size_t>(idx)] != 0; }

  const std::vector<int64_t>& click_counts() const { return counts_; }
  const std::vector<uint8_t>& tail_flags() const { return tail_; }

 private:
  std::vector<std::string> ids_;
  std::vector<int64_t> counts_;
  std::vector<uint8_t> tail_;
  std::unordered_map<std::string, int32_t> index_;
  int32_t head_count_ = 0;
  double head_fraction_ = 0.0;
};

// Head/tail partition: the top ceil(head_fraction * n) items by click count
// form the head, ties broken by ascending index (== ascending item id).
// Returns 1 for tail items, 0 for head.
std::vector<uint8_t> pareto_split(const std::vector<int64_t>& click_counts, double head_fraction);

// Preprocessed dataset: catalog plus the three prefix/target pair lists.
struct Dataset {
  ItemCatalog catalog;
  std::vector<SessionPair> train;
  std::vector<SessionPair> valid;
  std::vector<SessionPair> test;
};

}  // namespace tailnet
