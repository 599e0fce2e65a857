#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "tailnet/eval.hpp"
#include "tailnet/rng.hpp"

using namespace tailnet;

namespace {

ItemCatalog catalog_with_counts(std::vector<int64_t> counts, double head_fraction = 0.2) {
  std::vector<std::string> ids;
  char buf[16];
  for (size_t i = 0; i < counts.size(); ++i) {
    std::snprintf(buf, sizeof buf, "i%04zu", i);
    ids.emplace_back(buf);
  }
  return ItemCatalog::build(std::move(ids), std::move(counts), head_fraction);
}

// Counts descending in index order, so head = lowest indices.
ItemCatalog simple_catalog(int n, double head_fraction = 0.2) {
  std::vector<int64_t> counts;
  for (int i = 0; i < n; ++i) counts.push_back(n - i);
  return catalog_with_counts(std::move(counts), head_fraction);
}

}  // namespace

TEST_CASE("topk picks the largest scores") {
  CHECK(topk(Tensor::from({0.1, 0.9, 0.5}), 2) == std::vector<int32_t>{1, 2});
}

TEST_CASE("topk breaks ties by ascending index") {
  CHECK(topk(Tensor::from({3.0, 3.0, 3.0, 3.0}), 3) == std::vector<int32_t>{0, 1, 2});
}

TEST_CASE("topk over the whole catalog is a descending sort") {
  Rng rng(101);
  std::vector<double> scores(40);
  for (double& s : scores) s = rng.uniform(-5, 5);
  const Tensor t = Tensor::from(scores);
  const auto list = topk(t, 40);
  REQUIRE(list.size() == 40);
  for (size_t i = 1; i < list.size(); ++i) CHECK(t[list[i - 1]] >= t[list[i]]);
  std::set<int32_t> uniq(list.begin(), list.end());
  CHECK(uniq.size() == 40);
}

TEST_CASE("topk honors exclusions") {
  std::vector<uint8_t> excluded = {0, 1, 0, 0};
  CHECK(topk(Tensor::from({0.1, 9.0, 0.5, 0.3}), 2, &excluded) == std::vector<int32_t>{2, 3});
}

TEST_CASE("recall and reciprocal rank at ranks one, four and out-of-list") {
  std::vector<int32_t> l20(20);
  std::iota(l20.begin(), l20.end(), 0);
  const std::vector<std::vector<int32_t>> lists = {l20, l20, l20};
  const std::vector<int32_t> targets = {0, 3, 25};  // ranks 1, 4, beyond the cutoff
  CHECK(recall_at_k(lists, targets) == doctest::Approx(100.0 * 2 / 3));
  CHECK(mrr_at_k(lists, targets) == doctest::Approx(100.0 * (1.0 + 0.25) / 3));
}

TEST_CASE("perfect ranking scores one hundred on both accuracy metrics") {
  const std::vector<std::vector<int32_t>> lists = {{4, 1}, {7, 2}};
  const std::vector<int32_t> targets = {4, 7};
  CHECK(recall_at_k(lists, targets) == 100.0);
  CHECK(mrr_at_k(lists, targets) == 100.0);
}

TEST_CASE("accuracy metrics match a brute-force rescan") {
  Rng rng(103);
  std::vector<std::vector<int32_t>> lists;
  std::vector<int32_t> targets;
  for (int s = 0; s < 50; ++s) {
    std::vector<int32_t> all(30);
    std::iota(all.begin(), all.end(), 0);
    rng.shuffle(all);
    all.resize(10);
    lists.push_back(all);
    targets.push_back(static_cast<int32_t>(rng.below(30)));
  }
  double hits = 0, rr = 0;
  for (size_t s = 0; s < lists.size(); ++s)
    for (size_t pos = 0; pos < lists[s].size(); ++pos)
      if (lists[s][pos] == targets[s]) {
        hits += 1;
        rr += 1.0 / static_cast<double>(pos + 1);
        break;
      }
  CHECK(recall_at_k(lists, targets) == doctest::Approx(100.0 * hits / 50).epsilon(1e-12));
  CHECK(mrr_at_k(lists, targets) == doctest::Approx(100.0 * rr / 50).epsilon(1e-12));
}

TEST_CASE("catalog coverage counts distinct recommended items") {
  const ItemCatalog cat = simple_catalog(10);
  const std::vector<std::vector<int32_t>> lists = {{1, 2}, {3, 4}, {1, 3}};
  CHECK(coverage_at_k(lists, cat).coverage == doctest::Approx(40.0));

  // Repeating one list never changes a set union.
  const std::vector<std::vector<int32_t>> repeated(5, std::vector<int32_t>{1, 2});
  CHECK(coverage_at_k(repeated, cat).coverage ==
        coverage_at_k({{1, 2}}, cat).coverage);
}

TEST_CASE("tail coverage counts only the tail side of the catalog") {
  const ItemCatalog cat = simple_catalog(10);  // items 0,1 head; 2..9 tail
  REQUIRE(cat.tail_count() == 8);
  const std::vector<std::vector<int32_t>> lists = {{7, 0}, {9, 1}};
  const CoveragePair cov = coverage_at_k(lists, cat);
  CHECK(cov.tail_coverage == doctest::Approx(25.0));  // {7, 9} of 8 tail items
  CHECK(cov.coverage == doctest::Approx(40.0));
}

TEST_CASE("mean tail share of the lists") {
  const ItemCatalog cat = simple_catalog(40);  // head 0..7, tail 8..39
  std::vector<int32_t> five_tail, three_tail;
  for (int i = 0; i < 20; ++i) five_tail.push_back(i < 15 ? i % 8 : 8 + i);
  for (int i = 0; i < 20; ++i) three_tail.push_back(i < 17 ? i % 8 : 8 + i);
  size_t t1 = 0, t2 = 0;
  for (int32_t i : five_tail) t1 += cat.is_tail(i);
  for (int32_t i : three_tail) t2 += cat.is_tail(i);
  REQUIRE(t1 == 5);
  REQUIRE(t2 == 3);
  CHECK(tail_at_k({five_tail, three_tail}, cat, 20) == doctest::Approx(20.0));

  const std::vector<int32_t> all_head = {0, 1, 2, 3};
  const std::vector<int32_t> all_tail = {9, 10, 11, 12};
  CHECK(tail_at_k({all_head, all_head}, cat, 4) == 0.0);
  CHECK(tail_at_k({all_tail, all_tail}, cat, 4) == 100.0);
}

TEST_CASE("an oracle scorer aces every cutoff") {
  const ItemCatalog cat = simple_catalog(25);
  std::vector<SessionPair> pairs;
  Rng rng(107);
  for (int s = 0; s < 40; ++s) {
    SessionPair p;
    p.prefix = {static_cast<int32_t>(rng.below(25))};
    p.target = static_cast<int32_t>(rng.below(25));
    pairs.push_back(p);
  }
  // Peeks at the target through the pair list: a deliberate upper bound.
  size_t cursor = 0;
  const ListBuilder build = [&](const Session&, const std::vector<int>& ks) {
    Tensor scores = Tensor::vector(25);
    scores.mutable_data()[pairs[cursor++].target] = 1.0;
    std::vector<std::vector<int32_t>> lists;
    for (int k : ks) lists.push_back(topk(scores, k));
    return lists;
  };
  const MetricsReport rep = evaluate(build, pairs, cat, {5, 10, 20}, 1);
  for (const MetricsAtK& m : rep.per_k) {
    CHECK(m.recall == 100.0);
    CHECK(m.mrr == 100.0);
  }
}

TEST_CASE("a constant scorer covers exactly one list") {
  const ItemCatalog cat = simple_catalog(25);
  std::vector<SessionPair> pairs(30);
  for (auto& p : pairs) {
    p.prefix = {0};
    p.target = 1;
  }
  const ListBuilder build = lists_by_score([](const Session&) {
    return Tensor::vector(25);  // all-equal scores
  });
  const MetricsReport rep = evaluate(build, pairs, cat, {5, 10}, 1);
  CHECK(rep.per_k[0].coverage == doctest::Approx(100.0 * 5 / 25));
  CHECK(rep.per_k[1].coverage == doctest::Approx(100.0 * 10 / 25));
}

TEST_CASE("full evaluation matches an independent metric computation") {
  Rng rng(109);
  const int n = 30;
  const ItemCatalog cat = simple_catalog(n);
  std::vector<SessionPair> pairs;
  for (int s = 0; s < 100; ++s) {
    SessionPair p;
    p.prefix = {static_cast<int32_t>(rng.below(n))};
    p.target = static_cast<int32_t>(rng.below(n));
    pairs.push_back(p);
  }
  // Deterministic pseudo-random scores derived from the prefix.
  const ScoreFn scorer = [n](const Session& prefix) {
    Rng local(static_cast<uint64_t>(prefix[0] + 1));
    Tensor s = Tensor::vector(n);
    for (int j = 0; j < n; ++j) s.mutable_data()[j] = local.uniform();
    return s;
  };
  const int k = 10;
  const MetricsReport rep = evaluate(lists_by_score(scorer), pairs, cat, {k}, 1);

  double hits = 0, rr = 0, tail_share = 0;
  std::set<int32_t> seen, seen_tail;
  for (const SessionPair& p : pairs) {
    const auto list = topk(scorer(p.prefix), k);
    size_t tail_in_list = 0;
    for (size_t pos = 0; pos < list.size(); ++pos) {
      seen.insert(list[pos]);
      if (cat.is_tail(list[pos])) {
        seen_tail.insert(list[pos]);
        ++tail_in_list;
      }
      if (list[pos] == p.target) {
        hits += 1;
        rr += 1.0 / static_cast<double>(pos + 1);
      }
    }
    tail_share += static_cast<double>(tail_in_list) / k;
  }
  const double np = 100.0;
  CHECK(rep.per_k[0].recall == doctest::Approx(np * hits / 100).epsilon(1e-12));
  CHECK(rep.per_k[0].mrr == doctest::Approx(np * rr / 100).epsilon(1e-12));
  CHECK(rep.per_k[0].coverage ==
        doctest::Approx(np * static_cast<double>(seen.size()) / n).epsilon(1e-12));
  CHECK(rep.per_k[0].tail_coverage ==
        doctest::Approx(np * static_cast<double>(seen_tail.size()) / cat.tail_count())
            .epsilon(1e-12));
  CHECK(rep.per_k[0].tail == doctest::Approx(np * tail_share / 100).epsilon(1e-12));
}

TEST_CASE("metrics are monotone in the cutoff and order-independent") {
  Rng rng(113);
  const int n = 30;
  const ItemCatalog cat = simple_catalog(n);
  std::vector<SessionPair> pairs;
  for (int s = 0; s < 60; ++s) {
    SessionPair p;
    p.prefix = {static_cast<int32_t>(rng.below(n)), static_cast<int32_t>(rng.below(n))};
    p.target = static_cast<int32_t>(rng.below(n));
    pairs.push_back(p);
  }
  const ScoreFn scorer = [n](const Session& prefix) {
    Rng local(static_cast<uint64_t>(prefix[0] * 31 + prefix[1] + 7));
    Tensor s = Tensor::vector(n);
    for (int j = 0; j < n; ++j) s.mutable_data()[j] = local.uniform();
    return s;
  };
  const MetricsReport rep = evaluate(lists_by_score(scorer), pairs, cat, {5, 10, 15, 20}, 1);
  for (size_t i = 1; i < rep.per_k.size(); ++i) {
    CHECK(rep.per_k[i].recall >= rep.per_k[i - 1].recall);
    CHECK(rep.per_k[i].mrr >= rep.per_k[i - 1].mrr);
    CHECK(rep.per_k[i].coverage >= rep.per_k[i - 1].coverage);
    CHECK(rep.per_k[i].tail_coverage >= rep.per_k[i - 1].tail_coverage);
  }

  std::vector<SessionPair> shuffled = pairs;
  Rng perm(1);
  perm.shuffle(shuffled);
  const MetricsReport rep2 =
      evaluate(lists_by_score(scorer), shuffled, cat, {5, 10, 15, 20}, 1);
  for (size_t i = 0; i < rep.per_k.size(); ++i) {
    CHECK(rep.per_k[i].recall == doctest::Approx(rep2.per_k[i].recall).epsilon(1e-12));
    CHECK(rep.per_k[i].coverage == rep2.per_k[i].coverage);
    CHECK(rep.per_k[i].tail_coverage == rep2.per_k[i].tail_coverage);
  }
}

TEST_CASE("thread count never changes evaluation results") {
  Rng rng(127);
  const int n = 40;
  const ItemCatalog cat = simple_catalog(n);
  std::vector<SessionPair> pairs;
  for (int s = 0; s < 200; ++s) {
    SessionPair p;
    p.prefix = {static_cast<int32_t>(rng.below(n))};
    p.target = static_cast<int32_t>(rng.below(n));
    pairs.push_back(p);
  }
  const ScoreFn scorer = [n](const Session& prefix) {
    Rng local(static_cast<uint64_t>(prefix[0] * 13 + 5));
    Tensor s = Tensor::vector(n);
    for (int j = 0; j < n; ++j) s.mutable_data()[j] = local.uniform();
    return s;
  };
  const MetricsReport a = evaluate(lists_by_score(scorer), pairs, cat, {5, 20}, 1);
  const MetricsReport b = evaluate(lists_by_score(scorer), pairs, cat, {5, 20}, 4);
  for (size_t i = 0; i < a.per_k.size(); ++i) {
    CHECK(a.per_k[i].recall == b.per_k[i].recall);
    CHECK(a.per_k[i].mrr == b.per_k[i].mrr);
    CHECK(a.per_k[i].coverage == b.per_k[i].coverage);
    CHECK(a.per_k[i].tail_coverage == b.per_k[i].tail_coverage);
    CHECK(a.per_k[i].tail == b.per_k[i].tail);
  }
}

TEST_CASE("evaluating an empty test set is a data error") {
  const ItemCatalog cat = simple_catalog(10);
  const ListBuilder build = lists_by_score([](const Session&) { return Tensor::vector(10); });
  CHECK_THROWS_AS(evaluate(build, {}, cat, {5}, 1), DataError);
}
