#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tailnet/catalog.hpp"

namespace tailnet {

struct ParseStats {
  size_t rows = 0;       // data rows seen (header excluded)
  size_t malformed = 0;  // rows dropped
  size_t first_bad_line = 0;
  std::string first_bad_text;
};

// Reads CSV rows `session_id,timestamp,item_id`. An optional header row is
// recognized when the first row's timestamp field is non-numeric and at
// least one field spells its canonical column name. Malformed rows are
// skipped and counted; more than 10% malformed is a FormatError naming the
// first bad line.
std::vector<RawEvent> parse_events(std::istream& in, ParseStats* stats = nullptr);

struct PreprocessOptions {
  int min_item_support = 5;
  int min_session_len = 2;
  int max_session_len = 19;
  double head_fraction = 0.2;
  int64_t test_window_seconds = 86400;
};

struct PreprocessSummary {
  size_t sessions_total = 0;     // after grouping
  size_t sessions_kept = 0;      // after support/length filtering
  size_t train_sessions = 0;
  size_t valid_sessions = 0;
  size_t test_sessions = 0;
  size_t valid_pairs_dropped = 0;  // contained items unseen in train
  size_t test_pairs_dropped = 0;
};

// Full preprocessing pipeline:
//  - group events by session id, stable-sort each group by timestamp;
//  - iteratively drop items below min_item_support and sessions below
//    min_session_len until stable;
//  - keep only the last max_session_len items of each session;
//  - sessions ending within the last test window of the log become test,
//    those ending in the window before that become valid, the rest train;
//  - expand every session into (prefix, next item) pairs;
//  - drop valid/test pairs containing items that never occur in train;
//  - build the catalog from train-session click counts.
// Deterministic for identical inputs.
Dataset preprocess(const std::vector<RawEvent>& events, const PreprocessOptions& opts,
                   PreprocessSummary* summary = nullptr);

struct SynthOptions {
  int num_sessions = 5000;
  int num_items = 500;
  double zipf_exponent = 1.2;
  double mean_len = 6.0;
  uint64_t seed = 42;
};

// Synthetic Zipf-distributed session log. Session lengths follow a shifted
// geometric distribution with the requested mean (minimum 2); items are
// Zipf(zipf_exponent) draws with a mild in-session repetition bias;
// timestamps increase strictly within a session and session starts spread
// over a ten-day span. Output is fully determined by the options.
std::vector<RawEvent> gen_synthetic(const SynthOptions& opts);

}  // namespace tailnet
