#include "tailnet/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "tailnet/errors.hpp"
#include "tailnet/rng.hpp"

namespace tailnet {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool split3(const std::string& line, std::string out[3]) {
  size_t c1 = line.find(',');
  if (c1 == std::string::npos) return false;
  size_t c2 = line.find(',', c1 + 1);
  if (c2 == std::string::npos) return false;
  if (line.find(',', c2 + 1) != std::string::npos) return false;
  out[0] = trim(line.substr(0, c1));
  out[1] = trim(line.substr(c1 + 1, c2 - c1 - 1));
  out[2] = trim(line.substr(c2 + 1));
  return true;
}

bool parse_timestamp(const std::string& s, int64_t* out) {
  if (s.empty() || s.size() > 18) return false;
  int64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  *out = v;
  return true;
}

bool looks_like_header(const std::string fields[3]) {
  return lower(fields[0]) == "session_id" || lower(fields[1]) == "timestamp" ||
         lower(fields[2]) == "item_id";
}

}  // namespace

std::vector<RawEvent> parse_events(std::istream& in, ParseStats* stats) {
  if (!in) throw IoError("cannot read event stream");

  std::vector<RawEvent> events;
  ParseStats st;
  std::string line;
  size_t line_no = 0;
  bool first_row = true;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;

    std::string f[3];
    int64_t ts = 0;
    const bool shape_ok = split3(line, f);
    const bool ts_ok = shape_ok && parse_timestamp(f[1], &ts);

    if (first_row && shape_ok && !ts_ok && looks_like_header(f)) {
      first_row = false;
      continue;  // header row
    }
    first_row = false;

    ++st.rows;
    if (!shape_ok || !ts_ok || f[0].empty() || f[2].empty()) {
      ++st.malformed;
      if (st.malformed == 1) {
        st.first_bad_line = line_no;
        st.first_bad_text = line;
      }
      continue;
    }
    events.push_back(RawEvent{std::move(f[0]), ts, std::move(f[2])});
  }

  if (in.bad()) throw IoError("I/O failure while reading events");
  if (st.rows > 0 && st.malformed * 10 > st.rows)
    throw FormatError("too many malformed rows (" + std::to_string(st.malformed) + " of " +
                      std::to_string(st.rows) + "), first at line " +
                      std::to_string(st.first_bad_line) + ": \"" + st.first_bad_text + "\"");
  if (stats) *stats = st;
  return events;
}

namespace {

struct SessionEvents {
  std::string id;
  std::vector<std::pair<int64_t, std::string>> clicks;  // (timestamp, item id)
};

}  // namespace

Dataset preprocess(const std::vector<RawEvent>& events, const PreprocessOptions& opts,
                   PreprocessSummary* summary) {
  if (events.empty()) throw DataError("no events to preprocess");
  if (!(opts.head_fraction > 0.0 && opts.head_fraction < 1.0))
    throw UsageError("head_fraction must be in (0,1)");
  if (opts.min_session_len < 2) throw UsageError("min_session_len must be at least 2");
  if (opts.max_session_len < 2) throw UsageError("max_session_len must be at least 2");

  PreprocessSummary sum;

  // Group by session id; stable sort keeps file order on timestamp ties.
  std::unordered_map<std::string, size_t> slot;
  std::vector<SessionEvents> sessions;
  for (const RawEvent& e : events) {
    auto [it, fresh] = slot.try_emplace(e.session_id, sessions.size());
    if (fresh) sessions.push_back(SessionEvents{e.session_id, {}});
    sessions[it->second].clicks.emplace_back(e.timestamp, e.item_id);
  }
  for (SessionEvents& s : sessions)
    std::stable_sort(s.clicks.begin(), s.clicks.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
  sum.sessions_total = sessions.size();

  // Iterate support/length filtering to a fixed point: dropping sessions
  // lowers item supports, dropping items shortens sessions.
  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<std::string, int64_t> support;
    for (const SessionEvents& s : sessions)
      for (const auto& c : s.clicks) ++support[c.second];

    for (SessionEvents& s : sessions) {
      auto kept = std::remove_if(s.clicks.begin(), s.clicks.end(), [&](const auto& c) {
        return support[c.second] < opts.min_item_support;
      });
      if (kept != s.clicks.end()) {
        s.clicks.erase(kept, s.clicks.end());
        changed = true;
      }
    }
    auto kept = std::remove_if(sessions.begin(), sessions.end(), [&](const SessionEvents& s) {
      return s.clicks.size() < static_cast<size_t>(opts.min_session_len);
    });
    if (kept != sessions.end()) {
      sessions.erase(kept, sessions.end());
      changed = true;
    }
  }
  if (sessions.empty())
    throw DataError("support/length filtering removed every session (min_item_support=" +
                    std::to_string(opts.min_item_support) + ", min_session_len=" +
                    std::to_string(opts.min_session_len) + ")");
  sum.sessions_kept = sessions.size();

  // Keep only the most recent clicks of long sessions.
  for (SessionEvents& s : sessions) {
    if (s.clicks.size() > static_cast<size_t>(opts.max_session_len))
      s.clicks.erase(s.clicks.begin(),
                     s.clicks.end() - static_cast<ptrdiff_t>(opts.max_session_len));
  }

  // Chronological processing order, ties broken by session id.
  std::sort(sessions.begin(), sessions.end(), [](const SessionEvents& a, const SessionEvents& b) {
    if (a.clicks.back().first != b.clicks.back().first)
      return a.clicks.back().first < b.clicks.back().first;
    return a.id < b.id;
  });

  int64_t log_end = 0;
  for (const SessionEvents& s : sessions) log_end = std::max(log_end, s.clicks.back().first);

  // Split: (end-2w, end-w] valid, (end-w, end] test, earlier sessions train.
  const int64_t w = opts.test_window_seconds;
  std::vector<const SessionEvents*> train_s, valid_s, test_s;
  for (const SessionEvents& s : sessions) {
    const int64_t t = s.clicks.back().first;
    if (t > log_end - w)
      test_s.push_back(&s);
    else if (t > log_end - 2 * w)
      valid_s.push_back(&s);
    else
      train_s.push_back(&s);
  }
  sum.train_sessions = train_s.size();
  sum.valid_sessions = valid_s.size();
  sum.test_sessions = test_s.size();
  if (train_s.empty())
    throw DataError("time split left no training sessions (test window too wide?)");
  if (test_s.empty()) throw DataError("time split left no test sessions");

  // Catalog from train clicks only.
  std::map<std::string, int64_t> train_counts;
  for (const SessionEvents* s : train_s)
    for (const auto& c : s->clicks) ++train_counts[c.second];
  std::vector<std::string> ids;
  std::vector<int64_t> counts;
  ids.reserve(train_counts.size());
  for (auto& [id, cnt] : train_counts) {
    ids.push_back(id);
    counts.push_back(cnt);
  }
  if (ids.size() < 2)
    throw DataError("training split contains fewer than 2 distinct items");
  ItemCatalog catalog = ItemCatalog::build(std::move(ids), std::move(counts), opts.head_fraction);

  auto augment = [&](const std::vector<const SessionEvents*>& src, bool filter_unknown,
                     size_t* dropped) {
    std::vector<SessionPair> pairs;
    for (const SessionEvents* s : src) {
      Session indexed;
      indexed.reserve(s->clicks.size());
      for (const auto& c : s->clicks) indexed.push_back(catalog.index_of(c.second));
      for (size_t k = 1; k < indexed.size(); ++k) {
        if (filter_unknown) {
          bool ok = true;
          for (size_t j = 0; ok && j <= k; ++j) ok = indexed[j] >= 0;
          if (!ok) {
            if (dropped) ++*dropped;
            continue;
          }
        }
        SessionPair p;
        p.prefix.assign(indexed.begin(), indexed.begin() + static_cast<ptrdiff_t>(k));
        p.target = indexed[k];
        pairs.push_back(std::move(p));
      }
    }
    return pairs;
  };

  Dataset ds;
  ds.train = augment(train_s, false, nullptr);
  ds.valid = augment(valid_s, true, &sum.valid_pairs_dropped);
  ds.test = augment(test_s, true, &sum.test_pairs_dropped);
  ds.catalog = std::move(catalog);

  if (ds.test.empty())
    throw DataError("every test pair contained items unseen in training data");
  if (summary) *summary = sum;
  return ds;
}

std::vector<RawEvent> gen_synthetic(const SynthOptions& opts) {
  if (opts.num_items < 10) throw UsageError("gen_synthetic needs at least 10 items");
  if (opts.num_sessions < 1) throw UsageError("gen_synthetic needs at least 1 session");
  if (!(opts.zipf_exponent > 0.0)) throw UsageError("zipf_exponent must be positive");

  constexpr double kRepeatBias = 0.2;
  constexpr int64_t kSpanSeconds = 10 * 86400;

  // Zipf CDF over popularity ranks.
  std::vector<double> cdf(static_cast<size_t>(opts.num_items));
  double total = 0.0;
  for (int k = 0; k < opts.num_items; ++k) {
    total += std::pow(static_cast<double>(k + 1), -opts.zipf_exponent);
    cdf[static_cast<size_t>(k)] = total;
  }
  for (double& c : cdf) c /= total;

  Rng rng(opts.seed);
  auto zipf_draw = [&]() {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return static_cast<int>(std::min<ptrdiff_t>(it - cdf.begin(), opts.num_items - 1));
  };

  // Shifted geometric length: 2 + Geom(p) gives mean 1 + 1/p.
  const double p = std::clamp(1.0 / std::max(opts.mean_len - 1.0, 1.0), 1e-6, 1.0);
  auto draw_len = [&]() {
    if (p >= 1.0) return 2;
    const double u = rng.uniform();
    const double g = std::floor(std::log1p(-u) / std::log1p(-p));
    return 2 + static_cast<int>(std::min(g, 10000.0));
  };

  char buf[32];
  std::vector<RawEvent> events;
  for (int s = 0; s < opts.num_sessions; ++s) {
    std::snprintf(buf, sizeof buf, "s%06d", s);
    const std::string sid(buf);
    const int len = draw_len();
    int64_t ts = kSpanSeconds * static_cast<int64_t>(s) / opts.num_sessions;

    std::vector<int> drawn;
    drawn.reserve(static_cast<size_t>(len));
    for (int j = 0; j < len; ++j) {
      int rank;
      if (!drawn.empty() && rng.uniform() < kRepeatBias) {
        rank = drawn[static_cast<size_t>(rng.below(drawn.size()))];
      } else {
        rank = zipf_draw();
      }
      drawn.push_back(rank);
      std::snprintf(buf, sizeof buf, "i%06d", rank);
      events.push_back(RawEvent{sid, ts, std::string(buf)});
      ts += 1 + static_cast<int64_t>(rng.below(60));
    }
  }
  return events;
}

}  // namespace tailnet
