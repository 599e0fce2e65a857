// tailnet: command-line front end for the long-tail session recommender.
//
// Subcommands: synth, prepare, train, eval, recommend. Exit codes: 0 on
// success, 2 for user/input errors (bad flags, bad files, unknown items),
// 1 for internal errors. Every subcommand is deterministic given its flags
// and input files, and echoes its resolved configuration into its output
// for provenance.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tailnet/baselines.hpp"
#include "tailnet/checkpoint.hpp"
#include "tailnet/dataset_io.hpp"
#include "tailnet/eval.hpp"
#include "tailnet/ingest.hpp"
#include "tailnet/model.hpp"
#include "tailnet/train.hpp"

namespace {

using namespace tailnet;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

int default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// One "# config: key=value ..." provenance line.
std::string config_line(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string line = "# config:";
  for (const auto& [k, v] : kv) line += " " + k + "=" + v;
  return line;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

// ---------------------------------------------------------------- synth --

struct SynthArgs {
  SynthOptions opt;
  std::string out;
};

void run_synth(const SynthArgs& a) {
  if (a.opt.num_sessions < 1) throw UserError("session count must be positive");
  if (a.opt.num_items < 2) throw UserError("item count must be at least 2");
  if (!(a.opt.zipf_exponent > 0)) throw UserError("zipf exponent must be positive");
  if (!(a.opt.mean_len >= 2)) throw UserError("mean session length must be at least 2");

  const std::vector<RawEvent> events = gen_synthetic(a.opt);
  std::ofstream out = open_out(a.out);
  out << "session_id,timestamp,item_id\n";
  for (const RawEvent& e : events)
    out << e.session_id << ',' << e.timestamp << ',' << e.item_id << '\n';
  if (!out.flush()) throw IoError("failed to write '" + a.out + "'");

  std::cout << config_line({{"sessions", std::to_string(a.opt.num_sessions)},
                            {"items", std::to_string(a.opt.num_items)},
                            {"zipf", fmt(a.opt.zipf_exponent)},
                            {"mean-len", fmt(a.opt.mean_len)},
                            {"seed", std::to_string(a.opt.seed)},
                            {"out", a.out}})
            << "\n";
  std::cout << "wrote " << a.out << " (" << events.size() << " events)\n";
}

// -------------------------------------------------------------- prepare --

struct PrepareArgs {
  std::string input;
  std::string out;
  PreprocessOptions opt;
  int test_days = 1;
};

void run_prepare(const PrepareArgs& a) {
  if (a.opt.min_item_support < 1) throw UserError("min item support must be positive");
  if (a.opt.min_session_len < 2) throw UserError("min session length must be at least 2");
  if (a.opt.max_session_len < a.opt.min_session_len)
    throw UserError("max session length cannot be below min session length");
  if (!(a.opt.head_fraction > 0 && a.opt.head_fraction < 1))
    throw UserError("head fraction must lie strictly between 0 and 1");
  if (a.test_days < 1) throw UserError("test window must be at least one day");

  std::ifstream in(a.input, std::ios::binary);
  if (!in) throw IoError("cannot open '" + a.input + "'");
  ParseStats stats;
  const std::vector<RawEvent> events = parse_events(in, &stats);
  if (events.empty()) throw DataError("no events parsed from '" + a.input + "'");

  PreprocessOptions opt = a.opt;
  opt.test_window_seconds = static_cast<int64_t>(a.test_days) * 86400;
  PreprocessSummary summary;
  const Dataset ds = preprocess(events, opt, &summary);
  save_dataset(ds, a.out);

  std::cout << config_line({{"input", a.input},
                            {"out", a.out},
                            {"min-item-support", std::to_string(opt.min_item_support)},
                            {"min-session-len", std::to_string(opt.min_session_len)},
                            {"max-session-len", std::to_string(opt.max_session_len)},
                            {"head-fraction", fmt(opt.head_fraction)},
                            {"test-days", std::to_string(a.test_days)}})
            << "\n";
  std::cout << "events parsed: " << stats.rows - stats.malformed << " (" << stats.malformed
            << " malformed rows dropped)\n";
  std::cout << "sessions kept: " << summary.sessions_kept << " of " << summary.sessions_total
            << "\n";
  std::cout << "items: " << ds.catalog.size() << "\n";
  std::cout << "head items: " << ds.catalog.head_count() << "\n";
  std::cout << "tail items: " << ds.catalog.tail_count() << "\n";
  std::cout << "train pairs: " << ds.train.size() << " (sessions " << summary.train_sessions
            << ")\n";
  std::cout << "valid pairs: " << ds.valid.size() << " (sessions " << summary.valid_sessions
            << ", " << summary.valid_pairs_dropped << " pairs dropped)\n";
  std::cout << "test pairs: " << ds.test.size() << " (sessions " << summary.test_sessions
            << ", " << summary.test_pairs_dropped << " pairs dropped)\n";
  std::cout << "wrote " << a.out << "\n";
}

// ---------------------------------------------------------------- train --

struct TrainArgs {
  std::string data;
  std::string out;
  TrainConfig config;
  bool no_pm = false;
  int threads = default_threads();
};

void run_train(const TrainArgs& a) {
  TrainConfig config = a.config;
  config.use_pm = !a.no_pm;
  config.validate();
  if (a.threads < 1) throw UserError("thread count must be positive");

  const Dataset ds = load_dataset(a.data);
  std::cout << config_line({{"data", a.data},
                            {"out", a.out},
                            {"d", std::to_string(config.d)},
                            {"lr", fmt(config.learning_rate)},
                            {"batch", std::to_string(config.batch_size)},
                            {"epochs", std::to_string(config.epochs)},
                            {"l2", fmt(config.l2)},
                            {"seed", std::to_string(config.seed)},
                            {"pm", config.use_pm ? "on" : "off"},
                            {"patience", std::to_string(config.early_stop_patience)},
                            {"threads", std::to_string(a.threads)}})
            << "\n";
  std::cout << "epoch,train_loss,valid_mrr20\n";
  const TrainResult res = train(ds, config, a.threads, [](const EpochStats& s) {
    std::cout << s.epoch << ',' << fmt(s.mean_train_loss) << ',' << fmt(s.valid_mrr) << "\n";
    std::cout.flush();
  });
  save_checkpoint(res.checkpoint, a.out);

  std::cout << "# initial valid MRR@20: " << fmt(res.initial_valid_mrr) << "\n";
  std::cout << "# best epoch: " << res.checkpoint.best_epoch
            << " (valid MRR@20: " << fmt(res.checkpoint.best_valid_mrr) << ")\n";
  std::cout << "# wrote " << a.out << "\n";
}

// ----------------------------------------------------------------- eval --

struct EvalArgs {
  std::string data;
  std::string model;
  std::string method = "tailnet";
  std::vector<int> ks = {5, 10, 15, 20};
  std::string out;
  int threads = default_threads();
};

void require_same_catalog(const ItemCatalog& trained, const ItemCatalog& data) {
  const char* msg = "checkpoint catalog disagrees with the dataset catalog";
  if (trained.size() != data.size()) throw UserError(msg);
  for (int32_t i = 0; i < trained.size(); ++i)
    if (trained.id_of(i) != data.id_of(i) ||
        trained.click_count(i) != data.click_count(i) ||
        trained.is_tail(i) != data.is_tail(i))
      throw UserError(msg);
}

void run_eval(const EvalArgs& a) {
  if (a.threads < 1) throw UserError("thread count must be positive");
  if (a.ks.empty()) throw UserError("at least one cutoff K is required");
  for (int k : a.ks)
    if (k < 1) throw UserError("cutoffs must be positive");

  const Dataset ds = load_dataset(a.data);
  const bool is_tailnet = a.method == "tailnet" || a.method == "tailnet-proportion";

  ListBuilder build;
  Checkpoint cp;  // kept alive for the tailnet builders
  ItemKnn knn;
  if (is_tailnet) {
    if (a.model.empty())
      throw UserError("--model is required for method '" + a.method + "'");
    cp = load_checkpoint(a.model);
    require_same_catalog(cp.catalog, ds.catalog);
    const auto model = std::make_shared<TailNetModel>(cp.params, cp.catalog.tail_flags());
    if (a.method == "tailnet") {
      const bool use_pm = cp.config.use_pm;
      build = lists_by_score(
          [model, use_pm](const Session& prefix) { return model->score(prefix, use_pm).y_hat; });
    } else {
      const ItemCatalog& cat = ds.catalog;
      build = [model, &cat](const Session& prefix, const std::vector<int>& ks) {
        const Tensor c_hat = model->score(prefix, false).c_hat;
        std::vector<std::vector<int32_t>> lists;
        lists.reserve(ks.size());
        for (int k : ks) lists.push_back(proportion_rerank(c_hat, prefix, cat, k));
        return lists;
      };
    }
  } else if (a.method == "pop") {
    const Tensor scores = pop_scores(ds.catalog);
    build = lists_by_score([scores](const Session&) { return scores; });
  } else if (a.method == "spop") {
    const ItemCatalog& cat = ds.catalog;
    build = lists_by_score([&cat](const Session& prefix) { return spop_scores(cat, prefix); });
  } else if (a.method == "itemknn") {
    knn = ItemKnn::build(reconstruct_sessions(ds.train), ds.catalog.size());
    build = lists_by_score([&knn](const Session& prefix) { return knn.score(prefix); },
                           /*exclude_prefix=*/true);
  } else {
    throw UserError("unknown method '" + a.method +
                    "' (expected tailnet, tailnet-proportion, pop, spop or itemknn)");
  }

  const MetricsReport rep = evaluate(build, ds.test, ds.catalog, a.ks, a.threads);

  std::string ks_str;
  for (size_t i = 0; i < a.ks.size(); ++i)
    ks_str += (i ? "," : "") + std::to_string(a.ks[i]);
  const std::string provenance = config_line({{"data", a.data},
                                              {"model", a.model.empty() ? "-" : a.model},
                                              {"method", a.method},
                                              {"ks", ks_str},
                                              {"threads", std::to_string(a.threads)},
                                              {"sessions", std::to_string(rep.sessions)}});

  std::ofstream out = open_out(a.out);
  out << provenance << "\n";
  out << "method,metric,K,value\n";
  for (const MetricsAtK& m : rep.per_k) {
    out << a.method << ",recall," << m.k << ',' << fmt(m.recall) << "\n";
    out << a.method << ",mrr," << m.k << ',' << fmt(m.mrr) << "\n";
    out << a.method << ",coverage," << m.k << ',' << fmt(m.coverage) << "\n";
    out << a.method << ",tail_coverage," << m.k << ',' << fmt(m.tail_coverage) << "\n";
    out << a.method << ",tail," << m.k << ',' << fmt(m.tail) << "\n";
  }
  if (!out.flush()) throw IoError("failed to write '" + a.out + "'");

  std::cout << provenance << "\n";
  std::printf("%6s %9s %9s %9s %9s %9s\n", "K", "Recall", "MRR", "Coverage", "TailCov", "Tail");
  for (const MetricsAtK& m : rep.per_k)
    std::printf("%6d %9.4f %9.4f %9.4f %9.4f %9.4f\n", m.k, m.recall, m.mrr, m.coverage,
                m.tail_coverage, m.tail);
  std::cout << "wrote " << a.out << "\n";
}

// ------------------------------------------------------------ recommend --

struct RecommendArgs {
  std::string model;
  std::string session;
  int k = 20;
};

void run_recommend(const RecommendArgs& a) {
  if (a.k < 1) throw UserError("K must be positive");
  const Checkpoint cp = load_checkpoint(a.model);

  Session prefix;
  std::stringstream ss(a.session);
  std::string id;
  while (std::getline(ss, id, ',')) {
    if (id.empty()) continue;
    const int32_t idx = cp.catalog.index_of(id);
    if (idx < 0) throw UserError("unknown item id '" + id + "'");
    prefix.push_back(idx);
  }
  if (prefix.empty()) throw UserError("session must name at least one item");

  const TailNetModel model(cp.params, cp.catalog.tail_flags());
  const TailNetModel::Scores s = model.score(prefix, cp.config.use_pm);

  std::cout << config_line({{"model", a.model},
                            {"session", a.session},
                            {"k", std::to_string(a.k)},
                            {"pm", cp.config.use_pm ? "on" : "off"}})
            << "\n";
  std::cout << "rank,item,score,class\n";
  const auto list = topk(s.y_hat, a.k);
  for (size_t r = 0; r < list.size(); ++r)
    std::cout << r + 1 << ',' << cp.catalog.id_of(list[r]) << ',' << fmt(s.y_hat[list[r]])
              << ',' << (cp.catalog.is_tail(list[r]) ? "TAIL" : "HEAD") << "\n";
  if (cp.config.use_pm)
    std::cout << "preference: r_head=" << fmt(s.r_head) << " r_tail=" << fmt(s.r_tail) << "\n";
  else
    std::cout << "preference: disabled (model trained without the preference mechanism)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tailnet: session-based recommender with long-tail rebalancing"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "plain-text key=value config file; one [section] per subcommand; "
                 "command-line flags override it");

  SynthArgs synth;
  CLI::App* s = app.add_subcommand("synth", "generate a synthetic Zipf click log");
  s->add_option("--sessions", synth.opt.num_sessions, "number of sessions")
      ->capture_default_str();
  s->add_option("--items", synth.opt.num_items, "catalog size")->capture_default_str();
  s->add_option("--zipf", synth.opt.zipf_exponent, "popularity exponent")
      ->capture_default_str();
  s->add_option("--mean-len", synth.opt.mean_len, "mean session length (minimum 2)")
      ->capture_default_str();
  s->add_option("--seed", synth.opt.seed, "generator seed")->capture_default_str();
  s->add_option("--out", synth.out, "output CSV path")->required();
  s->callback([&] { run_synth(synth); });

  PrepareArgs prep;
  CLI::App* p = app.add_subcommand("prepare", "preprocess a click log into a dataset file");
  p->add_option("--input", prep.input, "input CSV (session_id,timestamp,item_id)")->required();
  p->add_option("--out", prep.out, "output dataset path")->required();
  p->add_option("--min-item-support", prep.opt.min_item_support,
                "drop items clicked fewer times")
      ->capture_default_str();
  p->add_option("--min-session-len", prep.opt.min_session_len, "drop shorter sessions")
      ->capture_default_str();
  p->add_option("--max-session-len", prep.opt.max_session_len,
                "keep only the last N clicks of longer sessions")
      ->capture_default_str();
  p->add_option("--head-fraction", prep.opt.head_fraction,
                "share of the catalog forming the popular head")
      ->capture_default_str();
  p->add_option("--test-days", prep.test_days, "days forming the test window (valid uses the "
                                               "window before)")
      ->capture_default_str();
  p->callback([&] { run_prepare(prep); });

  TrainArgs tr;
  CLI::App* t = app.add_subcommand("train", "train a model on a dataset file");
  t->add_option("--data", tr.data, "dataset file from prepare")->required();
  t->add_option("--out", tr.out, "output checkpoint path")->required();
  t->add_option("--d", tr.config.d, "embedding width")->capture_default_str();
  t->add_option("--lr", tr.config.learning_rate, "learning rate")->capture_default_str();
  t->add_option("--batch", tr.config.batch_size, "batch size")->capture_default_str();
  t->add_option("--epochs", tr.config.epochs, "training epochs")->capture_default_str();
  t->add_option("--l2", tr.config.l2, "decoupled weight decay")->capture_default_str();
  t->add_option("--seed", tr.config.seed, "run seed")->capture_default_str();
  t->add_option("--patience", tr.config.early_stop_patience,
                "stop after this many epochs without validation improvement")
      ->capture_default_str();
  t->add_flag("--no-pm", tr.no_pm, "disable the preference mechanism");
  t->add_option("--threads", tr.threads, "worker threads")->capture_default_str();
  t->callback([&] { run_train(tr); });

  EvalArgs ev;
  CLI::App* e = app.add_subcommand("eval", "evaluate a method on a dataset's test split");
  e->add_option("--data", ev.data, "dataset file from prepare")->required();
  e->add_option("--model", ev.model, "checkpoint (required for tailnet methods)");
  e->add_option("--method", ev.method,
                "tailnet | tailnet-proportion | pop | spop | itemknn")
      ->capture_default_str();
  e->add_option("--k", ev.ks, "cutoffs, comma separated")
      ->delimiter(',')
      ->capture_default_str();
  e->add_option("--out", ev.out, "output report CSV path")->required();
  e->add_option("--threads", ev.threads, "worker threads")->capture_default_str();
  e->callback([&] { run_eval(ev); });

  RecommendArgs rec;
  CLI::App* r = app.add_subcommand("recommend", "rank items for an ad-hoc session");
  r->add_option("--model", rec.model, "checkpoint path")->required();
  r->add_option("--session", rec.session, "comma-separated item ids, oldest first")
      ->required();
  r->add_option("--k", rec.k, "list length")->capture_default_str();
  r->callback([&] { run_recommend(rec); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);  // --help/--version: prints and exits cleanly
  } catch (const CLI::ParseError& err) {
    app.exit(err);  // prints the message
    return 2;
  } catch (const tailnet::UserError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
