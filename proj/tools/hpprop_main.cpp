#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "hpprop/builtin_model.hpp"
#include "hpprop/corpus.hpp"
#include "hpprop/external.hpp"
#include "hpprop/fixture.hpp"
#include "hpprop/ledger.hpp"
#include "hpprop/report.hpp"
#include "hpprop/search.hpp"
#include "hpprop/shorten.hpp"
#include "hpprop/tokenizer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace hpprop;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kBackend = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string corpus;
  std::string vocab;
  std::string stopwords;
  std::string strategy = "a1";
  std::size_t budget = 128;
  std::string backend;
  std::optional<int> bs;
  double lr = 5e-5;
  int epochs = 3;
  std::uint64_t seed = 0;
  std::string ledger;
  std::string out;
  std::string data;
  int workers = 1;
  std::optional<std::size_t> session_trials;
  std::optional<double> session_seconds;
  std::optional<int> fold;
  std::string per_doc_csv;
  int folds = 5;
};

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

// Writes to --out when given, stdout otherwise.
void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(o.out, std::ios::binary);
  if (!f) throw CorpusError("cannot write " + o.out);
  f << text;
}

StopwordList load_stopwords(const Options& o) {
  return o.stopwords.empty() ? StopwordList() : StopwordList::load(o.stopwords);
}

std::unique_ptr<TrainerBackend> make_backend(const Options& o) {
  require(o.backend, "--backend");
  if (o.backend == "builtin") {
    require(o.corpus, "--corpus");
    require(o.vocab, "--vocab");
    return std::make_unique<BuiltinBackend>(load_corpus_jsonl(o.corpus, o.folds),
                                            SubwordVocab::load(o.vocab), load_stopwords(o));
  }
  if (o.backend.starts_with("exec:")) {
    require(o.data, "--data");
    return std::make_unique<ExternalBackend>(ExternalEndpoint{o.backend.substr(5)}, o.data);
  }
  if (o.backend.starts_with("fixture:")) {
    const fs::path table = o.backend.substr(8);
    return std::make_unique<FixtureBackend>(FixtureTable::load(table, o.folds),
                                            table.filename().string());
  }
  throw UsageError("unknown backend '" + o.backend + "' (builtin, exec:<command>, fixture:<file>)");
}

Hyperparams hyperparams(const Options& o) {
  Hyperparams hp;
  hp.lr = o.lr;
  hp.batch_size = o.bs.value_or(128);
  hp.epochs = o.epochs;
  hp.seed = o.seed;
  hp.budget = {o.budget};
  hp.strategy = parse_strategy(o.strategy);
  return hp;
}

int cmd_audit(const Options& o) {
  require(o.corpus, "--corpus");
  require(o.vocab, "--vocab");
  const auto vocab = SubwordVocab::load(o.vocab);
  const auto docs = load_documents_jsonl(o.corpus);
  const auto report = audit(docs, vocab);
  emit(o, report.to_json() + "\n");
  if (!o.per_doc_csv.empty()) {
    std::ofstream f(o.per_doc_csv, std::ios::binary);
    if (!f) throw CorpusError("cannot write " + o.per_doc_csv);
    f << report.per_document_csv();
  }
  return kOk;
}

int cmd_prepare(const Options& o) {
  require(o.corpus, "--corpus");
  require(o.out, "--out");
  auto corpus = load_corpus_jsonl(o.corpus, o.folds);
  for (auto& fold : corpus.folds) {
    for (auto& doc : fold) doc.text = clean_whitespace(doc.text);
  }
  if (o.fold && (*o.fold < 0 || *o.fold >= o.folds)) {
    throw CorpusError("fold index " + std::to_string(*o.fold) + " out of range [0, " +
                      std::to_string(o.folds) + ")");
  }
  const int first = o.fold.value_or(0);
  const int last = o.fold ? *o.fold : o.folds - 1;
  for (int k = first; k <= last; ++k) {
    const auto split = make_split(corpus, k, o.seed);
    const auto paths = split_paths_for_fold(o.out, k);
    fs::create_directories(paths.train.parent_path());
    write_documents_jsonl(paths.train, upsample_balance(split.train, o.seed));
    write_documents_jsonl(paths.valid, split.valid);
    write_documents_jsonl(paths.test, split.test);
    std::cerr << "fold " << k << ": train " << split.train.size() << " -> upsampled, valid "
              << split.valid.size() << ", test " << split.test.size() << '\n';
  }
  return kOk;
}

int cmd_shorten(const Options& o) {
  require(o.corpus, "--corpus");
  require(o.vocab, "--vocab");
  const Strategy strategy = parse_strategy(o.strategy);
  const auto stopwords = load_stopwords(o);
  if (uses_stopwords(strategy) && stopwords.empty()) {
    throw ConfigError("strategy " + to_string(strategy) + " needs a stopword list (--stopwords)");
  }
  const auto vocab = SubwordVocab::load(o.vocab);
  std::string text;
  for (const auto& doc : load_documents_jsonl(o.corpus)) {
    const auto words = apply_strategy(word_tokenize(clean_whitespace(doc.text)), strategy, stopwords);
    json j{{"id", doc.id}, {"label", doc.label},
           {"tokens", truncate(words, strategy, {o.budget}, vocab)}};
    text += j.dump() + '\n';
  }
  emit(o, text);
  return kOk;
}

int cmd_train(const Options& o) {
  const auto hp = hyperparams(o);
  hp.validate(hp.epochs);
  auto backend = make_backend(o);
  std::string text;
  for (const auto& e : backend->run(hp, o.fold.value_or(0))) {
    text += json{{"epoch", e.epoch}, {"f1_test", e.f1_test}, {"valid_loss", e.valid_loss}}.dump() + '\n';
  }
  emit(o, text);
  return kOk;
}

// Trial context fixed at `hpo init`, stored next to the ledger.
fs::path meta_path(const Options& o) { return o.ledger + ".meta.json"; }

json load_meta(const Options& o) {
  std::ifstream f(meta_path(o));
  if (!f) throw UsageError("no search metadata at " + meta_path(o).string() + "; run `hpo init` first");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw LedgerError(meta_path(o).string() + ": " + e.what());
  }
}

SearchConfig search_config(const json& meta) {
  SearchConfig cfg;
  cfg.lr0 = meta.at("lr0").get<double>();
  cfg.max_epochs = meta.at("max_epochs").get<int>();
  cfg.initial_batch_size = meta.at("batch_size").get<int>();
  cfg.fold_count = meta.at("folds").get<int>();
  cfg.seed = meta.at("seed").get<std::uint64_t>();
  cfg.budget = {meta.at("max_tokens").get<std::size_t>()};
  cfg.strategy = parse_strategy(meta.at("strategy").get<std::string>());
  return cfg;
}

// Flags that define the trial context must agree with the ledger's.
void check_context(const Options& o, const CLI::App& app, const json& meta) {
  auto clash = [&](const char* flag, const std::string& given, const std::string& stored) {
    if (app.count(flag) > 0 && given != stored) {
      throw UsageError(std::string(flag) + " " + given + " differs from the ledger's " + stored);
    }
  };
  clash("--strategy", to_string(parse_strategy(o.strategy)), meta.at("strategy").get<std::string>());
  clash("--budget", std::to_string(o.budget), std::to_string(meta.at("max_tokens").get<std::size_t>()));
  clash("--seed", std::to_string(o.seed), std::to_string(meta.at("seed").get<std::uint64_t>()));
  clash("--backend", o.backend, meta.at("backend").get<std::string>());
}

int cmd_hpo_init(const Options& o, const CLI::App& app) {
  require(o.ledger, "--ledger");
  require(o.backend, "--backend");
  if (fs::exists(o.ledger) && fs::file_size(o.ledger) > 0) {
    throw UsageError(o.ledger + " already holds trials");
  }
  int bs = 0;
  std::string backend_id;
  {
    auto backend = make_backend(o);
    backend_id = backend->id();
    bs = o.bs ? *o.bs : probe_batch_size(*backend);
  }
  json meta{{"backend", o.backend}, {"backend_id", backend_id}, {"batch_size", bs},
            {"lr0", app.count("--lr") > 0 ? o.lr : SearchConfig{}.lr0},
            {"max_epochs", o.epochs}, {"folds", o.folds}, {"seed", o.seed},
            {"max_tokens", o.budget}, {"strategy", to_string(parse_strategy(o.strategy))}};
  search_config(meta).validate();
  Ledger::open(o.ledger);
  std::ofstream f(meta_path(o), std::ios::binary);
  if (!f) throw LedgerError("cannot write " + meta_path(o).string());
  f << meta.dump(2) << '\n';
  std::cout << "initialized " << o.ledger << " (batch size " << bs << ", backend " << backend_id << ")\n";
  return kOk;
}

int cmd_hpo_run(Options o, const CLI::App& app) {
  require(o.ledger, "--ledger");
  const auto meta = load_meta(o);
  check_context(o, app, meta);
  o.backend = meta.at("backend").get<std::string>();
  const auto cfg = search_config(meta);
  auto ledger = Ledger::open(o.ledger);
  auto backend = make_backend(o);
  SessionBudget budget;
  budget.max_trials = o.session_trials;
  if (o.session_seconds) budget.max_wall = std::chrono::duration<double>(*o.session_seconds);
  SearchEngine engine(cfg, ledger, backend.get(), meta.at("backend_id").get<std::string>(), budget,
                      o.workers);
  const auto report = engine.run_session();
  const auto records = ledger.snapshot();
  std::cout << status_report(report.state, records, &engine.context());
  std::cout << report.trials_run << " trials run this session" << (report.paused ? ", paused" : "") << '\n';
  return report.state.blocked.empty() ? kOk : kBackend;
}

int cmd_hpo_status(const Options& o) {
  require(o.ledger, "--ledger");
  if (!fs::exists(o.ledger)) throw UsageError("no ledger at " + o.ledger);
  const auto meta = load_meta(o);
  auto ledger = Ledger::open(o.ledger);
  const auto cfg = search_config(meta);
  const auto backend_id = meta.at("backend_id").get<std::string>();
  const TrialContext context{cfg.strategy, cfg.budget.max_tokens, cfg.seed, backend_id};
  const auto state = reconstruct_state(ledger, cfg, backend_id);
  std::cout << status_report(state, ledger.snapshot(), &context);
  return kOk;
}

int cmd_hpo_report(const Options& o) {
  require(o.ledger, "--ledger");
  if (!fs::exists(o.ledger)) throw UsageError("no ledger at " + o.ledger);
  const auto meta = load_meta(o);
  auto ledger = Ledger::open(o.ledger);
  const auto cfg = search_config(meta);
  const auto backend_id = meta.at("backend_id").get<std::string>();
  const TrialContext context{cfg.strategy, cfg.budget.max_tokens, cfg.seed, backend_id};
  const auto state = reconstruct_state(ledger, cfg, backend_id);
  const auto records = ledger.snapshot();
  emit(o, "## Average F1 per learning rate\n\n" + averages_table_markdown(records, &context) +
              "\n## Best settings\n\n" + summary_markdown(state, cfg.strategy, cfg.budget.max_tokens));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text classification tooling: corpus preparation, tokenization audit, shortening "
               "strategies and ledger-backed learning-rate / batch-size search."};
  app.set_config("--config", "", "key = value file; command-line flags override it");
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  app.add_option("--corpus", o.corpus, "Corpus JSONL {id, label, text, fold}");
  app.add_option("--vocab", o.vocab, "Subword vocabulary, one token per line");
  app.add_option("--stopwords", o.stopwords, "Stopword list, one word per line");
  app.add_option("--strategy", o.strategy, "Shortening strategy a1..a5, b1, b2, c1");
  app.add_option("--budget", o.budget, "Token budget")->check(CLI::PositiveNumber);
  app.add_option("--backend", o.backend, "builtin | exec:<command> | fixture:<file>");
  app.add_option("--bs", o.bs, "Batch size")->check(CLI::PositiveNumber);
  app.add_option("--lr", o.lr, "Learning rate (search: starting LR)")->check(CLI::PositiveNumber);
  app.add_option("--epochs", o.epochs, "Epochs (search: maximum epochs)")->check(CLI::PositiveNumber);
  app.add_option("--seed", o.seed, "Random seed");
  app.add_option("--ledger", o.ledger, "Trial ledger JSONL");
  app.add_option("--out", o.out, "Output file or directory");
  app.add_option("--data", o.data, "Prepared split directory for exec: backends");
  app.add_option("--workers", o.workers, "Concurrent fold trials")->check(CLI::PositiveNumber);
  app.add_option("--session-trials", o.session_trials, "Trial budget for this session");
  app.add_option("--session-seconds", o.session_seconds, "Wall-clock budget for this session");
  app.add_option("--fold", o.fold, "Fold index (0-based)");
  app.add_option("--folds", o.folds, "Number of folds")->check(CLI::Range(2, 100));
  app.add_option("--per-doc-csv", o.per_doc_csv, "Audit: per-document ratios as CSV");

  auto* audit_cmd = app.add_subcommand("audit", "Subword inflation audit");
  auto* prepare_cmd = app.add_subcommand("prepare", "Clean, split and upsample per fold");
  auto* shorten_cmd = app.add_subcommand("shorten", "Apply a shortening strategy and truncate");
  auto* train_cmd = app.add_subcommand("train", "Run one training trial");
  auto* hpo = app.add_subcommand("hpo", "Learning-rate / batch-size search");
  hpo->require_subcommand(1);
  auto* hpo_init = hpo->add_subcommand("init", "Create a ledger and fix the trial context");
  auto* hpo_run = hpo->add_subcommand("run", "Continue the search within the session budget");
  auto* hpo_status = hpo->add_subcommand("status", "Show the search state (read-only)");
  auto* hpo_report = hpo->add_subcommand("report", "Markdown tables of averages and conclusions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*audit_cmd) return cmd_audit(o);
    if (*prepare_cmd) return cmd_prepare(o);
    if (*shorten_cmd) return cmd_shorten(o);
    if (*train_cmd) return cmd_train(o);
    if (*hpo_init) return cmd_hpo_init(o, app);
    if (*hpo_run) return cmd_hpo_run(o, app);
    if (*hpo_status) return cmd_hpo_status(o);
    if (*hpo_report) return cmd_hpo_report(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kUsage;
  } catch (const TrainerError& e) {
    std::cerr << "backend error: " << e.reason() << '\n';
    return e.kind() == TrainerError::Kind::Data ? kData : kBackend;
  } catch (const std::exception& e) {  // corpus, vocab, ledger and I/O errors
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
