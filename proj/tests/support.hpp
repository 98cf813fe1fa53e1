#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hpprop/corpus.hpp"
#include "hpprop/fixture.hpp"
#include "hpprop/ledger.hpp"
#include "hpprop/search.hpp"
#include "hpprop/shorten.hpp"
#include "hpprop/tokenizer.hpp"
#include "hpprop/trainer.hpp"

namespace testing_support {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

void write_file(const fs::path& path, const std::string& content);
std::string read_file(const fs::path& path);

fs::path recorded_fixture_path();
hpprop::FixtureTable recorded_fixture();

// Six classes, each with its own keywords, shared filler words and
// stopwords; documents spread round-robin over the folds.
struct KeywordCorpus {
  hpprop::FoldedCorpus corpus;
  std::vector<std::string> vocab_entries;
  std::vector<std::string> stopwords;
  std::string jsonl;  // {id, label, text, fold} lines
};
KeywordCorpus make_keyword_corpus(std::size_t n_docs, int folds, std::uint64_t seed);

// Per-epoch unimodal F1 over a window of learning-rate grid points. Every
// fold sees the average plus a fold offset; the offsets sum to zero.
class SyntheticSurface {
 public:
  SyntheticSurface(std::uint64_t seed, long first_index, int points, int epochs, int folds);

  double average(long lr_index, int epoch) const;  // epoch is 1-based
  double fold_value(long lr_index, int epoch, int fold) const;
  long argmax(int epoch) const;
  long first_index() const { return first_; }
  int points() const { return points_; }

 private:
  long first_;
  int points_;
  int epochs_;
  int folds_;
  std::vector<long> peak_;
  std::vector<double> height_;
  std::vector<double> slope_;
  std::vector<double> offsets_;
};

class SurfaceBackend : public hpprop::TrainerBackend {
 public:
  explicit SurfaceBackend(const SyntheticSurface& surface) : surface_(surface) {}
  std::string id() const override { return "synthetic"; }
  bool deterministic() const override { return true; }
  std::vector<hpprop::EpochResult> run(const hpprop::Hyperparams& hp, int fold) override;
  bool ping(int) override { return true; }
  std::size_t runs() const { return runs_; }
  std::size_t epochs_trained() const { return epochs_; }

 private:
  const SyntheticSurface& surface_;
  std::atomic<std::size_t> runs_{0};
  std::atomic<std::size_t> epochs_{0};
};

// Simulates the process dying: after `allowed` completed runs, the next
// run throws something that is not a TrainerError.
struct InjectedCrash : std::runtime_error {
  InjectedCrash() : std::runtime_error("injected crash") {}
};

class CrashingBackend : public hpprop::TrainerBackend {
 public:
  CrashingBackend(hpprop::TrainerBackend& inner, std::size_t allowed)
      : inner_(inner), allowed_(allowed) {}
  std::string id() const override { return inner_.id(); }
  bool deterministic() const override { return inner_.deterministic(); }
  std::string corpus_variant() const override { return inner_.corpus_variant(); }
  std::vector<hpprop::EpochResult> run(const hpprop::Hyperparams& hp, int fold) override;
  bool ping(int bs) override { return inner_.ping(bs); }
  std::size_t completed() const { return completed_; }

 private:
  hpprop::TrainerBackend& inner_;
  std::size_t allowed_;
  std::atomic<std::size_t> completed_{0};
};

hpprop::SearchConfig synthetic_search_config(const SyntheticSurface& surface);

struct CliResult {
  int exit_code = -1;
  std::string out;
};
// Runs the hpprop binary with the given shell-quoted arguments; stderr is discarded.
CliResult run_cli(const std::string& args);

// Count of (lr, bs, epochs, fold) keys with more than one DONE record.
std::size_t duplicate_done_keys(const std::vector<hpprop::TrialRecord>& records);

}  // namespace testing_support
