#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hpprop/lr_grid.hpp"
#include "hpprop/trainer.hpp"

namespace hpprop {

struct FixtureRow {
  LrGridPoint lr;
  int batch_size = 0;
  int fold = 0;  // kAllFolds for an all-fold average row
  std::vector<double> f1;
  std::vector<double> valid_loss;  // empty or same length as f1
};

// Recorded trial results keyed by (lr, batch size, fold). A k-epoch row
// answers any request for up to k epochs.
//
// A row for fold "all" holds all-fold averages. A fold without its own row
// but covered by an "all" row is answered with the value that keeps the
// fold mean equal to the recorded average, given the folds that do have
// explicit rows:
//   v = (n * avg - sum of explicit folds) / (n - number of explicit folds)
class FixtureTable {
 public:
  explicit FixtureTable(int fold_count = 5) : fold_count_(fold_count) {}

  // JSONL: {"lr":5e-5,"batch_size":128,"fold":0|"all","f1":[...],"valid_loss":[...]}
  // Blank lines and lines starting with '#' are skipped.
  static FixtureTable load(const std::filesystem::path& path, int fold_count = 5);
  static FixtureTable parse(std::string_view content, int fold_count = 5);

  void add(FixtureRow row);
  const std::vector<FixtureRow>& rows() const { return rows_; }
  int fold_count() const { return fold_count_; }
  bool has_batch_size(int batch_size) const;

  // Throws TrainerError(FixtureMiss) naming the key.
  std::vector<EpochResult> lookup(LrGridPoint lr, int batch_size, int epochs, int fold) const;

 private:
  const FixtureRow* find(LrGridPoint lr, int batch_size, int fold) const;

  int fold_count_;
  std::vector<FixtureRow> rows_;
};

std::vector<EpochResult> run_fixture(const FixtureTable& table, const Hyperparams& hp, int fold);

class FixtureBackend final : public TrainerBackend {
 public:
  FixtureBackend(FixtureTable table, std::string name)
      : table_(std::move(table)), name_(std::move(name)) {}

  std::string id() const override { return "fixture:" + name_; }
  bool deterministic() const override { return true; }
  std::vector<EpochResult> run(const Hyperparams& hp, int fold) override {
    return run_fixture(table_, hp, fold);
  }
  bool ping(int batch_size) override { return table_.has_batch_size(batch_size); }

 private:
  FixtureTable table_;
  std::string name_;
};

}  // namespace hpprop
