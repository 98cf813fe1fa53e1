#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hpprop {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Document {
  std::string id;
  std::string label;
  std::string text;

  friend bool operator==(const Document&, const Document&) = default;
};

struct FoldedCorpus {
  std::vector<std::vector<Document>> folds;
  std::set<std::string> labels;
  double valid_fraction = 0.05;

  std::size_t size() const;
};

struct SplitView {
  std::vector<Document> train;
  std::vector<Document> valid;
  std::vector<Document> test;
  int test_fold_index = 0;
  std::uint64_t seed = 0;
};

struct ClassCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
};

// Per-class confusion counts keyed by label.
struct ConfusionCounts {
  std::map<std::string, ClassCounts> classes;

  // Registers a class with zero counts so it takes part in macro averaging.
  void add_class(const std::string& label) { classes.try_emplace(label); }
  void record(const std::string& truth, const std::string& predicted);
};

// Replaces \n, \r, \t and U+00A0 with spaces, collapses space runs and trims.
std::string clean_whitespace(std::string_view text);

// Reads {id, label, text, fold} records. Fails on the first malformed line,
// reporting its 1-based number. Fold count defaults to 5; records must use
// indices below it.
FoldedCorpus load_corpus_jsonl(const std::filesystem::path& path, int fold_count = 5);
FoldedCorpus parse_corpus_jsonl(std::string_view content, int fold_count = 5);

// One line per document; `fold` is written when non-negative.
std::string to_jsonl_line(const Document& doc, int fold = -1);
void write_documents_jsonl(const std::filesystem::path& path, const std::vector<Document>& docs,
                           int fold = -1);
std::vector<Document> load_documents_jsonl(const std::filesystem::path& path);

struct SplitOptions {
  bool stratified = false;
};

SplitView make_split(const FoldedCorpus& corpus, int test_fold_index, std::uint64_t seed,
                     SplitOptions options = {});

// Duplicates minority-class documents until each class matches the largest
// one: whole passes over the class first, then a seeded sample for the
// remainder. The result is shuffled with the same seed.
std::vector<Document> upsample_balance(const std::vector<Document>& train, std::uint64_t seed);

std::map<std::string, std::size_t> class_counts(const std::vector<Document>& docs);

// Unweighted mean of per-class 2TP/(2TP+FP+FN); empty classes score 0.
double macro_f1(const ConfusionCounts& counts);
double micro_f1(const ConfusionCounts& counts);

}  // namespace hpprop
