#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hpprop/corpus.hpp"
#include "hpprop/trainer.hpp"

namespace hpprop {

// 64-bit FNV-1a; stable across platforms, unlike std::hash.
std::uint64_t fnv1a64(std::string_view s);

struct SparseVector {
  std::vector<std::uint32_t> index;  // strictly increasing
  std::vector<double> value;
};

// Token counts hashed into 2^bits buckets, L2-normalized.
SparseVector hash_features(const std::vector<std::string>& tokens, unsigned bits);

struct Example {
  SparseVector x;
  int label = -1;  // -1: class unknown to the model
};

// Mean cross-entropy of softmax(logits) against `label`, with its gradient
// with respect to the logits written into `grad` (same length as logits).
double softmax_cross_entropy(std::span<const double> logits, int label, std::span<double> grad);

// Multinomial logistic regression over sparse inputs. Parameters are the
// row-major class-by-feature weights followed by one bias per class.
class SoftmaxRegression {
 public:
  SoftmaxRegression(std::size_t n_classes, std::size_t dim);

  std::size_t n_classes() const { return n_classes_; }
  std::size_t dim() const { return dim_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::vector<double> logits(const SparseVector& x) const;
  int predict(const SparseVector& x) const;

  // Mean loss over `batch`; `grad` is overwritten with the mean gradient.
  double loss_and_gradient(std::span<const Example> batch, std::span<double> grad) const;

 private:
  std::size_t n_classes_;
  std::size_t dim_;
  std::vector<double> params_;
};

struct BuiltinOptions {
  unsigned hash_bits = 18;
  double head_share = 0.5;
  bool upsample = true;
};

// Featurizes one raw document: clean, word split, strategy, truncation, hashing.
SparseVector featurize(const std::string& text, const Hyperparams& hp, const SubwordVocab& vocab,
                       const StopwordList& stopwords, const BuiltinOptions& options);

// Mini-batch AdamW training from zero weights. After each epoch reports
// macro-F1 on split.test and mean cross-entropy on split.valid. Training data
// is used as given (callers upsample beforehand).
std::vector<EpochResult> train_builtin(const SplitView& split, const Hyperparams& hp,
                                       const OptimizerConfig& cfg, const SubwordVocab& vocab,
                                       const StopwordList& stopwords,
                                       const BuiltinOptions& options = {});

class BuiltinBackend final : public TrainerBackend {
 public:
  BuiltinBackend(FoldedCorpus corpus, SubwordVocab vocab, StopwordList stopwords,
                 BuiltinOptions options = {}, OptimizerConfig optimizer = {});

  std::string id() const override { return "builtin"; }
  bool deterministic() const override { return true; }
  std::string corpus_variant() const override {
    return options_.upsample ? "upsampled" : "original";
  }
  std::vector<EpochResult> run(const Hyperparams& hp, int fold) override;
  bool ping(int batch_size) override { return batch_size >= 1; }

 private:
  FoldedCorpus corpus_;
  SubwordVocab vocab_;
  StopwordList stopwords_;
  BuiltinOptions options_;
  OptimizerConfig optimizer_;
};

}  // namespace hpprop
