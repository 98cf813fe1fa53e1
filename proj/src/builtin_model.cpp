#include "hpprop/builtin_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "hpprop/rng.hpp"

namespace hpprop {

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

SparseVector hash_features(const std::vector<std::string>& tokens, unsigned bits) {
  const std::uint64_t mask = (std::uint64_t{1} << bits) - 1;
  std::map<std::uint32_t, double> counts;
  for (const auto& token : tokens) counts[static_cast<std::uint32_t>(fnv1a64(token) & mask)] += 1.0;
  SparseVector x;
  double norm = 0.0;
  for (const auto& [index, count] : counts) {
    x.index.push_back(index);
    x.value.push_back(count);
    norm += count * count;
  }
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (auto& v : x.value) v /= norm;
  }
  return x;
}

double softmax_cross_entropy(std::span<const double> logits, int label, std::span<double> grad) {
  const double max = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    grad[c] = std::exp(logits[c] - max);
    sum += grad[c];
  }
  for (auto& g : grad) g /= sum;
  const auto y = static_cast<std::size_t>(label);
  const double loss = -(logits[y] - max - std::log(sum));
  grad[y] -= 1.0;
  return loss;
}

SoftmaxRegression::SoftmaxRegression(std::size_t n_classes, std::size_t dim)
    : n_classes_(n_classes), dim_(dim), params_(n_classes * dim + n_classes, 0.0) {}

std::vector<double> SoftmaxRegression::logits(const SparseVector& x) const {
  std::vector<double> z(n_classes_);
  const double* bias = params_.data() + n_classes_ * dim_;
  for (std::size_t c = 0; c < n_classes_; ++c) {
    const double* w = params_.data() + c * dim_;
    double acc = bias[c];
    for (std::size_t k = 0; k < x.index.size(); ++k) acc += w[x.index[k]] * x.value[k];
    z[c] = acc;
  }
  return z;
}

int SoftmaxRegression::predict(const SparseVector& x) const {
  const auto z = logits(x);
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

double SoftmaxRegression::loss_and_gradient(std::span<const Example> batch,
                                            std::span<double> grad) const {
  std::fill(grad.begin(), grad.end(), 0.0);
  if (batch.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> dz(n_classes_);
  double loss = 0.0;
  double* grad_bias = grad.data() + n_classes_ * dim_;
  for (const auto& ex : batch) {
    const auto z = logits(ex.x);
    loss += softmax_cross_entropy(z, ex.label, dz);
    for (std::size_t c = 0; c < n_classes_; ++c) {
      const double d = dz[c] * scale;
      double* g = grad.data() + c * dim_;
      for (std::size_t k = 0; k < ex.x.index.size(); ++k) g[ex.x.index[k]] += d * ex.x.value[k];
      grad_bias[c] += d;
    }
  }
  return loss * scale;
}

SparseVector featurize(const std::string& text, const Hyperparams& hp, const SubwordVocab& vocab,
                       const StopwordList& stopwords, const BuiltinOptions& options) {
  const auto words = apply_strategy(word_tokenize(clean_whitespace(text)), hp.strategy, stopwords);
  return hash_features(truncate(words, hp.strategy, hp.budget, vocab, options.head_share),
                       options.hash_bits);
}

std::vector<EpochResult> train_builtin(const SplitView& split, const Hyperparams& hp,
                                       const OptimizerConfig& cfg, const SubwordVocab& vocab,
                                       const StopwordList& stopwords,
                                       const BuiltinOptions& options) {
  hp.validate(std::max(hp.epochs, 1));
  cfg.validate();
  if (split.train.empty()) throw CorpusError("training split is empty");

  std::map<std::string, int> class_index;
  for (const auto& doc : split.train) class_index.emplace(doc.label, 0);
  std::vector<std::string> class_names;
  for (auto& [label, index] : class_index) {
    index = static_cast<int>(class_names.size());
    class_names.push_back(label);
  }
  auto to_examples = [&](const std::vector<Document>& docs) {
    std::vector<Example> out;
    out.reserve(docs.size());
    for (const auto& doc : docs) {
      const auto it = class_index.find(doc.label);
      out.push_back({featurize(doc.text, hp, vocab, stopwords, options),
                     it == class_index.end() ? -1 : it->second});
    }
    return out;
  };
  const auto train = to_examples(split.train);
  const auto valid = to_examples(split.valid);
  const auto test = to_examples(split.test);

  SoftmaxRegression model(class_names.size(), std::size_t{1} << options.hash_bits);
  const std::size_t n_params = model.params().size();
  std::vector<double> grad(n_params), m1(n_params, 0.0), m2(n_params, 0.0);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Example> batch;
  Rng rng(hp.seed);
  std::uint64_t step = 0;
  const auto bs = static_cast<std::size_t>(hp.batch_size);

  std::vector<EpochResult> results;
  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) {
        batch.push_back(train[order[i]]);
      }
      model.loss_and_gradient(batch, grad);
      adamw_step(model.params(), grad, m1, m2, ++step, hp.lr, cfg);
    }

    ConfusionCounts counts;
    for (const auto& name : class_names) counts.add_class(name);
    for (std::size_t i = 0; i < test.size(); ++i) {
      counts.record(split.test[i].label, class_names[static_cast<std::size_t>(model.predict(test[i].x))]);
    }
    double loss = 0.0;
    std::size_t n_loss = 0;
    std::vector<double> dz(class_names.size());
    for (const auto& ex : valid) {
      if (ex.label < 0) continue;
      loss += softmax_cross_entropy(model.logits(ex.x), ex.label, dz);
      ++n_loss;
    }
    results.push_back({epoch, macro_f1(counts), n_loss > 0 ? loss / static_cast<double>(n_loss) : 0.0});
  }
  return results;
}

BuiltinBackend::BuiltinBackend(FoldedCorpus corpus, SubwordVocab vocab, StopwordList stopwords,
                               BuiltinOptions options, OptimizerConfig optimizer)
    : corpus_(std::move(corpus)),
      vocab_(std::move(vocab)),
      stopwords_(std::move(stopwords)),
      options_(options),
      optimizer_(optimizer) {}

std::vector<EpochResult> BuiltinBackend::run(const Hyperparams& hp, int fold) {
  try {
    auto split = make_split(corpus_, fold, hp.seed);
    if (options_.upsample) split.train = upsample_balance(split.train, hp.seed);
    return train_builtin(split, hp, optimizer_, vocab_, stopwords_, options_);
  } catch (const CorpusError& e) {
    throw TrainerError(TrainerError::Kind::Data, e.what());
  } catch (const ConfigError& e) {
    throw TrainerError(TrainerError::Kind::Data, e.what());
  }
}

}  // namespace hpprop
