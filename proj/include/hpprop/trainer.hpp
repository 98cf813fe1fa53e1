#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hpprop/shorten.hpp"

namespace hpprop {

// Fold index used for all-fold averages.
inline constexpr int kAllFolds = -1;

struct Hyperparams {
  double lr = 5e-5;
  int batch_size = 128;
  int epochs = 3;
  std::uint64_t seed = 0;
  TokenBudget budget{};
  Strategy strategy = Strategy::A1;

  // Throws ConfigError when lr <= 0, batch_size < 1 or epochs outside [1, max_epochs].
  void validate(int max_epochs = 3) const;
};

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
};

struct EpochResult {
  int epoch = 0;
  double f1_test = 0.0;
  double valid_loss = 0.0;

  friend bool operator==(const EpochResult&, const EpochResult&) = default;
};

// One AdamW update with bias-corrected moments and decoupled weight decay:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)
// `step` is 1-based. All spans must have the same length.
void adamw_step(std::span<double> params, std::span<const double> grads,
                std::span<double> moment1, std::span<double> moment2, std::uint64_t step,
                double lr, const OptimizerConfig& cfg);

class TrainerError : public std::runtime_error {
 public:
  enum class Kind { FixtureMiss, Protocol, Timeout, Exit, Remote, Resource, Data };

  TrainerError(Kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  Kind kind() const { return kind_; }
  // Ledger reason string, "<kind>: <message>".
  std::string reason() const;
  // A deterministic miss is not worth a second attempt.
  bool retryable() const { return kind_ != Kind::FixtureMiss && kind_ != Kind::Data; }

 private:
  Kind kind_;
};

std::string to_string(TrainerError::Kind kind);
// Inverse of TrainerError::reason() for the retry decision on ledger replay.
bool reason_is_retryable(const std::string& reason);

// Trains one (hyperparameters, fold) trial and reports per-epoch results.
// Implementations may be called concurrently from several workers.
class TrainerBackend {
 public:
  virtual ~TrainerBackend() = default;

  virtual std::string id() const = 0;
  virtual bool deterministic() const = 0;
  // Which training data variant a trial used, recorded in the ledger.
  virtual std::string corpus_variant() const { return "n/a"; }

  // Throws TrainerError on failure.
  virtual std::vector<EpochResult> run(const Hyperparams& hp, int fold) = 0;

  // Whether a batch of this size fits the device.
  virtual bool ping(int batch_size) = 0;
};

}  // namespace hpprop
