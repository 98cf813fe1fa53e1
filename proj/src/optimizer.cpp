#include <cmath>

#include "hpprop/trainer.hpp"

namespace hpprop {

void Hyperparams::validate(int max_epochs) const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (epochs < 1 || epochs > max_epochs) {
    throw ConfigError("epochs must lie in [1, " + std::to_string(max_epochs) + "]");
  }
  if (budget.max_tokens < 1) throw ConfigError("token budget must be at least 1");
}

void OptimizerConfig::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
}

void adamw_step(std::span<double> params, std::span<const double> grads,
                std::span<double> moment1, std::span<double> moment2, std::uint64_t step,
                double lr, const OptimizerConfig& cfg) {
  if (grads.size() != params.size() || moment1.size() != params.size() ||
      moment2.size() != params.size()) {
    throw std::invalid_argument("adamw_step: shape mismatch");
  }
  if (step < 1) throw std::invalid_argument("adamw_step: step index starts at 1");
  const double t = static_cast<double>(step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    moment1[i] = cfg.beta1 * moment1[i] + (1.0 - cfg.beta1) * g;
    moment2[i] = cfg.beta2 * moment2[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = moment1[i] / correction1;
    const double v_hat = moment2[i] / correction2;
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.epsilon) + cfg.weight_decay * params[i]);
  }
}

std::string to_string(TrainerError::Kind kind) {
  switch (kind) {
    case TrainerError::Kind::FixtureMiss: return "fixture miss";
    case TrainerError::Kind::Protocol: return "protocol";
    case TrainerError::Kind::Timeout: return "timeout";
    case TrainerError::Kind::Exit: return "exit";
    case TrainerError::Kind::Remote: return "trainer error";
    case TrainerError::Kind::Resource: return "resource";
    case TrainerError::Kind::Data: return "data";
  }
  return "unknown";
}

std::string TrainerError::reason() const { return to_string(kind_) + ": " + what(); }

bool reason_is_retryable(const std::string& reason) {
  return !(reason.starts_with("fixture miss") || reason.starts_with("data"));
}

}  // namespace hpprop
