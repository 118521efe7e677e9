#include "atriaqc/optim.hpp"

#include <cmath>
#include <numbers>

#include "atriaqc/error.hpp"

namespace atriaqc {

void LarsConfig::validate() const {
  require(base_lr > 0, ErrorKind::Config, "LARS base_lr must be > 0");
  require(momentum >= 0 && momentum < 1, ErrorKind::Config, "LARS momentum must lie in [0,1)");
  require(weight_decay >= 0, ErrorKind::Config, "LARS weight_decay must be >= 0");
  require(trust_coefficient > 0, ErrorKind::Config, "LARS trust_coefficient must be > 0");
  require(eps >= 0, ErrorKind::Config, "LARS eps must be >= 0");
}

double lars_local_lr(double weight_norm, double grad_norm, const LarsConfig& config) {
  if (weight_norm == 0.0) return 1.0;
  return config.trust_coefficient * weight_norm /
         (grad_norm + config.weight_decay * weight_norm + config.eps);
}

void lars_step(std::span<torch::Tensor> params, std::span<const torch::Tensor> grads,
               std::span<torch::Tensor> velocity, const LarsConfig& config, double lr) {
  require(params.size() == grads.size() && params.size() == velocity.size(), ErrorKind::Shape,
          "lars_step: params, grads and velocity must have the same length");
  const double eta = lr < 0 ? config.base_lr : lr;
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].defined()) continue;
    require(params[i].sizes() == grads[i].sizes() && params[i].sizes() == velocity[i].sizes(),
            ErrorKind::Shape, "lars_step: layer " + std::to_string(i) + " has incongruent shapes");
    require(torch::isfinite(grads[i]).all().item<bool>(), ErrorKind::Numeric,
            "lars_step: non-finite gradient in layer " + std::to_string(i));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].defined()) continue;
    const double w_norm = params[i].norm().item<double>();
    const double g_norm = grads[i].norm().item<double>();
    const double local_lr = lars_local_lr(w_norm, g_norm, config);
    auto update = grads[i] + config.weight_decay * params[i];
    velocity[i].mul_(config.momentum).add_(update, eta * local_lr);
    params[i].sub_(velocity[i]);
  }
}

Lars::Lars(std::vector<torch::Tensor> params, LarsConfig config)
    : params_(std::move(params)), config_(config), lr_(config.base_lr) {
  config_.validate();
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.push_back(torch::zeros_like(p));
}

void Lars::zero_grad() {
  for (auto& p : params_) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
}

void Lars::step() {
  std::vector<torch::Tensor> grads;
  grads.reserve(params_.size());
  for (const auto& p : params_) grads.push_back(p.grad());
  lars_step(params_, grads, velocity_, config_, lr_);
}

double cosine_lr(int epoch, int total_epochs, double lr_max, double lr_min) {
  require(total_epochs > 0, ErrorKind::Domain, "cosine_lr: total_epochs must be > 0");
  require(epoch >= 0 && epoch <= total_epochs, ErrorKind::Domain,
          "cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
              std::to_string(total_epochs) + "]");
  require(lr_min <= lr_max, ErrorKind::Domain, "cosine_lr: lr_min must be <= lr_max");
  if (epoch == 0) return lr_max;
  if (epoch == total_epochs) return lr_min;
  const double phase = std::numbers::pi * double(epoch) / double(total_epochs);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

EarlyStopDecision early_stop_update(EarlyStopState& state, double metric) {
  require(!std::isnan(metric), ErrorKind::Numeric, "early stopping metric is NaN");
  EarlyStopDecision decision;
  ++state.epochs_seen;
  if (metric < state.best_metric - state.min_delta) {
    state.best_metric = metric;
    state.best_epoch = state.epochs_seen;
    state.epochs_since_improve = 0;
    decision.improved = true;
  } else {
    ++state.epochs_since_improve;
  }
  decision.should_stop = state.epochs_since_improve >= state.patience;
  return decision;
}

}  // namespace atriaqc
