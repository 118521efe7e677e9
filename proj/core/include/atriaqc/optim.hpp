#pragma once

#include <limits>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace atriaqc {

struct LarsConfig {
  double base_lr = 0.5;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double trust_coefficient = 0.001;
  double eps = 1e-9;

  void validate() const;
};

/// Layer-wise trust ratio trust * |w| / (|g| + wd * |w| + eps); 1 when |w| = 0.
double lars_local_lr(double weight_norm, double grad_norm, const LarsConfig& config);

/// One LARS update, each tensor treated as its own layer:
///   v <- momentum * v + lr * local_lr * (g + wd * w);  w <- w - v
/// `lr` defaults to config.base_lr when negative. Updates are applied in place
/// (outside autograd). Throws Numeric on non-finite gradients, in which case
/// nothing is modified.
void lars_step(std::span<torch::Tensor> params, std::span<const torch::Tensor> grads,
               std::span<torch::Tensor> velocity, const LarsConfig& config, double lr = -1.0);

/// Stateful wrapper over lars_step that reads `.grad()` from the parameters.
class Lars {
 public:
  Lars(std::vector<torch::Tensor> params, LarsConfig config);

  void zero_grad();
  void step();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  std::vector<torch::Tensor> params_;
  std::vector<torch::Tensor> velocity_;
  LarsConfig config_;
  double lr_;
};

/// lr_min + (lr_max - lr_min) * (1 + cos(pi * epoch / total)) / 2.
double cosine_lr(int epoch, int total_epochs, double lr_max, double lr_min);

/// Patience-based early stopping on a metric to be minimized. Improvement is
/// strict: metric < best - min_delta.
struct EarlyStopState {
  double best_metric = std::numeric_limits<double>::infinity();
  int epochs_since_improve = 0;
  int patience = 7;
  double min_delta = 0.0;
  int epochs_seen = 0;
  int best_epoch = 0;  // 1-based epoch holding best_metric; 0 before any update
};

struct EarlyStopDecision {
  bool improved = false;
  bool should_stop = false;
};

/// Folds one epoch's metric into the state. Throws Numeric for NaN.
EarlyStopDecision early_stop_update(EarlyStopState& state, double metric);

}  // namespace atriaqc
