#pragma once

#include <vector>

#include <torch/torch.h>

namespace atriaqc {

/// In-memory copy of a module's parameters and buffers, used to keep the
/// best-validation checkpoint during training.
class StateSnapshot {
 public:
  void capture(const torch::nn::Module& module) {
    torch::NoGradGuard no_grad;
    tensors_.clear();
    for (const auto& p : module.parameters(true)) tensors_.push_back(p.detach().clone());
    for (const auto& b : module.buffers(true)) tensors_.push_back(b.detach().clone());
  }

  void restore(torch::nn::Module& module) const {
    torch::NoGradGuard no_grad;
    std::size_t i = 0;
    for (auto& p : module.parameters(true)) p.copy_(tensors_[i++]);
    for (auto& b : module.buffers(true)) b.copy_(tensors_[i++]);
  }

  bool empty() const { return tensors_.empty(); }

 private:
  std::vector<torch::Tensor> tensors_;
};

}  // namespace atriaqc
