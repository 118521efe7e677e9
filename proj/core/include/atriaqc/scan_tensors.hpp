#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "atriaqc/datamodel.hpp"

namespace atriaqc {

/// (H, W) float tensor copy of one slice.
torch::Tensor slice_tensor(const ScanRecord& scan, std::int64_t d);
/// (H, W) float tensor of the blood-pool mask of one slice.
torch::Tensor mask_tensor(const ScanRecord& scan, std::int64_t d);

}  // namespace atriaqc
