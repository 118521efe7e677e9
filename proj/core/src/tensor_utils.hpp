#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "atriaqc/datamodel.hpp"
#include "atriaqc/json_io.hpp"
#include "atriaqc/scan_tensors.hpp"

namespace atriaqc {


/// Permutation of 0..n-1 keyed by (seed, epoch), as an int64 tensor.
torch::Tensor seeded_permutation(std::int64_t n, std::uint64_t seed, std::uint64_t epoch);

inline nlohmann::json json_number(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}
inline double json_to_number(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}


}  // namespace atriaqc
