#include "tensor_utils.hpp"

#include <fstream>
#include <numeric>
#include <random>

#include "atriaqc/error.hpp"

namespace atriaqc {

namespace fs = std::filesystem;

torch::Tensor slice_tensor(const ScanRecord& scan, std::int64_t d) {
  const auto values = scan.slice(d);
  return torch::from_blob(const_cast<float*>(values.data()), {scan.dims.height, scan.dims.width}, torch::kFloat)
      .clone();
}

torch::Tensor mask_tensor(const ScanRecord& scan, std::int64_t d) {
  const auto values = scan.mask_slice(d);
  return torch::from_blob(const_cast<std::uint8_t*>(values.data()), {scan.dims.height, scan.dims.width},
                          torch::kUInt8)
      .to(torch::kFloat);
}

torch::Tensor seeded_permutation(std::int64_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
  }
  return torch::tensor(order, torch::kLong);
}

void write_json_file(const fs::path& file, const nlohmann::json& j) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write " + file.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json_file(const fs::path& file) {
  require(fs::exists(file), ErrorKind::MissingArtifact, "missing " + file.string());
  try {
    std::ifstream in(file);
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, "malformed JSON in " + file.string() + ": " + e.what());
  }
}

}  // namespace atriaqc
