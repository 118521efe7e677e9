#pragma once

#include <filesystem>
#include <span>
#include <string>

#include <torch/torch.h>

namespace atriaqc {

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::filesystem::path& file);

/// Hash of every file under a directory (sorted relative paths + contents).
std::string sha256_tree(const std::filesystem::path& dir);

/// Hash over the names, shapes and raw bytes of all parameters and buffers.
std::string module_hash(const torch::nn::Module& module);

}  // namespace atriaqc
