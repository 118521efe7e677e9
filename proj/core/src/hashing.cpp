#include "atriaqc/hashing.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <memory>
#include <vector>

#include <openssl/evp.h>

#include "atriaqc/error.hpp"

namespace atriaqc {

namespace fs = std::filesystem;

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    require(ctx_ && EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) == 1, ErrorKind::Io,
            "cannot initialise SHA-256");
  }

  void update(const void* data, std::size_t size) {
    if (size) EVP_DigestUpdate(ctx_.get(), data, size);
  }
  void update(const std::string& s) { update(s.data(), s.size()); }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), digest.data(), &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(kHex[digest[i] >> 4]);
      out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

void hash_file_into(Sha256& sha, const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  require(in.good(), ErrorKind::MissingArtifact, "cannot read " + file.string());
  std::vector<char> buffer(1 << 16);
  while (in) {
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    sha.update(buffer.data(), static_cast<std::size_t>(in.gcount()));
  }
}

void hash_tensor_into(Sha256& sha, const std::string& name, const torch::Tensor& t) {
  sha.update(name);
  for (auto s : t.sizes()) sha.update(&s, sizeof(s));
  const auto c = t.detach().contiguous().cpu();
  sha.update(c.data_ptr(), c.numel() * c.element_size());
}

}  // namespace

std::string sha256_hex(std::span<const unsigned char> bytes) {
  Sha256 sha;
  sha.update(bytes.data(), bytes.size());
  return sha.hex();
}

std::string sha256_hex(const std::string& text) {
  Sha256 sha;
  sha.update(text);
  return sha.hex();
}

std::string sha256_file(const fs::path& file) {
  Sha256 sha;
  hash_file_into(sha, file);
  return sha.hex();
}

std::string sha256_tree(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorKind::MissingArtifact, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), dir));
  }
  std::sort(files.begin(), files.end());
  Sha256 sha;
  for (const auto& rel : files) {
    sha.update(rel.generic_string());
    hash_file_into(sha, dir / rel);
  }
  return sha.hex();
}

std::string module_hash(const torch::nn::Module& module) {
  Sha256 sha;
  for (const auto& item : module.named_parameters(true)) hash_tensor_into(sha, item.key(), item.value());
  for (const auto& item : module.named_buffers(true)) hash_tensor_into(sha, item.key(), item.value());
  return sha.hex();
}

}  // namespace atriaqc
