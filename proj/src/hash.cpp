#include "genderlab/hash.hpp"

#include <openssl/evp.h>

#include <cstdint>
#include <memory>

#include "genderlab/error.hpp"

namespace genderlab {
namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw InternalError("cannot initialise SHA-256");
    }
  }

  void update(const void* data, std::size_t n) {
    if (n > 0 && EVP_DigestUpdate(ctx_.get(), data, n) != 1) {
      throw InternalError("SHA-256 update failed");
    }
  }

  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md, &len) != 1) throw InternalError("SHA-256 final failed");
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += kDigits[md[i] >> 4];
      out += kDigits[md[i] & 15];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

template <typename S>
std::string hash_params(const ModelState<S>& model, std::size_t first) {
  Sha256 h;
  for (std::size_t i = first; i < model.params.size(); ++i) {
    const auto& p = model.params[i];
    h.update(model.names[i].data(), model.names[i].size() + 1);
    const std::int64_t shape[2] = {p.rows(), p.cols()};
    h.update(shape, sizeof shape);
    h.update(p.data(), sizeof(S) * std::size_t(p.size()));
  }
  return h.hex();
}

}  // namespace

std::string sha256_hex(std::span<const std::byte> data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

std::string sha256_hex(std::string_view text) {
  Sha256 h;
  h.update(text.data(), text.size());
  return h.hex();
}

template <typename S>
std::string non_embedding_hash(const ModelState<S>& model) {
  return hash_params(model, 1);
}

template <typename S>
std::string model_hash(const ModelState<S>& model) {
  return hash_params(model, 0);
}

template std::string non_embedding_hash(const ModelState<float>&);
template std::string non_embedding_hash(const ModelState<double>&);
template std::string model_hash(const ModelState<float>&);
template std::string model_hash(const ModelState<double>&);

}  // namespace genderlab
