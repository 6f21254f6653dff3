#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "genderlab/model.hpp"

namespace genderlab {

std::string sha256_hex(std::span<const std::byte> data);
std::string sha256_hex(std::string_view text);

// SHA-256 over the names, shapes and raw values of every parameter except
// the embedding table.
template <typename S>
std::string non_embedding_hash(const ModelState<S>& model);

// Same, over every parameter including the embedding.
template <typename S>
std::string model_hash(const ModelState<S>& model);

}  // namespace genderlab
