#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>

#include "genderlab/model.hpp"

namespace genderlab {

inline constexpr std::string_view kCheckpointVersion = "gp-ckpt-1";

// On disk: the line "gp-ckpt-1", the byte length of a JSON header on its own
// line, the header (dtype, config, step, tensor names and shapes, momentum
// coefficient, free-form meta), then raw little-endian parameter values
// followed by the momentum buffers when present.
template <typename S>
struct Checkpoint {
  ModelState<S> model;
  MomentumState<S> momentum;
  std::uint64_t step = 0;
  nlohmann::json meta = nlohmann::json::object();
};

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const ModelState<S>& model,
                     const MomentumState<S>* momentum = nullptr, std::uint64_t step = 0,
                     const nlohmann::json& meta = nlohmann::json::object());

// Values are converted when the stored dtype differs from S.
template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& path);

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

}  // namespace genderlab
