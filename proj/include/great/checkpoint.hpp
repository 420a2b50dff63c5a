#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "great/models.hpp"

namespace great {

/// Everything needed to rebuild a trained model. Stored as one JSON document:
/// a header (dims, transform specs, version, seed) and a `params` object
/// mapping name -> {shape, data} with row-major values.
struct Checkpoint {
  ModelDims dims;
  std::uint64_t seed = 0;
  std::string version;
  ParamSet predictor;
  TransformParams transforms;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint checkpoint_from_string(const std::string& text);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws std::invalid_argument when any shape disagrees with the header.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace great
