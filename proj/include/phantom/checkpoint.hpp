#pragma once

#include <filesystem>
#include <string>

#include "phantom/model.hpp"

#include <json.hpp>

namespace phantom {

/// Model plus free-form metadata (normalization statistics, run info).
/// Binary layout is documented in docs/checkpoint.md.
struct Checkpoint {
  Model model;
  nlohmann::json metadata = nlohmann::json::object();
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace phantom
