#pragma once

#include <filesystem>
#include <string>

#include "cdcn/model.hpp"

namespace cdcn {

// "key=value" pairs separated by spaces, e.g.
// "num_groups=5 blocks_per_group=10 channels=64 scale=4 ...".
std::string format_model_config(const ModelConfig& cfg);
ModelConfig parse_model_config(const std::string& line);

// Checkpoint layout:
//   "CDCN1\n"
//   model config line + "\n"
//   uint64 tensor count
//   per tensor: uint32 name length, name bytes, int32 n c h w, float32 payload
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace cdcn
