#pragma once

#include "mtq/autodiff.hpp"
#include "mtq/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace mtq {

// File layout: "MTQC", u64 header length, JSON header, then the parameter
// payloads as concatenated little-endian float64 in store order. The header
// holds format_version, model_config, metadata and
// parameters: name -> {shape, offset} (byte offset into the payload).
inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointContents {
  nlohmann::json model_config;
  nlohmann::json metadata;
  nn::ParamStore params;
};

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& model_config,
                      const nn::ParamStore& params,
                      const nlohmann::json& metadata = nlohmann::json::object());
CheckpointContents read_checkpoint(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const MtqNet& model,
                const nlohmann::json& metadata = nlohmann::json::object());
// Rebuilds the model from the embedded config and checks that the parameter
// names and shapes match exactly.
MtqNet load_model(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

// Copies parameter values from a checkpoint into model; names and shapes must
// match. Optimizer moments are reset.
void load_weights_into(MtqNet& model, const std::filesystem::path& path);

// FNV-1a 64-bit digest of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);
std::string bytes_digest(const std::string& bytes);

}  // namespace mtq
