// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file format:
//
//   "PLBERT-CKPT v1 <full|encoder>\n"
//   "config <n_bytes> <crc32 hex>\n" followed by n_bytes of key=value lines
//   "tensors <count>\n"
//   per tensor: "<name> <rows> <cols> <crc32 hex>\n" followed by
//               rows * cols little-endian float32 values
//   "end\n"
//
// Tensors appear in the fixed order of EncoderParams::fields(); absent ones
// (tied MLM weight, heads of an encoder export) are skipped. Full
// checkpoints may append the optimizer moments as "adam.m/<name>" and
// "adam.v/<name>" in the same order.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "plbert/model.hpp"
#include "plbert/optim.hpp"

namespace plbert {

inline constexpr std::string_view kCheckpointMagic = "PLBERT-CKPT v1";

enum class CheckpointKind { full, encoder };

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::full;
  EncoderParams<float> params;  // params.config is the model config
  std::optional<AdamState<float>> adam;
  /// Extra key=value pairs stored after the model config, in order.
  std::vector<std::pair<std::string, std::string>> settings;

  const ModelConfig& model() const { return params.config; }
  std::optional<std::string> setting(std::string_view key) const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out);
/// Writes to a temporary file next to `path` and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws FormatError on a bad header, checksum mismatch, truncation or a
/// tensor that does not match the stored config.
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Encoder-only copy for downstream use: no heads, no optimizer state.
Checkpoint export_encoder(const Checkpoint& ckpt);

/// Text form of a model config as key=value lines, and its inverse.
std::vector<std::pair<std::string, std::string>> model_config_entries(const ModelConfig& config);
std::string format_double(double value);

}  // namespace plbert
