#pragma once

#include "xrot/autodiff/adam.hpp"
#include "xrot/model/network.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

namespace xrot {

inline constexpr int kCheckpointVersion = 1;

/// A checkpoint `<base>` is the pair `<base>.manifest.json` (JSON: format,
/// version, dtype, model config, step, seed, optimizer state summary and one
/// entry per tensor with name, kind, shape, byte offset, byte count and
/// CRC-32) and `<base>.weights.bin` (the little-endian tensor data
/// back to back).
struct CheckpointInfo {
  ModelConfig model;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  bool has_optimizer = false;
  std::uint64_t adam_t = 0;
  ad::AdamConfig adam;
};

/// Accepts a base name or the path of either checkpoint file.
std::filesystem::path checkpoint_base(const std::filesystem::path& path);
std::filesystem::path manifest_path(const std::filesystem::path& base);
std::filesystem::path weights_path(const std::filesystem::path& base);

/// Writes parameters, batch-norm buffers and, when given, the optimizer
/// moments. `seed` and `step` determine all remaining randomness of a run.
/// Throws IoFailure.
template <typename T>
void save_checkpoint(const std::filesystem::path& base, RotationNet<T>& net, const ad::Adam<T>* optimizer,
                     std::uint64_t step, std::uint64_t seed);

/// Manifest only. Throws IoFailure, CorruptFile or VersionMismatch.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& base);

template <typename T>
struct LoadedCheckpoint {
  CheckpointInfo info;
  std::unique_ptr<RotationNet<T>> net;
  std::vector<std::vector<T>> adam_m;  // empty without optimizer state
  std::vector<std::vector<T>> adam_v;
};

/// Throws IoFailure, VersionMismatch, CorruptFile (truncation, checksum or
/// layout errors) or InvalidArgument when the stored element width is not T.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& base);

}  // namespace xrot
