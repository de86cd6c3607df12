#pragma once

#include <cstdint>
#include <filesystem>

#include "sarc/config.hpp"
#include "sarc/model.hpp"

namespace sarc {

inline constexpr char kCheckpointMagic[4] = {'S', 'A', 'R', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Model weights plus the metadata needed to score new cells: the model
// config keys, the optimiser settings, the feature scaler, the split seed
// and anything else the trainer records.
struct Checkpoint {
  SarcNetParams params;
  KeyValueConfig metadata;  // includes the SarcNetConfig keys
};

// Layout (all integers little-endian):
//   "SARC" | u32 version | u32 n | n bytes UTF-8 `key = value` text |
//   u32 tensor count | per tensor: u32 name length, name, u32 rank,
//   rank x u32 extents, f32 values (row-major)
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
// Validates magic, version, names and shapes; never returns partial state.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Serialised bytes, used by save_checkpoint.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

// Scaler <-> metadata keys (scaler.protocol, scaler.mean, scaler.std, scaler.fitted_on).
void write_scaler(KeyValueConfig& kv, const ScalerParams& scaler);
ScalerParams read_scaler(const KeyValueConfig& kv);

}  // namespace sarc
