#pragma once

// Binary checkpoint layout (all integers little-endian):
//
//   "SISEG1"  u32 version  u8 kind (0 = seg, 1 = st)  u32 record count
//   per record: u32 name length, name bytes, u8 trainable, u32 rank,
//               u32 extents[rank], f32 data[numel]
//   u32 CRC-32 of every preceding byte

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "styleinv/params.hpp"

namespace styleinv {

enum class NetKind : std::uint8_t { seg = 0, st = 1 };

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string kind_name(NetKind kind);

std::vector<std::uint8_t> encode_checkpoint(const ModelParams<float>& params, NetKind kind);

struct DecodedCheckpoint {
  NetKind kind;
  ModelParams<float> params;
};

/// Throws FormatError on a bad magic, version, truncation or checksum.
DecodedCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params, NetKind kind);

/// Throws MissingArtifactError if absent and CheckpointKindError if the file
/// holds the other network.
ModelParams<float> load_checkpoint(const std::filesystem::path& path, NetKind expected);

}  // namespace styleinv
