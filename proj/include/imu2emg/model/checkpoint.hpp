#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "imu2emg/model/transformer.hpp"

namespace imu2emg::model {

inline constexpr char kCheckpointMagic[8] = {'I', 'M', 'U', '2', 'E', 'M', 'G', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, all integers little-endian u32:
//   magic[8] version config_len config_json blob_count
//   { name_len name rank dims[rank] float32 data }*  crc32
// The CRC covers every preceding byte.
std::string encode_checkpoint(const ModelParams<float>& params);
ModelParams<float> decode_checkpoint(const std::string& bytes);

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace imu2emg::model
