#pragma once

#include <filesystem>
#include <string>

namespace imu2emg {

/// Writes `content` to a sibling temporary file and renames it over
/// `path`, so readers never see a partial file. Creates parent dirs.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Whole file as bytes; throws DataError when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

}  // namespace imu2emg
