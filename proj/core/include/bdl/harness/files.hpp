#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace bdl::harness {

// Writes to a sibling temp file, then renames over `path`. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace bdl::harness
