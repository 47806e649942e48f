#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "bdl/autoencoder.hpp"
#include "bdl/gan.hpp"

namespace bdl::harness {

// File layout: "BDLK", one version byte, then sections. Each section is a
// 4-byte tag and a little-endian u64 length followed by that many bytes:
//   ARCH  architecture descriptor (JSON text)
//   CONF  training config echo (JSON text)
//   METR  final metrics snapshot (JSON text)
//   PARM  parameters as little-endian float32, networks in descriptor order
inline constexpr std::uint8_t kCheckpointVersion = 1;

using Model = std::variant<AutoencoderModel, GanModel>;

struct Checkpoint {
  Model model;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json metrics = nlohmann::json::object();
};

nlohmann::json architecture_descriptor(const Model& model);

std::string encode_checkpoint(const Checkpoint& ckpt);
// Throws FormatError (bad magic or descriptor), VersionError, LengthError
// (truncation, or a payload that disagrees with the descriptor).
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bdl::harness
