#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

namespace dialect_lab::nn {

/// On-disk layout: a single-line UTF-8 JSON header, '\n', the ASCII marker
/// "WGTS", then the flat parameter blob as little-endian float32 values in
/// the order the header declares. The header must carry "n_values".
struct Checkpoint {
  nlohmann::json header;
  std::vector<float> blob;
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace dialect_lab::nn
