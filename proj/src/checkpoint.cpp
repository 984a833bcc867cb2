#include "dialect_lab/checkpoint.h"

#include <cstring>
#include <fstream>
#include <iterator>

#include "dialect_lab/errors.h"

namespace dialect_lab::nn {

namespace {
constexpr char kMarker[4] = {'W', 'G', 'T', 'S'};
}

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header = ckpt.header;
  header["n_values"] = ckpt.blob.size();
  const std::string text = header.dump();
  std::vector<unsigned char> out(text.begin(), text.end());
  out.push_back('\n');
  out.insert(out.end(), kMarker, kMarker + 4);
  out.reserve(out.size() + ckpt.blob.size() * 4);
  for (float f : ckpt.blob) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    for (int i = 0; i < 4; ++i)
      out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xFF));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  const auto* newline =
      static_cast<const unsigned char*>(std::memchr(bytes.data(), '\n', bytes.size()));
  if (newline == nullptr) throw FormatError("checkpoint: missing header line");
  const std::size_t header_len = static_cast<std::size_t>(newline - bytes.data());

  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(bytes.begin(), bytes.begin() + static_cast<long>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header JSON: ") + e.what());
  }
  std::size_t pos = header_len + 1;
  if (bytes.size() < pos + 4 || std::memcmp(bytes.data() + pos, kMarker, 4) != 0)
    throw FormatError("checkpoint: missing WGTS marker");
  pos += 4;
  if (!ckpt.header.contains("n_values"))
    throw FormatError("checkpoint: header lacks n_values");
  const auto n = ckpt.header["n_values"].get<std::size_t>();
  if (bytes.size() != pos + 4 * n)
    throw FormatError("checkpoint: blob size does not match n_values");
  ckpt.blob.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* p = bytes.data() + pos + 4 * i;
    std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                         (static_cast<std::uint32_t>(p[1]) << 8) |
                         (static_cast<std::uint32_t>(p[2]) << 16) |
                         (static_cast<std::uint32_t>(p[3]) << 24);
    std::memcpy(&ckpt.blob[i], &bits, sizeof bits);
  }
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace dialect_lab::nn
