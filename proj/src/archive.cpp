#include "geogan/archive.hpp"

#include <cstring>
#include <fstream>

namespace geogan {

using nlohmann::json;

namespace {
constexpr char kMagic[4] = {'C', 'K', 'P', 'T'};
constexpr int kVersion = 1;
}  // namespace

void write_archive(const TensorArchive& ar, const std::string& path) {
  json header;
  header["version"] = kVersion;
  header["meta"] = ar.meta;
  json tensors = json::array();
  for (const auto& [name, t] : ar.tensors)
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "f32"}});
  header["tensors"] = tensors;

  std::string text = header.dump();
  text.push_back('\n');

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("archive: cannot open for write: " + path);
  os.write(kMagic, 4);
  std::uint32_t len = static_cast<std::uint32_t>(text.size());
  char len_le[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                    static_cast<char>((len >> 16) & 0xff),
                    static_cast<char>((len >> 24) & 0xff)};
  os.write(len_le, 4);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ar.tensors)
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * 4));
  if (!os) throw IoError("archive: write failed: " + path);
}

TensorArchive read_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("archive: cannot open: " + path);

  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("archive: bad magic in " + path);
  char len_le[4];
  is.read(len_le, 4);
  if (!is) throw FormatError("archive: truncated header length");
  std::uint32_t len = static_cast<std::uint8_t>(len_le[0]) |
                      (static_cast<std::uint8_t>(len_le[1]) << 8) |
                      (static_cast<std::uint8_t>(len_le[2]) << 16) |
                      (static_cast<std::uint8_t>(len_le[3]) << 24);
  if (len == 0 || len > (16u << 20))
    throw FormatError("archive: implausible header length in " + path);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw FormatError("archive: truncated header in " + path);

  TensorArchive ar;
  try {
    json header = json::parse(text);
    if (header.at("version").get<int>() != kVersion)
      throw FormatError("archive: unsupported version in " + path);
    ar.meta = header.value("meta", json::object());
    for (const auto& t : header.at("tensors")) {
      std::string name = t.at("name").get<std::string>();
      std::vector<int> shape = t.at("shape").get<std::vector<int>>();
      if (t.at("dtype").get<std::string>() != "f32")
        throw FormatError("archive: unsupported dtype in " + path);
      Tensor<float> tensor(shape);
      is.read(reinterpret_cast<char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.numel() * 4));
      if (static_cast<std::int64_t>(is.gcount()) != tensor.numel() * 4)
        throw FormatError("archive: truncated payload for tensor '" + name + "'");
      ar.add(std::move(name), std::move(tensor));
    }
  } catch (const json::exception& e) {
    throw FormatError("archive: malformed header in " + path + ": " + e.what());
  }
  return ar;
}

}  // namespace geogan
