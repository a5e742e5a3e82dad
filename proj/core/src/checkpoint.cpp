#include "bridgekd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bridgekd {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O writes raw little-endian bytes and would need byte "
              "swapping on a big-endian host");

namespace {

constexpr char kMagic[4] = {'B', 'D', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& path) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint '" + path + "': truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint '" + path + "': cannot open for writing");
  os.write(kMagic, 4);
  write_pod(os, kVersion);
  write_pod(os, static_cast<uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xFFFF)
      throw std::invalid_argument("checkpoint tensor name too long: " + t.name);
    write_pod(os, static_cast<uint16_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_pod(os, t.dtype);
    write_pod(os, static_cast<uint8_t>(t.dims.size()));
    for (uint32_t d : t.dims) write_pod(os, d);
    const size_t elem = t.dtype == 0 ? 4 : 8;
    if (t.raw.size() != elem * static_cast<size_t>(t.numel()))
      throw std::invalid_argument("checkpoint tensor '" + t.name + "': payload does not match dims");
    os.write(t.raw.data(), static_cast<std::streamsize>(t.raw.size()));
  }
  if (!os) throw std::runtime_error("checkpoint '" + path + "': write failed");
}

std::vector<CheckpointTensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint '" + path + "': cannot open");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint '" + path + "': bad magic, not a checkpoint file");
  const uint32_t version = read_pod<uint32_t>(is, path);
  if (version != kVersion)
    throw std::runtime_error("checkpoint '" + path + "': unsupported version " +
                             std::to_string(version));
  const uint32_t count = read_pod<uint32_t>(is, path);
  std::vector<CheckpointTensor> tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    const uint16_t name_len = read_pod<uint16_t>(is, path);
    t.name.resize(name_len);
    is.read(t.name.data(), name_len);
    t.dtype = read_pod<uint8_t>(is, path);
    if (t.dtype > 1)
      throw std::runtime_error("checkpoint '" + path + "': unknown dtype code " +
                               std::to_string(t.dtype));
    const uint8_t rank = read_pod<uint8_t>(is, path);
    for (uint8_t r = 0; r < rank; ++r) {
      uint32_t d = read_pod<uint32_t>(is, path);
      if (d == 0) throw std::runtime_error("checkpoint '" + path + "': zero dimension");
      t.dims.push_back(d);
    }
    const size_t elem = t.dtype == 0 ? 4 : 8;
    const int64_t n = t.numel();
    if (n > (int64_t(1) << 32))
      throw std::runtime_error("checkpoint '" + path + "': implausible tensor size");
    t.raw.resize(elem * static_cast<size_t>(n));
    is.read(t.raw.data(), static_cast<std::streamsize>(t.raw.size()));
    if (!is) throw std::runtime_error("checkpoint '" + path + "': truncated tensor payload");
    tensors.push_back(std::move(t));
  }
  return tensors;
}

}  // namespace bridgekd
