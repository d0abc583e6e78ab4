#include "abmamba/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace abmamba {

namespace {

constexpr char kMagic[4] = {'A', 'B', 'M', 'C'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  auto* b = reinterpret_cast<unsigned char*>(&v);
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  return v;
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), 4);
}

void put_string(std::ofstream& out, const std::string& s) {
  put_u32(out, std::uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open checkpoint '" + path + "'");
  }
  void bytes(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), std::streamsize(n));
    if (!in_) throw DataError(path_ + ": checkpoint is truncated");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return to_little(v);
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 24)) throw DataError(path_ + ": implausible string length in checkpoint");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
};

}  // namespace

void write_checkpoint_file(const CheckpointFile& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint '" + path + "' for writing");
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_string(out, f.config_echo);
  put_u32(out, std::uint32_t(f.tensors.size()));
  for (const auto& t : f.tensors) {
    put_string(out, t.name);
    put_u32(out, t.rows);
    put_u32(out, t.cols);
    for (float v : t.data) {
      std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(v));
      out.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

CheckpointFile read_checkpoint_file(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError(path + ": not an abmamba checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  CheckpointFile f;
  f.config_echo = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    StoredTensor t;
    t.name = r.str();
    t.rows = r.u32();
    t.cols = r.u32();
    const std::uint64_t n = std::uint64_t(t.rows) * t.cols;
    if (n > (1ull << 30)) throw DataError(path + ": implausible tensor size for '" + t.name + "'");
    t.data.resize(std::size_t(n));
    for (auto& v : t.data) v = std::bit_cast<float>(r.u32());
    f.tensors.push_back(std::move(t));
  }
  return f;
}

}  // namespace abmamba
