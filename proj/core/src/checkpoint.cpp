#include "presslm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "presslm/errors.hpp"

namespace presslm {

namespace {

constexpr char kMagic[4] = {'P', 'L', 'M', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff),
                         static_cast<char>((v >> 24) & 0xff)};
  os.write(bytes, 4);
}

void write_f32(std::ostream& os, float f) { write_u32(os, std::bit_cast<std::uint32_t>(f)); }

bool read_u32(std::istream& is, std::uint32_t& v) {
  unsigned char bytes[4];
  if (!is.read(reinterpret_cast<char*>(bytes), 4)) return false;
  v = static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
      (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
  return true;
}

}  // namespace

void Checkpoint::put(const std::string& name, Tensor t) {
  for (auto& [n, existing] : entries_) {
    if (n == name) {
      existing = std::move(t);
      return;
    }
  }
  entries_.emplace_back(name, std::move(t));
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return true;
  }
  return false;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw DataError("checkpoint: no tensor named '" + name + "'");
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw IoError("checkpoint: cannot open '" + path + "' for writing");
  }
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  for (const auto& [name, t] : entries_) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) {
      write_u32(os, static_cast<std::uint32_t>(d));
    }
    for (double v : t.data()) {
      write_f32(os, static_cast<float>(v));
    }
  }
  if (!os) {
    throw IoError("checkpoint: write failed for '" + path + "'");
  }
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw IoError("checkpoint: cannot open '" + path + "'");
  }
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError("checkpoint: bad magic in '" + path + "'");
  }
  std::uint32_t version = 0;
  if (!read_u32(is, version) || version != kVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  std::uint32_t name_len = 0;
  while (read_u32(is, name_len)) {
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw ParseError("checkpoint: truncated name record");
    }
    std::uint32_t rank = 0;
    if (!read_u32(is, rank) || rank == 0) {
      throw ParseError("checkpoint: bad rank for tensor '" + name + "'");
    }
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint32_t d = 0;
      if (!read_u32(is, d) || d == 0) {
        throw ParseError("checkpoint: bad dimension for tensor '" + name + "'");
      }
      shape[i] = d;
      count *= d;
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t bits = 0;
      if (!read_u32(is, bits)) {
        throw ParseError("checkpoint: truncated values for tensor '" + name + "'");
      }
      values[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    ckpt.put(name, Tensor(std::move(shape), std::move(values)));
  }
  return ckpt;
}

}  // namespace presslm
