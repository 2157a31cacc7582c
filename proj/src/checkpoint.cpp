#include "cfrag/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "cfrag/errors.hpp"

namespace cfrag::checkpoint {

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<char*>(b), 8);
}

double read_f64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

const tensor::Tensor& Checkpoint::blob(const std::string& name) const {
  for (const auto& [n, t] : blobs) {
    if (n == name) return t;
  }
  throw CheckpointError("checkpoint blob not found: " + name);
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  if (ckpt.magic.size() != 8) throw CheckpointError("checkpoint magic must be 8 bytes");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(ckpt.magic.data(), 8);
  write_u32(out, ckpt.version);
  write_u32(out, ckpt.d);
  write_u32(out, static_cast<std::uint32_t>(ckpt.blobs.size()));
  for (const auto& [name, t] : ckpt.blobs) {
    const std::uint16_t len = static_cast<std::uint16_t>(name.size());
    unsigned char lb[2] = {static_cast<unsigned char>(len),
                           static_cast<unsigned char>(len >> 8)};
    out.write(reinterpret_cast<char*>(lb), 2);
    out.write(name.data(), len);
    write_u32(out, static_cast<std::uint32_t>(t.rows()));
    write_u32(out, static_cast<std::uint32_t>(t.cols()));
    for (double v : t.values()) write_f64(out, v);
  }
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expected_magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, expected_magic.data(), 8) != 0)
    throw CheckpointError("bad checkpoint magic in " + path);
  Checkpoint ckpt;
  ckpt.magic = expected_magic;
  ckpt.version = read_u32(in);
  ckpt.d = read_u32(in);
  const std::uint32_t count = read_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    unsigned char lb[2];
    in.read(reinterpret_cast<char*>(lb), 2);
    const std::uint16_t len =
        static_cast<std::uint16_t>(lb[0]) | (static_cast<std::uint16_t>(lb[1]) << 8);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const std::uint32_t rows = read_u32(in);
    const std::uint32_t cols = read_u32(in);
    std::vector<double> values(static_cast<std::size_t>(rows) * cols);
    for (double& v : values) v = read_f64(in);
    if (!in) throw CheckpointError("truncated checkpoint: " + path);
    ckpt.blobs.emplace_back(
        name, tensor::Tensor::from(rows, cols, std::move(values), /*requires_grad=*/true));
  }
  return ckpt;
}

}  // namespace cfrag::checkpoint
