#pragma once

// Binary checkpoint layout (all integers and floats little-endian):
//
//   u32 format_version, u32 data_dim, u32 hidden, u32 depth, u32 n_classes, u64 seed
//   per parameter, in network order:
//     u32 name_length, name bytes, u32 rank, u32 dims[rank], f64 values[product(dims)]
//   zero or more extension blocks until end of file:
//     char tag[4], u64 payload_length, payload bytes
//
// The number of time frequencies is recovered from the shape of
// time_embed.weight.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "twinflow/model.hpp"

namespace twinflow::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

struct Block {
  std::array<char, 4> tag{};
  std::string payload;

  static Block make(std::string_view tag, std::string payload);
  std::string_view tag_view() const { return {tag.data(), tag.size()}; }
};

struct Checkpoint {
  ModelConfig config;
  std::uint64_t seed = 0;
  ParamSnapshot params;
  std::vector<Block> blocks;

  const Block* find(std::string_view tag) const;
};

void write(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read(std::istream& in);

void save(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load(const std::filesystem::path& path);

// Parameter records (as in the main body) packed into a block payload.
std::string encode_params(const ParamSnapshot& params);
ParamSnapshot decode_params(std::string_view payload);

// Little helpers for building block payloads.
class Writer {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void bytes(std::string_view s);
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string_view bytes(std::size_t n);
  bool done() const noexcept { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace twinflow::checkpoint
