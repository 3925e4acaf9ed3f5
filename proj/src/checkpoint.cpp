#include "twinflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>

namespace twinflow::checkpoint {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

void encode_tensor(Writer& w, const NamedTensor& t) {
  w.u32(static_cast<std::uint32_t>(t.name.size()));
  w.bytes(t.name);
  w.u32(static_cast<std::uint32_t>(t.shape.rank()));
  for (int i = 0; i < t.shape.rank(); ++i) w.u32(static_cast<std::uint32_t>(t.shape.dim(i)));
  for (double v : t.values) w.f64(v);
}

NamedTensor decode_tensor(Reader& r) {
  const auto name_len = r.u32();
  std::string name(r.bytes(name_len));
  const auto rank = r.u32();
  if (rank != 1 && rank != 2) throw IoError(fmt::format("parameter {} has unsupported rank {}", name, rank));
  const std::size_t d0 = r.u32();
  const ad::Shape shape = rank == 1 ? ad::Shape(d0) : ad::Shape(d0, r.u32());
  std::vector<double> values(shape.size());
  for (double& v : values) v = r.f64();
  return NamedTensor{std::move(name), shape, std::move(values)};
}

std::size_t expected_tensor_count(const ModelConfig& c) {
  return 8 + (c.n_classes > 0 ? 1 : 0) + 2 * c.depth;
}

}  // namespace

void Writer::u32(std::uint32_t v) { put(buf_, v); }
void Writer::u64(std::uint64_t v) { put(buf_, v); }
void Writer::f64(double v) { put(buf_, v); }
void Writer::bytes(std::string_view s) { buf_.append(s); }

std::uint32_t Reader::u32() {
  std::uint32_t v;
  std::memcpy(&v, bytes(sizeof v).data(), sizeof v);
  return v;
}

std::uint64_t Reader::u64() {
  std::uint64_t v;
  std::memcpy(&v, bytes(sizeof v).data(), sizeof v);
  return v;
}

double Reader::f64() {
  double v;
  std::memcpy(&v, bytes(sizeof v).data(), sizeof v);
  return v;
}

std::string_view Reader::bytes(std::size_t n) {
  if (data_.size() - pos_ < n) throw IoError("checkpoint truncated");
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

Block Block::make(std::string_view tag, std::string payload) {
  if (tag.size() != 4) throw InvalidArgument(fmt::format("block tag '{}' must be 4 characters", tag));
  Block b;
  std::memcpy(b.tag.data(), tag.data(), 4);
  b.payload = std::move(payload);
  return b;
}

const Block* Checkpoint::find(std::string_view tag) const {
  for (const auto& b : blocks) {
    if (b.tag_view() == tag) return &b;
  }
  return nullptr;
}

std::string encode_params(const ParamSnapshot& params) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& t : params.tensors()) encode_tensor(w, t);
  return w.take();
}

ParamSnapshot decode_params(std::string_view payload) {
  Reader r(payload);
  const auto n = r.u32();
  std::vector<NamedTensor> tensors;
  for (std::uint32_t i = 0; i < n; ++i) tensors.push_back(decode_tensor(r));
  if (!r.done()) throw IoError("trailing bytes in parameter block");
  return ParamSnapshot(std::move(tensors));
}

void write(std::ostream& out, const Checkpoint& ckpt) {
  Writer w;
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.config.data_dim));
  w.u32(static_cast<std::uint32_t>(ckpt.config.hidden));
  w.u32(static_cast<std::uint32_t>(ckpt.config.depth));
  w.u32(static_cast<std::uint32_t>(ckpt.config.n_classes));
  w.u64(ckpt.seed);
  for (const auto& t : ckpt.params.tensors()) encode_tensor(w, t);
  for (const auto& b : ckpt.blocks) {
    w.bytes(b.tag_view());
    w.u64(b.payload.size());
    w.bytes(b.payload);
  }
  const std::string data = w.take();
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("failed to write checkpoint");
}

Checkpoint read(std::istream& in) {
  const std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  Reader r(data);
  Checkpoint ckpt;
  const auto version = r.u32();
  if (version != kFormatVersion) throw IoError(fmt::format("unsupported checkpoint version {}", version));
  ckpt.config.data_dim = r.u32();
  ckpt.config.hidden = r.u32();
  ckpt.config.depth = r.u32();
  ckpt.config.n_classes = r.u32();
  ckpt.seed = r.u64();

  std::vector<NamedTensor> tensors;
  const std::size_t n = expected_tensor_count(ckpt.config);
  for (std::size_t i = 0; i < n; ++i) tensors.push_back(decode_tensor(r));
  ckpt.params = ParamSnapshot(std::move(tensors));
  const auto& time_w = ckpt.params.at("time_embed.weight");
  ckpt.config.time_frequencies = time_w.shape.dim(0) / 2;

  while (!r.done()) {
    const auto tag = r.bytes(4);
    const auto len = r.u64();
    ckpt.blocks.push_back(Block::make(tag, std::string(r.bytes(len))));
  }
  // Validates names and shapes against the header.
  VelocityNet check(ckpt.config, ckpt.params);
  return ckpt;
}

void save(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  write(out, ckpt);
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open checkpoint {}", path.string()));
  return read(in);
}

}  // namespace twinflow::checkpoint
