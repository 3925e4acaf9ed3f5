#include <doctest.h>

#include <cstring>
#include <sstream>

#include "support/oracles.hpp"
#include "twinflow/checkpoint.hpp"

using namespace twinflow;
using namespace twinflow::checkpoint;

namespace {

Checkpoint sample_checkpoint(std::size_t classes = 0) {
  ModelConfig cfg;
  cfg.hidden = 6;
  cfg.depth = 2;
  cfg.time_frequencies = 5;
  cfg.n_classes = classes;
  Rng rng(12);
  Checkpoint c;
  c.config = cfg;
  c.seed = 0xfeedbeefcafeULL;
  c.params = testing::random_net(cfg, rng).params();
  c.blocks.push_back(Block::make("TEST", std::string("payload\0with nul", 16)));
  c.blocks.push_back(Block::make("EMPT", ""));
  return c;
}

std::string bytes_of(const Checkpoint& c) {
  std::ostringstream out;
  write(out, c);
  return out.str();
}

Checkpoint parse(const std::string& bytes) {
  std::istringstream in(bytes);
  return read(in);
}

}  // namespace

TEST_CASE("round trip preserves everything bit for bit") {
  for (const std::size_t classes : {0u, 8u}) {
    const Checkpoint c = sample_checkpoint(classes);
    const std::string bytes = bytes_of(c);
    const Checkpoint back = parse(bytes);
    CHECK(back.params == c.params);
    CHECK(back.seed == c.seed);
    CHECK(back.config.hidden == 6);
    CHECK(back.config.depth == 2);
    CHECK(back.config.n_classes == classes);
    CHECK(back.config.time_frequencies == 5);
    REQUIRE(back.blocks.size() == 2);
    CHECK(back.find("TEST")->payload == c.blocks[0].payload);
    CHECK(back.find("EMPT")->payload.empty());
    CHECK(back.find("NONE") == nullptr);
    CHECK(bytes_of(back) == bytes);
  }
}

TEST_CASE("header layout") {
  const std::string bytes = bytes_of(sample_checkpoint());
  std::uint32_t words[5];
  std::memcpy(words, bytes.data(), sizeof words);
  CHECK(words[0] == kFormatVersion);
  CHECK(words[1] == 2);
  CHECK(words[2] == 6);
  CHECK(words[3] == 2);
  CHECK(words[4] == 0);
  std::uint64_t seed;
  std::memcpy(&seed, bytes.data() + 20, 8);
  CHECK(seed == 0xfeedbeefcafeULL);
  std::uint32_t name_len;
  std::memcpy(&name_len, bytes.data() + 28, 4);
  CHECK(std::string(bytes.data() + 32, name_len) == "input_proj.weight");
}

TEST_CASE("corrupt input is rejected") {
  const std::string bytes = bytes_of(sample_checkpoint());
  CHECK_THROWS_AS(parse(bytes.substr(0, bytes.size() - 3)), IoError);
  CHECK_THROWS_AS(parse(bytes.substr(0, 10)), IoError);
  CHECK_THROWS_AS(parse(""), IoError);
  std::string bad_version = bytes;
  bad_version[0] = 9;
  CHECK_THROWS_AS(parse(bad_version), IoError);
  std::string wrong_depth = bytes;
  wrong_depth[12] = 1;  // header claims one block; the tensors describe two
  CHECK_THROWS_AS(parse(wrong_depth), Error);
}

TEST_CASE("block tags are four characters") {
  CHECK_THROWS_AS(Block::make("LONGER", ""), InvalidArgument);
  CHECK_THROWS_AS(Block::make("AB", ""), InvalidArgument);
}

TEST_CASE("parameter blocks round trip") {
  const Checkpoint c = sample_checkpoint();
  CHECK(decode_params(encode_params(c.params)) == c.params);
  std::string extra = encode_params(c.params) + "x";
  CHECK_THROWS_AS(decode_params(extra), IoError);
}

TEST_CASE("payload helpers") {
  Writer w;
  w.u32(7);
  w.u64(1ULL << 40);
  w.f64(-0.125);
  w.bytes("abc");
  const std::string s = w.take();
  CHECK(s.size() == 4 + 8 + 8 + 3);
  Reader r(s);
  CHECK(r.u32() == 7);
  CHECK(r.u64() == (1ULL << 40));
  CHECK(r.f64() == -0.125);
  CHECK(r.bytes(3) == "abc");
  CHECK(r.done());
  CHECK_THROWS_AS(r.u32(), IoError);
}

TEST_CASE("files") {
  const auto path = std::filesystem::temp_directory_path() / "twinflow_test_checkpoint.ckpt";
  const Checkpoint c = sample_checkpoint();
  save(path, c);
  CHECK(load(path).params == c.params);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load(path), IoError);
}
