#include <doctest.h>

#include <cstdio>
#include <stdexcept>

#include "incdet/checkpoint.hpp"
#include "incdet/rng.hpp"

using namespace incdet;

TEST_CASE("checkpoint round-trip preserves names, shapes and f32 values") {
  Rng rng(3);
  Checkpoint cp;
  Tensor a = Tensor::zeros({2, 3, 4, 4});
  for (std::int64_t i = 0; i < a.numel(); ++i) a.data()[i] = rng.normal();
  Tensor b = Tensor::from({5}, {1.5, -2.25, 0.0, 0.125, 42.0});
  cp.put("encoder.w", a);
  cp.put("codes.base", b);

  const auto bytes = cp.serialize();
  Checkpoint back = Checkpoint::deserialize(bytes);

  CHECK(back.names() == std::vector<std::string>{"codes.base", "encoder.w"});
  Tensor a2 = back.get("encoder.w");
  CHECK(a2.shape() == a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i)
    CHECK(a2.data()[i] == static_cast<double>(static_cast<float>(a.data()[i])));
  Tensor b2 = back.get("codes.base");
  // These literals are exactly representable in f32, so they survive intact.
  for (std::int64_t i = 0; i < b.numel(); ++i) CHECK(b2.data()[i] == b.data()[i]);
}

TEST_CASE("container layout: u64 LE header length, then JSON, then payload") {
  Checkpoint cp;
  cp.put("t", Tensor::from({2}, {1.0, 2.0}));
  const auto bytes = cp.serialize();
  REQUIRE(bytes.size() > 8);
  std::uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i) hlen |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  CHECK(bytes.size() == 8 + hlen + 2 * 4);  // two f32 values
  const std::string header(bytes.begin() + 8, bytes.begin() + 8 + static_cast<long>(hlen));
  CHECK(header.find("\"t\"") != std::string::npos);
  CHECK(header.find("\"f32\"") != std::string::npos);
  CHECK(header.find("\"offset\"") != std::string::npos);
  // payload: 1.0f little-endian = 00 00 80 3f
  const std::uint8_t* payload = bytes.data() + 8 + hlen;
  CHECK(payload[0] == 0x00);
  CHECK(payload[1] == 0x00);
  CHECK(payload[2] == 0x80);
  CHECK(payload[3] == 0x3f);
}

TEST_CASE("serialization is canonical: same contents, same bytes") {
  Checkpoint a, b;
  Tensor t1 = Tensor::from({2}, {1.0, 2.0});
  Tensor t2 = Tensor::from({3}, {4.0, 5.0, 6.0});
  a.put("alpha", t1);
  a.put("beta", t2);
  b.put("beta", t2);  // inserted in the other order
  b.put("alpha", t1);
  CHECK(a.serialize() == b.serialize());
  CHECK(a.checksum() == b.checksum());
}

TEST_CASE("checksum changes when any value changes") {
  Checkpoint a, b;
  a.put("w", Tensor::from({2}, {1.0, 2.0}));
  b.put("w", Tensor::from({2}, {1.0, 2.0000005}));  // differs within f32
  CHECK(a.checksum() != b.checksum());
}

TEST_CASE("file save/load round-trip") {
  Checkpoint cp;
  cp.put("x", Tensor::from({2, 2}, {1, 2, 3, 4}));
  const std::string path = "test_checkpoint_tmp.bin";
  cp.save(path);
  Checkpoint back = Checkpoint::load(path);
  std::remove(path.c_str());
  CHECK(back.get("x").data_vec() == std::vector<Scalar>{1, 2, 3, 4});
  CHECK(back.checksum() == cp.checksum());
}

TEST_CASE("missing names and truncated bytes are rejected") {
  Checkpoint cp;
  cp.put("present", Tensor::scalar(1.0));
  CHECK_THROWS_AS(cp.get("absent"), std::runtime_error);

  auto bytes = cp.serialize();
  bytes.resize(bytes.size() - 2);
  CHECK_THROWS_AS(Checkpoint::deserialize(bytes), std::runtime_error);

  std::vector<std::uint8_t> tiny = {1, 2, 3};
  CHECK_THROWS_AS(Checkpoint::deserialize(tiny), std::runtime_error);
}

TEST_CASE("fnv1a matches the published test vectors") {
  // Standard FNV-1a 64-bit: "" -> offset basis; "a" -> af63dc4c8601ec8c.
  CHECK(fnv1a(nullptr, 0) == 0xcbf29ce484222325ULL);
  const std::uint8_t a[] = {'a'};
  CHECK(fnv1a(a, 1) == 0xaf63dc4c8601ec8cULL);
  const std::uint8_t foobar[] = {'f', 'o', 'o', 'b', 'a', 'r'};
  CHECK(fnv1a(foobar, 6) == 0x85944171f73967e8ULL);
}
