#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "incdet/tensor.hpp"

namespace incdet {

/// Named tensor collection serialized as:
///   u64 little-endian header length | JSON header | raw f32 payload
/// The header maps each name to {shape, dtype, offset} where offset is the
/// byte position inside the payload. Values are stored as little-endian f32
/// regardless of the in-memory scalar type, so files are portable and small;
/// loading widens back. Entries are written in name order so the same
/// contents always produce the same bytes.
class Checkpoint {
 public:
  void put(const std::string& name, const Tensor& t);
  Tensor get(const std::string& name) const;  // throws if absent
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;  // sorted
  std::size_t size() const { return entries_.size(); }

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  // FNV-1a over the serialized bytes; used to prove parameters unchanged.
  std::uint64_t checksum() const;

 private:
  struct Entry {
    std::vector<int> shape;
    std::vector<float> values;
  };
  std::map<std::string, Entry> entries_;  // ordered => canonical serialization
};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n);

}  // namespace incdet
