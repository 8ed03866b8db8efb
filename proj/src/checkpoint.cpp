#include "incdet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace incdet {

namespace {

void append_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void append_f32_le(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

float read_f32_le(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void Checkpoint::put(const std::string& name, const Tensor& t) {
  Entry e;
  e.shape = t.shape();
  e.values.resize(static_cast<std::size_t>(t.numel()));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    e.values[static_cast<std::size_t>(i)] = static_cast<float>(t.data()[i]);
  entries_[name] = std::move(e);
}

Tensor Checkpoint::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw std::runtime_error("checkpoint: no tensor named '" + name + "'");
  std::vector<Scalar> data(it->second.values.begin(), it->second.values.end());
  return Tensor::from(it->second.shape, std::move(data));
}

bool Checkpoint::contains(const std::string& name) const {
  return entries_.count(name) != 0;
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  nlohmann::ordered_json header = nlohmann::ordered_json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, e] : entries_) {
    header[name] = {{"shape", e.shape}, {"dtype", "f32"}, {"offset", offset}};
    offset += 4 * e.values.size();
  }
  const std::string hs = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(8 + hs.size() + offset);
  append_u64_le(out, hs.size());
  out.insert(out.end(), hs.begin(), hs.end());
  for (const auto& [name, e] : entries_)
    for (float f : e.values) append_f32_le(out, f);
  return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8) throw std::runtime_error("checkpoint: truncated (no header length)");
  const std::uint64_t hlen = read_u64_le(bytes.data());
  if (bytes.size() < 8 + hlen) throw std::runtime_error("checkpoint: truncated header");
  const std::string hs(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(hlen));
  nlohmann::json header = nlohmann::json::parse(hs);

  const std::uint8_t* payload = bytes.data() + 8 + hlen;
  const std::size_t payload_len = bytes.size() - 8 - hlen;

  Checkpoint cp;
  for (auto& [name, meta] : header.items()) {
    if (meta.at("dtype").get<std::string>() != "f32")
      throw std::runtime_error("checkpoint: unsupported dtype for '" + name + "'");
    Entry e;
    e.shape = meta.at("shape").get<std::vector<int>>();
    std::int64_t numel = 1;
    for (int d : e.shape) numel *= d;
    const std::uint64_t off = meta.at("offset").get<std::uint64_t>();
    if (off + 4 * static_cast<std::uint64_t>(numel) > payload_len)
      throw std::runtime_error("checkpoint: payload overrun for '" + name + "'");
    e.values.resize(static_cast<std::size_t>(numel));
    for (std::int64_t i = 0; i < numel; ++i)
      e.values[static_cast<std::size_t>(i)] = read_f32_le(payload + off + 4 * i);
    cp.entries_[name] = std::move(e);
  }
  return cp;
}

void Checkpoint::save(const std::string& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::uint64_t Checkpoint::checksum() const {
  const auto bytes = serialize();
  return fnv1a(bytes.data(), bytes.size());
}

}  // namespace incdet
