#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>

#include "m2fcn/fileio.hpp"
#include "m2fcn/network.hpp"

namespace m2fcn {

// Checkpoint layout, all integers little-endian:
//
//   magic      8 bytes  "M2FCNCKP"
//   version    u32      kCheckpointVersion
//   config     u32 length + UTF-8 text, one "key = value" line per network key
//   count      u32      number of parameter records
//   record     u32 name length + name, u8 trainable, u32 rank,
//              u64 × rank extents, f64 × product(extents) values
//
// Records appear in M2FCN::parameters() order.
inline constexpr char kCheckpointMagic[8] = {'M', '2', 'F', 'C', 'N', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    le(bits);
  }
  void str(const std::string& s) {
    le(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw IoError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  template <typename T>
  T le() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  double f64() {
    const std::uint64_t bits = le<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = le<std::uint32_t>();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const M2FCN& net) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.le(kCheckpointVersion);
  std::string text;
  for (const auto& [k, v] : network_to_kv(net.config())) text += k + " = " + v + "\n";
  w.str(text);
  const auto params = net.parameters();
  w.le(static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    w.str(p->name);
    w.le(static_cast<std::uint8_t>(p->trainable ? 1 : 0));
    w.le(static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) w.le(static_cast<std::uint64_t>(d));
    for (Real v : p->value.data()) w.f64(v);
  }
  return w.take();
}

inline M2FCN deserialize_checkpoint(const std::string& bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic)) {
    throw IoError("not a checkpoint (bad magic)");
  }
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));

  std::map<std::string, std::string> values;
  for (const auto& line : kv::split(r.str(), '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("checkpoint config line without '=': " + line);
    values[kv::trim(line.substr(0, eq))] = kv::trim(line.substr(eq + 1));
  }
  NetworkConfig cfg;
  apply_network_kv(cfg, values, "checkpoint.");
  M2FCN net = M2FCN::build(cfg, 0);

  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : net.parameters()) by_name[p->name] = p;
  const auto count = r.le<std::uint32_t>();
  if (count != by_name.size()) {
    throw IoError("checkpoint holds " + std::to_string(count) + " parameters, network expects " +
                  std::to_string(by_name.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("checkpoint parameter '" + name + "' is not part of the network");
    Parameter& p = *it->second;
    p.trainable = r.le<std::uint8_t>() != 0;
    const auto rank = r.le<std::uint32_t>();
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::size_t>(r.le<std::uint64_t>()));
    if (shape != p.value.shape()) {
      throw IoError("checkpoint parameter '" + name + "' has shape " + shape_string(shape) + ", expected " +
                    shape_string(p.value.shape()));
    }
    for (auto& v : p.value.storage()) v = r.f64();
  }
  if (!r.done()) throw IoError("checkpoint has trailing bytes");
  return net;
}

inline void save_checkpoint(const std::filesystem::path& path, const M2FCN& net) {
  write_file_atomic(path, serialize_checkpoint(net));
}

inline M2FCN load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace m2fcn
