#include "msnet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include "msnet/errors.hpp"
#include "msnet/image.hpp"

namespace msnet {

namespace {

template <typename T>
void put(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xFF));
    u = static_cast<U>(u >> 8);
  }
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, std::numeric_limits<uInt>::max()));
    crc = crc32(crc, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint truncated: " + origin_);
  }

  std::string_view bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ParameterSet& params) {
  std::string out = "MSNC";
  put<std::uint16_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params.items()) {
    if (p.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ArgumentError("checkpoint: parameter name too long: " + p.name);
    }
    put<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    out += p.name;
    const auto& shape = p.tensor.shape();
    put<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : p.tensor.values()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  put<std::uint32_t>(out, crc32_of(out));
  return out;
}

std::vector<CheckpointEntry> parse_checkpoint(std::string_view bytes, const std::string& origin) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "MSNC") throw DataError("not a checkpoint (bad magic): " + origin);
  if (bytes.size() < 14) throw DataError("checkpoint truncated: " + origin);
  const auto body = bytes.substr(0, bytes.size() - 4);
  Reader tail(bytes.substr(bytes.size() - 4), origin);
  if (tail.get<std::uint32_t>() != crc32_of(body)) throw DataError("checkpoint corrupt (CRC mismatch): " + origin);

  Reader r(body, origin);
  r.take(4);
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version " + std::to_string(version) + ": " + origin);
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<CheckpointEntry> entries;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = std::string(r.take(r.get<std::uint16_t>()));
    if (!names.insert(e.name).second) throw DataError("checkpoint has duplicate entry " + e.name + ": " + origin);
    const auto rank = r.get<std::uint8_t>();
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      e.shape.push_back(r.get<std::uint32_t>());
      n *= e.shape.back();
    }
    if (n > r.remaining() / 4) throw DataError("checkpoint truncated: " + origin);
    e.values.resize(n);
    for (auto& v : e.values) v = std::bit_cast<float>(r.get<std::uint32_t>());
    entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw DataError("checkpoint has trailing bytes: " + origin);
  return entries;
}

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(params));
}

std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str(), path.string());
}

void apply_checkpoint(ParameterSet& params, const std::vector<CheckpointEntry>& entries) {
  std::unordered_map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  for (const auto& p : params.items()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ConfigError("checkpoint lacks parameter " + p.name);
    if (it->second->shape != p.tensor.shape()) {
      throw ConfigError("checkpoint shape " + shape_str(it->second->shape) + " for " + p.name +
                        " does not match model shape " + shape_str(p.tensor.shape()));
    }
  }
  for (auto& p : params.items()) {
    const auto& src = by_name.at(p.name)->values;
    auto dst = p.tensor.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<double>(src[i]);
  }
}

}  // namespace msnet
