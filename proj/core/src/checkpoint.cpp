#include "fusionsam/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fusionsam/error.hpp"

namespace fusionsam {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'A', 'M'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint: truncated stream");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f64: return 8;
    case DType::f32: return 4;
    case DType::i64: return 8;
    case DType::u8: return 1;
  }
  throw DataError("checkpoint: unknown dtype");
}

std::size_t CheckpointEntry::numel() const {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

void Checkpoint::put_floats(const std::string& name, const Shape& shape, std::span<const Scalar> values) {
  CheckpointEntry e;
  e.dtype = sizeof(Scalar) == 8 ? DType::f64 : DType::f32;
  for (std::size_t d : shape) e.dims.push_back(static_cast<std::uint32_t>(d));
  for (Scalar v : values) {
    if constexpr (sizeof(Scalar) == 8) {
      put_le(e.payload, std::bit_cast<std::uint64_t>(static_cast<double>(v)));
    } else {
      put_le(e.payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  entries[name] = std::move(e);
}

void Checkpoint::put_ints(const std::string& name, std::span<const std::int64_t> values) {
  CheckpointEntry e;
  e.dtype = DType::i64;
  e.dims = {static_cast<std::uint32_t>(values.size())};
  for (std::int64_t v : values) put_le(e.payload, static_cast<std::uint64_t>(v));
  entries[name] = std::move(e);
}

void Checkpoint::put_text(const std::string& name, const std::string& text) {
  CheckpointEntry e;
  e.dtype = DType::u8;
  e.dims = {static_cast<std::uint32_t>(text.size())};
  e.payload.assign(text.begin(), text.end());
  entries[name] = std::move(e);
}

std::vector<Scalar> Checkpoint::get_floats(const std::string& name, Shape* shape) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw DataError("checkpoint: missing entry '" + name + "'");
  const CheckpointEntry& e = it->second;
  if (e.dtype != DType::f64 && e.dtype != DType::f32) throw DataError("checkpoint: entry '" + name + "' is not float");
  if (shape != nullptr) shape->assign(e.dims.begin(), e.dims.end());
  Reader r(e.payload);
  std::vector<Scalar> out(e.numel());
  for (Scalar& v : out) {
    if (e.dtype == DType::f64) {
      v = static_cast<Scalar>(std::bit_cast<double>(r.get<std::uint64_t>()));
    } else {
      v = static_cast<Scalar>(std::bit_cast<float>(r.get<std::uint32_t>()));
    }
  }
  return out;
}

std::vector<std::int64_t> Checkpoint::get_ints(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw DataError("checkpoint: missing entry '" + name + "'");
  if (it->second.dtype != DType::i64) throw DataError("checkpoint: entry '" + name + "' is not i64");
  Reader r(it->second.payload);
  std::vector<std::int64_t> out(it->second.numel());
  for (std::int64_t& v : out) v = static_cast<std::int64_t>(r.get<std::uint64_t>());
  return out;
}

std::string Checkpoint::get_text(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw DataError("checkpoint: missing entry '" + name + "'");
  if (it->second.dtype != DType::u8) throw DataError("checkpoint: entry '" + name + "' is not text");
  return std::string(it->second.payload.begin(), it->second.payload.end());
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, version);
  put_le(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, e] : entries) {
    if (name.size() > 0xFFFF) throw DataError("checkpoint: entry name too long");
    if (e.dims.size() > 0xFF) throw DataError("checkpoint: entry rank too large");
    if (e.payload.size() != e.numel() * dtype_size(e.dtype)) {
      throw DataError("checkpoint: payload size mismatch for '" + name + "'");
    }
    put_le(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(e.dtype));
    out.push_back(static_cast<std::uint8_t>(e.dims.size()));
    for (std::uint32_t d : e.dims) put_le(out, d);
    out.insert(out.end(), e.payload.begin(), e.payload.end());
  }
  return out;
}

Checkpoint Checkpoint::parse(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw DataError("checkpoint: bad magic (expected FSAM)");
  Checkpoint ck;
  ck.version = r.get<std::uint32_t>();
  if (ck.version != kVersion) throw DataError("checkpoint: unsupported version " + std::to_string(ck.version));
  const std::uint32_t count = r.get<std::uint32_t>();
  std::string previous;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.get<std::uint16_t>();
    const auto name_bytes = r.take(len);
    std::string name(name_bytes.begin(), name_bytes.end());
    if (i > 0 && !(previous < name)) throw DataError("checkpoint: entries not in canonical order at '" + name + "'");
    CheckpointEntry e;
    const std::uint8_t code = r.get<std::uint8_t>();
    if (code > static_cast<std::uint8_t>(DType::u8)) throw DataError("checkpoint: unknown dtype code " + std::to_string(code));
    e.dtype = static_cast<DType>(code);
    const std::uint8_t rank = r.get<std::uint8_t>();
    for (std::uint8_t a = 0; a < rank; ++a) e.dims.push_back(r.get<std::uint32_t>());
    const auto payload = r.take(e.numel() * dtype_size(e.dtype));
    e.payload.assign(payload.begin(), payload.end());
    previous = name;
    ck.entries.emplace(std::move(name), std::move(e));
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("checkpoint: cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("checkpoint: write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse(bytes);
}

}  // namespace fusionsam
