#pragma once

// Versioned named-tensor container.
//
// Byte layout (all integers little-endian):
//   "FSAM" | u32 version | u32 entry_count |
//   entry_count x ( u16 name_len | name (UTF-8) | u8 dtype | u8 rank |
//                   rank x u32 dim | payload )
// Entries are written in byte-wise name order, so serialize(parse(b)) == b.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fusionsam/tensor.hpp"

namespace fusionsam {

enum class DType : std::uint8_t { f64 = 0, f32 = 1, i64 = 2, u8 = 3 };

std::size_t dtype_size(DType t);

struct CheckpointEntry {
  DType dtype = DType::f64;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;  // little-endian element bytes

  std::size_t numel() const;
  friend bool operator==(const CheckpointEntry&, const CheckpointEntry&) = default;
};

class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::map<std::string, CheckpointEntry> entries;

  void put_floats(const std::string& name, const Shape& shape, std::span<const Scalar> values);
  void put_ints(const std::string& name, std::span<const std::int64_t> values);
  void put_text(const std::string& name, const std::string& text);

  bool contains(const std::string& name) const { return entries.count(name) != 0; }
  /// Float entry converted to Scalar; throws DataError on missing name or dtype mismatch.
  std::vector<Scalar> get_floats(const std::string& name, Shape* shape = nullptr) const;
  std::vector<std::int64_t> get_ints(const std::string& name) const;
  std::string get_text(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint parse(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

}  // namespace fusionsam
