#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oadp/tensor.hpp"

namespace oadp {

// OADP-TENSORS binary container, little-endian throughout:
//
//   magic        8 bytes  "OADPTNSR"
//   version      u16      (currently 1)
//   entry count  u32
//   per entry:
//     name       u16 byte length + UTF-8 bytes
//     dtype      u8       1 = f32, 2 = f64
//     rank       u8
//     dims       u32 x rank
//     payload    product(dims) values of dtype
//
// Entries keep insertion order; names are unique.
enum class DType : std::uint8_t { kF32 = 1, kF64 = 2 };

inline constexpr std::uint16_t kContainerVersion = 1;

struct TensorEntry {
  std::string name;
  DType dtype = DType::kF64;
  Tensor tensor;
};

class TensorContainer {
 public:
  // f32 entries are rounded on insertion so memory matches what is written.
  void add(std::string name, Tensor tensor, DType dtype = DType::kF64);
  void add(std::string name, const Vec& values, DType dtype = DType::kF64);

  bool contains(const std::string& name) const;
  const TensorEntry& entry(const std::string& name) const;
  const Tensor& get(const std::string& name) const { return entry(name).tensor; }
  Vec get_vec(const std::string& name) const;

  const std::vector<TensorEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<TensorEntry> entries_;
};

std::vector<std::uint8_t> encode_container(const TensorContainer& c);
TensorContainer decode_container(std::span<const std::uint8_t> bytes);

// Writes via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& text);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

void write_container(const std::filesystem::path& path,
                     const TensorContainer& c);
TensorContainer read_container(const std::filesystem::path& path);

}  // namespace oadp
