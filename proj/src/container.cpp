#include "oadp/container.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <string_view>
#include <unordered_set>

namespace oadp {

namespace {

constexpr std::string_view kMagic = "OADPTNSR";

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    check(bytes_.size() - pos_ >= n, ErrorKind::kFormat,
          "truncated OADP-TENSORS data at byte " + std::to_string(pos_));
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void TensorContainer::add(std::string name, Tensor tensor, DType dtype) {
  check(!contains(name), ErrorKind::kFormat, "duplicate tensor name " + name);
  check(name.size() <= 0xFFFF, ErrorKind::kFormat, "tensor name too long");
  check(!tensor.empty(), ErrorKind::kDimension,
        "cannot store empty tensor " + name);
  if (dtype == DType::kF32) {
    for (double& v : tensor.data()) v = static_cast<double>(static_cast<float>(v));
  }
  entries_.push_back({std::move(name), dtype, std::move(tensor)});
}

void TensorContainer::add(std::string name, const Vec& values, DType dtype) {
  add(std::move(name), Tensor({values.size()}, values), dtype);
}

bool TensorContainer::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const TensorEntry& TensorContainer::entry(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  fail(ErrorKind::kFormat, "missing tensor entry " + name);
}

Vec TensorContainer::get_vec(const std::string& name) const {
  const Tensor& t = get(name);
  return {t.data().begin(), t.data().end()};
}

std::vector<std::uint8_t> encode_container(const TensorContainer& c) {
  Writer w;
  w.raw(kMagic);
  w.u16(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(c.size()));
  for (const auto& e : c.entries()) {
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.raw(e.name);
    w.u8(static_cast<std::uint8_t>(e.dtype));
    w.u8(static_cast<std::uint8_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : e.tensor.data()) {
      if (e.dtype == DType::kF32) {
        w.u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        w.u64(std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  return w.take();
}

TensorContainer decode_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  check(r.str(kMagic.size()) == kMagic, ErrorKind::kFormat,
        "bad magic: not an OADP-TENSORS file");
  const auto version = r.u16();
  check(version == kContainerVersion, ErrorKind::kFormat,
        "unsupported OADP-TENSORS version " + std::to_string(version));
  const auto count = r.u32();
  TensorContainer c;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u16());
    const auto code = r.u8();
    check(code == 1 || code == 2, ErrorKind::kFormat,
          "unknown dtype code " + std::to_string(code) + " for " + name);
    const auto dtype = static_cast<DType>(code);
    const auto rank = r.u8();
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.u32();
      check(d > 0, ErrorKind::kFormat, "zero dimension in " + name);
      n *= d;
    }
    std::vector<double> data(n);
    for (auto& v : data) {
      v = dtype == DType::kF32 ? static_cast<double>(std::bit_cast<float>(r.u32()))
                               : std::bit_cast<double>(r.u64());
    }
    check(!c.contains(name), ErrorKind::kFormat, "duplicate tensor name " + name);
    c.add(std::move(name), Tensor(std::move(shape), std::move(data)), dtype);
  }
  check(r.done(), ErrorKind::kFormat, "trailing bytes after last entry");
  return c;
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    check(out.good(), ErrorKind::kIo, "cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    check(out.good(), ErrorKind::kIo, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  check(!ec, ErrorKind::kIo, "cannot rename to " + path.string() + ": " + ec.message());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()),
                              text.size()));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_container(const std::filesystem::path& path,
                     const TensorContainer& c) {
  write_file_atomic(path, encode_container(c));
}

TensorContainer read_container(const std::filesystem::path& path) {
  return decode_container(read_file_bytes(path));
}

}  // namespace oadp
