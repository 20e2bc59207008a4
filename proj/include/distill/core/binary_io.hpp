#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include "distill/core/errors.hpp"

namespace distill::core {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Appends little-endian fixed-width values to a byte buffer.
class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.append(tag); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u8(std::uint8_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }

  const std::string& bytes() const { return bytes_; }

 private:
  void raw(const void* p, std::size_t n) { bytes_.append(static_cast<const char*>(p), n); }
  std::string bytes_;
};

/// Bounds-checked little-endian reader; every failure reports its offset.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  void expect_magic(std::string_view tag) {
    if (bytes_.size() < tag.size() || bytes_.substr(0, tag.size()) != tag) {
      throw FormatError("bad magic, expected \"" + std::string(tag) + "\"", 0);
    }
    offset_ = tag.size();
  }

  std::uint32_t u32() { return read<std::uint32_t>("u32"); }
  std::uint8_t u8() { return read<std::uint8_t>("u8"); }
  double f64() { return read<double>("f64"); }

  std::size_t offset() const { return offset_; }
  bool at_end() const { return offset_ == bytes_.size(); }

 private:
  template <typename T>
  T read(const char* what) {
    if (bytes_.size() - offset_ < sizeof(T)) {
      throw FormatError(std::string("truncated file while reading ") + what, offset_);
    }
    T v;
    std::memcpy(&v, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return v;
  }

  std::string_view bytes_;
  std::size_t offset_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace distill::core
