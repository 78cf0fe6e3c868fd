#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

namespace sit::io {

// Shared layout of the toolkit's file formats: a line-oriented ASCII header
// of "key value" records opened by "<MAGIC> <version>" and closed by "end",
// followed by a little-endian binary payload.

std::vector<std::byte> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes);

class ByteWriter {
 public:
  void line(std::string_view text);
  template <typename T>
  void put(T value) {
    static_assert(std::is_arithmetic_v<T>);
    std::byte raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
    bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
  }
  const std::vector<std::byte>& bytes() const { return bytes_; }

 private:
  std::vector<std::byte> bytes_;
};

// Cursor over an in-memory file; every failure is a ParseError carrying the
// byte offset where it was detected.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> bytes, std::string source = {})
      : bytes_(bytes), source_(std::move(source)) {}

  std::string line();
  // Reads "<magic> <version>" and checks both.
  void expect_magic(std::string_view magic, int supported_version);
  // Reads "<key> <value>" and returns the value text.
  std::string expect_field(std::string_view key);
  long long expect_int(std::string_view key);
  void expect_end();

  template <typename T>
  T get() {
    static_assert(std::is_arithmetic_v<T>);
    require(sizeof(T));
    std::byte raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  void require(std::size_t count) const;
  void expect_eof() const;
  [[noreturn]] void fail(const std::string& what) const;
  std::size_t offset() const { return pos_; }

 private:
  std::span<const std::byte> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace sit::io
