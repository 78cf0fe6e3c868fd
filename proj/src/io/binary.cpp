#include "sit/io/binary.hpp"

#include <charconv>
#include <fstream>

#include "sit/errors.hpp"

namespace sit::io {

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<std::byte> bytes(size);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("short read on " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed on " + path.string());
}

void ByteWriter::line(std::string_view text) {
  for (char ch : text) bytes_.push_back(static_cast<std::byte>(ch));
  bytes_.push_back(std::byte{'\n'});
}

void ByteReader::fail(const std::string& what) const {
  throw ParseError(source_.empty() ? what : source_ + ": " + what, pos_);
}

void ByteReader::require(std::size_t count) const {
  if (bytes_.size() - pos_ < count)
    fail("truncated payload, need " + std::to_string(count) + " more bytes, have " +
         std::to_string(bytes_.size() - pos_));
}

void ByteReader::expect_eof() const {
  if (pos_ != bytes_.size())
    fail(std::to_string(bytes_.size() - pos_) + " trailing bytes after payload");
}

std::string ByteReader::line() {
  std::string out;
  constexpr std::size_t kMaxLine = 4096;
  while (true) {
    if (pos_ >= bytes_.size()) fail("unterminated header line");
    const char ch = static_cast<char>(bytes_[pos_++]);
    if (ch == '\n') return out;
    if (out.size() >= kMaxLine) fail("header line too long");
    out.push_back(ch);
  }
}

void ByteReader::expect_magic(std::string_view magic, int supported_version) {
  const auto start = pos_;
  const auto text = line();
  const auto space = text.find(' ');
  if (text.substr(0, space) != magic) {
    pos_ = start;
    fail("bad magic, expected " + std::string(magic));
  }
  int version = -1;
  if (space != std::string::npos) {
    const auto v = std::string_view(text).substr(space + 1);
    std::from_chars(v.data(), v.data() + v.size(), version);
  }
  if (version != supported_version) {
    pos_ = start;
    fail("unsupported " + std::string(magic) + " version '" +
         (space == std::string::npos ? std::string() : text.substr(space + 1)) + "'");
  }
}

std::string ByteReader::expect_field(std::string_view key) {
  const auto start = pos_;
  const auto text = line();
  const auto space = text.find(' ');
  if (space == std::string::npos || text.substr(0, space) != key) {
    pos_ = start;
    fail("expected header field '" + std::string(key) + "'");
  }
  return text.substr(space + 1);
}

long long ByteReader::expect_int(std::string_view key) {
  const auto start = pos_;
  const auto value = expect_field(key);
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    pos_ = start;
    fail("field '" + std::string(key) + "' is not an integer: '" + value + "'");
  }
  return out;
}

void ByteReader::expect_end() {
  const auto start = pos_;
  if (line() != "end") {
    pos_ = start;
    fail("expected 'end' closing the header");
  }
}

}  // namespace sit::io
