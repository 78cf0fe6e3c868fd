#include "sit/autodiff/checkpoint.hpp"

#include <cmath>
#include <sstream>

#include "sit/errors.hpp"
#include "sit/io/binary.hpp"

namespace sit::ad {

namespace {
constexpr int kVersion = 1;

bool valid_token(const std::string& s) {
  return !s.empty() && s.find_first_of(" \n") == std::string::npos;
}
}  // namespace

void Checkpoint::set_record(const std::string& key, const std::string& value) {
  for (auto& [k, v] : records)
    if (k == key) {
      v = value;
      return;
    }
  records.emplace_back(key, value);
}

std::optional<std::string> Checkpoint::record(const std::string& key) const {
  for (const auto& [k, v] : records)
    if (k == key) return v;
  return std::nullopt;
}

const CheckpointTensor* Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt) {
  io::ByteWriter out;
  out.line("SITCKPT " + std::to_string(kVersion));
  out.line("records " + std::to_string(ckpt.records.size()));
  for (const auto& [k, v] : ckpt.records) {
    if (!valid_token(k) || v.find('\n') != std::string::npos)
      throw DataError("checkpoint record '" + k + "' cannot be serialised");
    out.line(k + " " + v);
  }
  out.line("tensors " + std::to_string(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (!valid_token(t.name)) throw DataError("checkpoint tensor name '" + t.name + "' is invalid");
    out.line("tensor " + t.name + " " + std::to_string(t.value.rows()) + " " + std::to_string(t.value.cols()));
  }
  out.line("end");
  for (const auto& t : ckpt.tensors)
    for (float x : t.value.values()) out.put(x);
  return out.bytes();
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes) {
  io::ByteReader in(bytes, "SITCKPT");
  in.expect_magic("SITCKPT", kVersion);
  Checkpoint ckpt;
  const auto n_records = in.expect_int("records");
  if (n_records < 0 || n_records > 100000) in.fail("record count out of range");
  for (long long i = 0; i < n_records; ++i) {
    const auto text = in.line();
    const auto space = text.find(' ');
    if (space == std::string::npos) in.fail("malformed record line '" + text + "'");
    ckpt.records.emplace_back(text.substr(0, space), text.substr(space + 1));
  }
  const auto n_tensors = in.expect_int("tensors");
  if (n_tensors < 0 || n_tensors > 100000) in.fail("tensor count out of range");
  std::size_t payload = 0;
  for (long long i = 0; i < n_tensors; ++i) {
    std::istringstream fields(in.expect_field("tensor"));
    std::string name;
    long long rows = -1, cols = -1;
    if (!(fields >> name >> rows >> cols) || rows < 0 || cols < 0) in.fail("malformed tensor header");
    ckpt.tensors.push_back({name, Array<float>(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols))});
    payload += static_cast<std::size_t>(rows * cols) * sizeof(float);
  }
  in.expect_end();
  in.require(payload);
  for (auto& t : ckpt.tensors)
    for (auto& x : t.value.values()) {
      const auto at = in.offset();
      x = in.get<float>();
      if (!std::isfinite(x)) throw ParseError("SITCKPT: non-finite weight in '" + t.name + "'", at);
    }
  in.expect_eof();
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace sit::ad
