// SPDX-License-Identifier: Apache-2.0
//
// Little-endian binary readers/writers for the file formats (pretraining
// datasets, checkpoints) and small filesystem helpers.
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tunlm {

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void bytes(const void* data, size_t n) {
    const char* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void i32_array(std::span<const int32_t> a) {
    for (int32_t v : a) i32(v);
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

// Reads from an in-memory buffer; every accessor throws the supplied
// truncation message when the buffer is exhausted.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string truncation_error)
      : data_(data), error_(std::move(truncation_error)) {}

  uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
  uint32_t u32() {
    const char* p = take(4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(p[i]);
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  uint64_t u64() {
    const char* p = take(8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(p[i]);
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    uint32_t n = u32();
    const char* p = take(n);
    return std::string(p, n);
  }
  std::vector<int32_t> i32_array(size_t n) {
    std::vector<int32_t> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = i32();
    return out;
  }
  std::string_view raw(size_t n) { return std::string_view(take(n), n); }
  size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  const char* take(size_t n) {
    if (pos_ + n > data_.size()) throw std::runtime_error(error_);
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string_view data_;
  std::string error_;
  size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);

// Writes to a temporary sibling then renames, so readers never observe a
// partially written file.
void atomic_write_file(const std::filesystem::path& path, std::string_view data);

}  // namespace tunlm
