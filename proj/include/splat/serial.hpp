#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "splat/errors.hpp"

namespace splat {

// Little-endian binary readers/writers shared by all on-disk formats.
// Host byte order is assumed little-endian; asserted once at startup.

struct ByteWriter {
  std::vector<uint8_t> bytes;

  void raw(const void* p, size_t n) {
    const uint8_t* b = static_cast<const uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void u8(uint8_t x) { raw(&x, 1); }
  void u32(uint32_t x) { raw(&x, 4); }
  void u64(uint64_t x) { raw(&x, 8); }
  void i64(int64_t x) { raw(&x, 8); }
  void f32(float x) { raw(&x, 4); }
  void f64(double x) { raw(&x, 8); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void f64_array(const double* p, size_t n) { raw(p, n * 8); }
  void f32_array_from_f64(const double* p, size_t n) {
    for (size_t i = 0; i < n; ++i) f32(static_cast<float>(p[i]));
  }
  size_t tell() const { return bytes.size(); }
  void patch_u64(size_t offset, uint64_t x) { std::memcpy(bytes.data() + offset, &x, 8); }
};

struct ByteReader {
  const uint8_t* p = nullptr;
  size_t n = 0;
  size_t pos = 0;
  std::string origin;  // file name for error messages

  ByteReader(const void* data, size_t size, std::string name = "")
      : p(static_cast<const uint8_t*>(data)), n(size), origin(std::move(name)) {}

  void need(size_t k) const {
    if (pos + k > n)
      throw ParseError(origin + ": truncated at byte offset " + std::to_string(pos) +
                       " (need " + std::to_string(k) + " more bytes)");
  }
  void raw(void* out, size_t k) {
    need(k);
    std::memcpy(out, p + pos, k);
    pos += k;
  }
  uint8_t u8() { uint8_t x; raw(&x, 1); return x; }
  uint32_t u32() { uint32_t x; raw(&x, 4); return x; }
  uint64_t u64() { uint64_t x; raw(&x, 8); return x; }
  int64_t i64() { int64_t x; raw(&x, 8); return x; }
  float f32() { float x; raw(&x, 4); return x; }
  double f64() { double x; raw(&x, 8); return x; }
  std::string str() {
    uint32_t k = u32();
    need(k);
    std::string s(reinterpret_cast<const char*>(p + pos), k);
    pos += k;
    return s;
  }
  void f64_array(double* out, size_t k) { raw(out, k * 8); }
  void f64_array_from_f32(double* out, size_t k) {
    for (size_t i = 0; i < k; ++i) out[i] = static_cast<double>(f32());
  }
  void expect_magic(const char magic[8]) {
    char got[8];
    raw(got, 8);
    if (std::memcmp(got, magic, 8) != 0)
      throw ParseError(origin + ": bad magic (expected '" + std::string(magic, 8) + "')");
  }
};

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes);

// FNV-1a 64-bit, used for manifest checksums.
uint64_t fnv1a64(const void* data, size_t n);
std::string fnv1a64_hex(const void* data, size_t n);

}  // namespace splat
