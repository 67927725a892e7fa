#include <cstdio>

#include "doctest.h"
#include "splat/serial.hpp"

using namespace splat;

TEST_CASE("writer/reader roundtrip") {
  ByteWriter w;
  w.u8(7);
  w.u32(0xdeadbeef);
  w.u64(0x0123456789abcdefULL);
  w.i64(-42);
  w.f32(1.5f);
  w.f64(-0.125);
  w.str("hello");
  double arr[3] = {1.0, -2.0, 3.5};
  w.f64_array(arr, 3);
  w.f32_array_from_f64(arr, 3);

  ByteReader r(w.bytes.data(), w.bytes.size(), "mem");
  CHECK(r.u8() == 7);
  CHECK(r.u32() == 0xdeadbeef);
  CHECK(r.u64() == 0x0123456789abcdefULL);
  CHECK(r.i64() == -42);
  CHECK(r.f32() == 1.5f);
  CHECK(r.f64() == -0.125);
  CHECK(r.str() == "hello");
  double back[3];
  r.f64_array(back, 3);
  CHECK(back[0] == 1.0);
  CHECK(back[1] == -2.0);
  CHECK(back[2] == 3.5);
  double back32[3];
  r.f64_array_from_f32(back32, 3);
  CHECK(back32[0] == 1.0);
  CHECK(back32[2] == 3.5);
  CHECK(r.pos == r.n);
}

TEST_CASE("truncated read names the byte offset") {
  ByteWriter w;
  w.u32(5);
  ByteReader r(w.bytes.data(), w.bytes.size(), "trunc.bin");
  r.u32();
  try {
    r.u64();
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    std::string msg = e.what();
    CHECK(msg.find("trunc.bin") != std::string::npos);
    CHECK(msg.find("offset 4") != std::string::npos);
  }
}

TEST_CASE("bad magic is rejected") {
  ByteWriter w;
  w.raw("PTXX9\0\0\0", 8);
  ByteReader r(w.bytes.data(), w.bytes.size(), "m.bin");
  CHECK_THROWS_AS(r.expect_magic("PTFEAT1\0"), ParseError);
}

TEST_CASE("patch_u64 rewrites a placeholder") {
  ByteWriter w;
  size_t at = w.tell();
  w.u64(0);
  w.u32(1);
  w.patch_u64(at, 99);
  ByteReader r(w.bytes.data(), w.bytes.size());
  CHECK(r.u64() == 99);
}

TEST_CASE("file roundtrip") {
  std::string path = "serial_roundtrip.tmp";
  std::vector<uint8_t> data = {1, 2, 3, 250, 0, 7};
  write_file_bytes(path, data);
  auto back = read_file_bytes(path);
  CHECK(back == data);
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_file_bytes("does_not_exist.bin"), ParseError);
}

TEST_CASE("fnv1a64 known vectors") {
  // Reference values for the standard FNV-1a 64-bit parameters.
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
  CHECK(fnv1a64_hex("", 0) == "cbf29ce484222325");
}
