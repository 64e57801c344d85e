#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

// Little-endian byte-buffer helpers shared by the LMR1 and LMRC containers.
namespace lamar::io {

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

inline void put_f64(std::string& out, double f) {
  std::uint64_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u64(out, bits);
}

inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

inline std::uint16_t get_u16(const char* p) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(p[0]) |
                                    (static_cast<unsigned char>(p[1]) << 8));
}

inline std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

inline float get_f32(const char* p) {
  const std::uint32_t bits = get_u32(p);
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

inline double get_f64(const char* p) {
  const std::uint64_t bits = get_u64(p);
  double f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

std::string read_file(const std::filesystem::path& path);
// Writes to "<path>.tmp" and renames over path.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace lamar::io
