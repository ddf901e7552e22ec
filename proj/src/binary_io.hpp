#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sparsecap/errors.hpp"

// Little-endian binary streams used by the dataset and checkpoint formats.
namespace sparsecap::binio {

template <typename U>
U to_le(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out{};
    for (std::size_t i = 0; i < sizeof(U); ++i) out = (out << 8) | ((v >> (8 * i)) & 0xff);
    return out;
  }
  return v;
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) {
    v = to_le(v);
    bytes(&v, 4);
  }
  void f32s(const std::vector<float>& values) {
    for (const float f : values) u32(std::bit_cast<std::uint32_t>(f));
  }
  void f64s(const std::vector<double>& values) {
    for (const double d : values) {
      auto bits = to_le(std::bit_cast<std::uint64_t>(d));
      bytes(&bits, 8);
    }
  }
  void close() {
    out_.close();
    if (!out_) throw IoError("failed writing " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string());
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(path_.string() + ": truncated file");
    }
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return to_le(v);
  }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    if (n) bytes(s.data(), n);
    return s;
  }
  void f32s(std::vector<float>& values) {
    std::vector<std::uint32_t> raw(values.size());
    if (!raw.empty()) bytes(raw.data(), raw.size() * 4);
    for (std::size_t i = 0; i < raw.size(); ++i) values[i] = std::bit_cast<float>(to_le(raw[i]));
  }
  void f64s(std::vector<double>& values) {
    std::vector<std::uint64_t> raw(values.size());
    if (!raw.empty()) bytes(raw.data(), raw.size() * 8);
    for (std::size_t i = 0; i < raw.size(); ++i) values[i] = std::bit_cast<double>(to_le(raw[i]));
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace sparsecap::binio
