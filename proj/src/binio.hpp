// SPDX-License-Identifier: Apache-2.0
// Little-endian fixed-width binary helpers shared by the index file formats.
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "darth/common.hpp"

namespace darth::binio {

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw FormatError("cannot create " + path.string());
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& v) {
    raw(&v, sizeof(T));
  }

  template <typename T>
  void put_array(const std::vector<T>& v) {
    if (!v.empty()) raw(v.data(), v.size() * sizeof(T));
  }

  void raw(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw FormatError("write failed on " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open " + path.string());
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }

  template <typename T>
  std::vector<T> get_array(std::size_t n) {
    std::vector<T> v(n);
    if (n > 0) raw(v.data(), n * sizeof(T));
    return v;
  }

  void raw(void* p, std::size_t n) {
    const auto at = offset();
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError(path_.string() + ": truncated at byte offset " + std::to_string(at));
  }

  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw FormatError(path_.string() + ": trailing bytes after byte offset " + std::to_string(offset()));
    }
  }

  std::uint64_t offset() { return static_cast<std::uint64_t>(in_.tellg()); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace darth::binio
