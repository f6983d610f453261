#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <type_traits>
#include <vector>

#include "climber/error.hpp"

namespace climber::detail {

// Fixed-width little-endian encoding.

template <typename T>
void put(std::vector<char>& buf, T value) {
  static_assert(std::is_arithmetic_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  buf.insert(buf.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T get(const char* data) {
  static_assert(std::is_arithmetic_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, data, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

/// Bounds-checked cursor over an in-memory byte range.
class Cursor {
 public:
  Cursor(const char* data, std::size_t size, std::string what)
      : data_(data), size_(size), what_(std::move(what)) {}

  template <typename T>
  T read() {
    require(sizeof(T));
    T v = get<T>(data_ + pos_);
    pos_ += sizeof(T);
    return v;
  }

  std::string read_string(std::size_t len) {
    require(len);
    std::string s(data_ + pos_, len);
    pos_ += len;
    return s;
  }

  std::size_t position() const { return pos_; }

 private:
  void require(std::size_t n) const {
    if (size_ - pos_ < n) {
      throw IoError(what_ + ": truncated at byte " + std::to_string(pos_));
    }
  }

  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace climber::detail
