#pragma once

// Little-endian binary helpers shared by the dataset and checkpoint containers.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace noiseopt {

class FormatError : public std::runtime_error {
 public:
  enum class Code { io, bad_magic, truncated, count_mismatch, bad_label, bad_format };
  FormatError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Code::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Code::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Code::io, "short write to " + path.string());
}

template <class T>
void put_le(std::vector<std::uint8_t>& b, T v) {
  static_assert(std::is_arithmetic_v<T>);
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(v);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) b.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

inline void put_string(std::vector<std::uint8_t>& b, std::string_view s) {
  put_le<std::uint32_t>(b, static_cast<std::uint32_t>(s.size()));
  b.insert(b.end(), s.begin(), s.end());
}

inline void put_magic(std::vector<std::uint8_t>& b, std::string_view magic) {
  b.insert(b.end(), magic.begin(), magic.end());
}

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& b, std::string what) : b_(b), what_(std::move(what)) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > b_.size()) {
      throw FormatError(FormatError::Code::truncated, what_ + ": truncated at byte " + std::to_string(pos_));
    }
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= std::uint64_t{b_[pos_ + i]} << (8 * i);
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(bits);
    } else {
      return static_cast<T>(bits);
    }
  }

  std::string get_bytes(std::size_t len) {
    if (pos_ + len > b_.size()) throw FormatError(FormatError::Code::truncated, what_ + ": truncated string");
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  b_.begin() + static_cast<std::ptrdiff_t>(pos_ + len));
    pos_ += len;
    return s;
  }

  std::string get_string() { return get_bytes(get<std::uint32_t>()); }

  void expect_magic(std::string_view magic) {
    if (pos_ + magic.size() > b_.size() || get_bytes(magic.size()) != magic) {
      throw FormatError(FormatError::Code::bad_magic, what_ + ": not a '" + std::string(magic) + "' file");
    }
  }

  bool done() const noexcept { return pos_ == b_.size(); }
  const std::string& what() const noexcept { return what_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail
}  // namespace noiseopt
