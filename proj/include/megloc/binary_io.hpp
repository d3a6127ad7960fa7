#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace megloc::io {

/// Appends little-endian encoded values to a byte buffer.
class ByteWriter {
 public:
  void magic(std::string_view tag);
  void u32(std::uint32_t value);
  void u64(std::uint64_t value);
  void f32(float value);
  void f64(double value);
  void f64s(std::span<const double> values);

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Reads little-endian values; throws CorruptFileError past the end.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  /// Throws FormatError when the next bytes are not `tag`.
  void expect_magic(std::string_view tag);
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  void f64s(std::span<double> out);

  std::size_t remaining() const { return bytes_.size() - offset_; }
  std::size_t offset() const { return offset_; }

 private:
  std::span<const std::uint8_t> take(std::size_t count);

  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames, so a failed write
/// never leaves a partial file at `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);

/// 64-bit FNV-1a over the little-endian encoding of `values`.
std::uint64_t fingerprint(std::span<const double> values);

std::string hex64(std::uint64_t value);

}  // namespace megloc::io
