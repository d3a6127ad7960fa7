#include "megloc/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "megloc/errors.hpp"

namespace megloc::io {

namespace {

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

template <typename U>
U get_le(std::span<const std::uint8_t> in) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(in[i]) << (8 * i);
  }
  return value;
}

}  // namespace

void ByteWriter::magic(std::string_view tag) {
  bytes_.insert(bytes_.end(), tag.begin(), tag.end());
}

void ByteWriter::u32(std::uint32_t value) { put_le(bytes_, value); }
void ByteWriter::u64(std::uint64_t value) { put_le(bytes_, value); }
void ByteWriter::f32(float value) { put_le(bytes_, std::bit_cast<std::uint32_t>(value)); }
void ByteWriter::f64(double value) { put_le(bytes_, std::bit_cast<std::uint64_t>(value)); }

void ByteWriter::f64s(std::span<const double> values) {
  bytes_.reserve(bytes_.size() + 8 * values.size());
  for (double v : values) f64(v);
}

std::span<const std::uint8_t> ByteReader::take(std::size_t count) {
  if (count > remaining()) {
    throw CorruptFileError("unexpected end of file at byte " +
                           std::to_string(offset_) + " (needed " +
                           std::to_string(count) + " more)");
  }
  auto out = bytes_.subspan(offset_, count);
  offset_ += count;
  return out;
}

void ByteReader::expect_magic(std::string_view tag) {
  if (remaining() < tag.size()) {
    throw FormatError("file too short for magic '" + std::string(tag) + "'");
  }
  auto got = take(tag.size());
  if (std::memcmp(got.data(), tag.data(), tag.size()) != 0) {
    throw FormatError("bad magic: expected '" + std::string(tag) + "'");
  }
}

std::uint32_t ByteReader::u32() { return get_le<std::uint32_t>(take(4)); }
std::uint64_t ByteReader::u64() { return get_le<std::uint64_t>(take(8)); }
float ByteReader::f32() { return std::bit_cast<float>(get_le<std::uint32_t>(take(4))); }
double ByteReader::f64() { return std::bit_cast<double>(get_le<std::uint64_t>(take(8))); }

void ByteReader::f64s(std::span<double> out) {
  auto raw = take(8 * out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::bit_cast<double>(get_le<std::uint64_t>(raw.subspan(8 * i, 8)));
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("read failed for '" + path.string() + "'");
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("write failed for '" + path.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

std::uint64_t fingerprint(std::span<const double> values) {
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      hash ^= (bits >> (8 * i)) & 0xFF;
      hash *= 0x100000001B3ULL;
    }
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << value;
  return out.str();
}

}  // namespace megloc::io
