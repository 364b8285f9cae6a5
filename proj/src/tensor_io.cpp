#include "punctured/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "punctured/errors.hpp"

namespace punctured {

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw FormatError("truncated tensor container");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

void put_header(std::ostream& out, std::uint32_t magic, const Shape3& s) {
  put_le<std::uint32_t>(out, magic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.n1()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.n2()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.n3()));
}

Shape3 get_header(std::istream& in, std::uint32_t magic) {
  if (get_le<std::uint32_t>(in) != magic) {
    throw FormatError("bad magic number in tensor container");
  }
  const auto n1 = get_le<std::uint32_t>(in);
  const auto n2 = get_le<std::uint32_t>(in);
  const auto n3 = get_le<std::uint32_t>(in);
  return Shape3(n1, n2, n3);
}

template <typename Fn>
void with_file(const std::filesystem::path& path, std::ios::openmode mode, Fn&& fn) {
  std::fstream f(path, mode | std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  fn(f);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor3& t) {
  put_header(out, kTensorMagic, t.shape());
  for (double v : t.values()) put_le<double>(out, v);
}

Tensor3 read_tensor(std::istream& in) {
  const Shape3 shape = get_header(in, kTensorMagic);
  std::vector<double> values(shape.entries());
  for (auto& v : values) v = get_le<double>(in);
  return Tensor3(shape, std::move(values));
}

void write_mask(std::ostream& out, const MaskTensor& m) {
  put_header(out, kMaskMagic, m.shape());
  out.write(reinterpret_cast<const char*>(m.bits().data()),
            static_cast<std::streamsize>(m.bits().size()));
}

MaskTensor read_mask(std::istream& in) {
  const Shape3 shape = get_header(in, kMaskMagic);
  std::vector<std::uint8_t> bits(shape.entries());
  if (!in.read(reinterpret_cast<char*>(bits.data()), static_cast<std::streamsize>(bits.size()))) {
    throw FormatError("truncated mask container");
  }
  std::size_t ones = 0;
  for (auto b : bits) ones += b;
  const double fill = static_cast<double>(ones) / static_cast<double>(bits.size());
  return MaskTensor(shape, std::move(bits), fill);
}

void save_tensor(const std::filesystem::path& path, const Tensor3& t) {
  with_file(path, std::ios::out | std::ios::trunc, [&](std::fstream& f) { write_tensor(f, t); });
}

Tensor3 load_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return read_tensor(f);
}

void save_mask(const std::filesystem::path& path, const MaskTensor& m) {
  with_file(path, std::ios::out | std::ios::trunc, [&](std::fstream& f) { write_mask(f, m); });
}

MaskTensor load_mask(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return read_mask(f);
}

}  // namespace punctured
