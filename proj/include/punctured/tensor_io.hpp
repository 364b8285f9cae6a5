#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "punctured/tensor.hpp"

namespace punctured {

// Binary container: little-endian u32 magic, u32 n1, n2, n3, then the
// entries in storage order (k fastest). Tensors hold 8-byte IEEE-754 doubles,
// masks one byte per entry.
inline constexpr std::uint32_t kTensorMagic = 0x54334E53;
inline constexpr std::uint32_t kMaskMagic = 0x4D334E53;

void write_tensor(std::ostream& out, const Tensor3& t);
Tensor3 read_tensor(std::istream& in);

void write_mask(std::ostream& out, const MaskTensor& m);
// The container does not carry epsilon; the loaded mask reports its
// empirical fill fraction instead.
MaskTensor read_mask(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor3& t);
Tensor3 load_tensor(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const MaskTensor& m);
MaskTensor load_mask(const std::filesystem::path& path);

}  // namespace punctured
