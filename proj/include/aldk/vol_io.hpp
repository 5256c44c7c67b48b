#pragma once

// VOL1 container: "VOL1", u32 version (1), u32 kind, u32 D, H, W, C, then
// C*D*H*W little-endian float32 in (z, y, x, c) order with c fastest.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aldk/deformation.hpp"

namespace aldk {

enum class VolKind : std::uint32_t { Intensity = 0, Mask = 1, Displacement = 2 };

struct VolData {
  VolKind kind = VolKind::Intensity;
  Tensor data;  // [C,D,H,W]
};

std::vector<std::uint8_t> encode_vol(VolKind kind, const Tensor& data);
VolData decode_vol(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

void write_vol(const std::filesystem::path& path, VolKind kind, const Tensor& data);
VolData read_vol(const std::filesystem::path& path);

void write_vol(const std::filesystem::path& path, const Volume& v);
void write_vol(const std::filesystem::path& path, const MaskVolume& m);
void write_vol(const std::filesystem::path& path, const DisplacementField& f);

Volume read_volume(const std::filesystem::path& path);
MaskVolume read_mask(const std::filesystem::path& path);
DisplacementField read_field(const std::filesystem::path& path);

/// Whole-file helpers shared by the binary formats.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace aldk
