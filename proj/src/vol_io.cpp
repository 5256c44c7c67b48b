#include "aldk/vol_io.hpp"

#include <fstream>
#include <iterator>

#include "aldk/byte_io.hpp"

namespace aldk {
namespace {

constexpr std::string_view kMagic = "VOL1";
constexpr std::uint32_t kVersion = 1;

std::uint32_t channels_for(VolKind kind) { return kind == VolKind::Displacement ? 3u : 1u; }

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<std::uint8_t> encode_vol(VolKind kind, const Tensor& data) {
  if (data.rank() != 4 || data.dim(0) != channels_for(kind))
    throw ShapeError("VOL1 kind " + std::to_string(static_cast<std::uint32_t>(kind)) + " cannot hold " +
                     to_string(data.shape()));
  const auto c = data.dim(0), d = data.dim(1), h = data.dim(2), w = data.dim(3), n = d * h * w;
  ByteWriter out;
  out.raw(kMagic);
  out.u32(kVersion);
  out.u32(static_cast<std::uint32_t>(kind));
  out.u32(static_cast<std::uint32_t>(d));
  out.u32(static_cast<std::uint32_t>(h));
  out.u32(static_cast<std::uint32_t>(w));
  out.u32(static_cast<std::uint32_t>(c));
  for (std::int64_t v = 0; v < n; ++v)
    for (std::int64_t ch = 0; ch < c; ++ch) out.f32(data[ch * n + v]);
  return std::move(out.bytes());
}

VolData decode_vol(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  using K = FormatError::Kind;
  ByteReader in(bytes, origin);
  if (in.raw(kMagic.size()) != kMagic) throw FormatError(K::BadMagic, origin + ": not a VOL1 file");
  if (const auto version = in.u32(); version != kVersion)
    throw FormatError(K::BadVersion, origin + ": unsupported VOL1 version " + std::to_string(version));
  const std::uint32_t kind = in.u32();
  const std::uint64_t d = in.u32(), h = in.u32(), w = in.u32(), c = in.u32();
  if (kind > 2) throw FormatError(K::Inconsistent, origin + ": unknown kind " + std::to_string(kind));
  const auto vk = static_cast<VolKind>(kind);
  if (c != channels_for(vk) || d == 0 || h == 0 || w == 0)
    throw FormatError(K::Inconsistent, origin + ": header extents/channels inconsistent with kind");
  const std::uint64_t n = d * h * w;
  const std::uint64_t payload = c * n * 4;
  if (in.remaining() < payload)
    throw FormatError(K::Truncated, origin + ": truncated payload (" + std::to_string(in.remaining()) + " of " +
                                        std::to_string(payload) + " bytes)");
  if (in.remaining() > payload)
    throw FormatError(K::Inconsistent, origin + ": payload longer than the declared extents");
  Tensor t(Shape{static_cast<std::int64_t>(c), static_cast<std::int64_t>(d), static_cast<std::int64_t>(h),
                 static_cast<std::int64_t>(w)});
  const auto nn = static_cast<std::int64_t>(n), cc = static_cast<std::int64_t>(c);
  for (std::int64_t v = 0; v < nn; ++v)
    for (std::int64_t ch = 0; ch < cc; ++ch) t[ch * nn + v] = in.f32();
  if (vk == VolKind::Mask)
    for (float v : t.data())
      if (v != 0.0f && v != 1.0f) throw FormatError(K::NonBinaryMask, origin + ": mask payload is not binary");
  return {vk, std::move(t)};
}

void write_vol(const std::filesystem::path& path, VolKind kind, const Tensor& data) {
  write_file(path, encode_vol(kind, data));
}

VolData read_vol(const std::filesystem::path& path) { return decode_vol(read_file(path), path.string()); }

void write_vol(const std::filesystem::path& path, const Volume& v) { write_vol(path, VolKind::Intensity, v.grid()); }
void write_vol(const std::filesystem::path& path, const MaskVolume& m) { write_vol(path, VolKind::Mask, m.grid()); }
void write_vol(const std::filesystem::path& path, const DisplacementField& f) {
  write_vol(path, VolKind::Displacement, f.u());
}

namespace {

VolData read_kind(const std::filesystem::path& path, VolKind expected) {
  VolData d = read_vol(path);
  if (d.kind != expected)
    throw FormatError(FormatError::Kind::Inconsistent,
                      path.string() + ": expected kind " + std::to_string(static_cast<std::uint32_t>(expected)) +
                          ", found " + std::to_string(static_cast<std::uint32_t>(d.kind)));
  return d;
}

}  // namespace

Volume read_volume(const std::filesystem::path& path) { return Volume(read_kind(path, VolKind::Intensity).data); }
MaskVolume read_mask(const std::filesystem::path& path) { return MaskVolume(read_kind(path, VolKind::Mask).data); }
DisplacementField read_field(const std::filesystem::path& path) {
  return DisplacementField(read_kind(path, VolKind::Displacement).data);
}

}  // namespace aldk
