#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mr2ct/volume.hpp"

namespace mr2ct::nifti {

// NIfTI-1 datatype codes supported by this reader/writer.
enum class Datatype : std::int16_t {
  kUint8 = 2,
  kInt16 = 4,
  kFloat32 = 16,
};

int bytes_per_voxel(Datatype dt);
const char* datatype_name(Datatype dt);

// Decoded single-file NIfTI-1 header. Fields keep their on-disk values so a
// read/write cycle reproduces them.
struct Header {
  std::array<std::int16_t, 8> dim{3, 1, 1, 1, 1, 1, 1, 1};
  std::array<float, 8> pixdim{1, 1, 1, 1, 1, 1, 1, 1};
  Datatype datatype = Datatype::kFloat32;
  float vox_offset = 352.0f;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::uint8_t xyzt_units = 2;  // millimetres
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  float quatern_b = 0, quatern_c = 0, quatern_d = 0;
  float qoffset_x = 0, qoffset_y = 0, qoffset_z = 0;
  std::array<float, 4> srow_x{1, 0, 0, 0};
  std::array<float, 4> srow_y{0, 1, 0, 0};
  std::array<float, 4> srow_z{0, 0, 1, 0};
  std::string descrip;
  bool big_endian = false;
  // Full-precision sform rows (x, y, z; 4 each), kept in a comment extension.
  // Used only when it rounds to the float32 srow values.
  std::optional<std::array<double, 12>> sform_f64;

  Index3 spatial_dims() const { return {dim[1], dim[2], dim[3]}; }
  std::size_t voxel_count() const;

  // Voxel-to-world affine: sform rows when sform_code > 0, else the qform
  // quaternion, else diag(pixdim).
  Mat4 affine() const;
  Geometry geometry() const;

  // Header describing `geometry` with both sform and qform set (code 2).
  static Header from_geometry(const Geometry& geometry, Datatype dt);
};

Header read_header(const std::filesystem::path& path);

// Scalar read: scl_slope/scl_inter applied (slope 0 means 1).
Volume read_volume(const std::filesystem::path& path, Header* header_out = nullptr,
                   IntensitySpace space = IntensitySpace::kUnknown);

// Label read: integer payload, never intensity-scaled. Float payloads are
// accepted only when every voxel is integral.
LabelVolume read_labels(const std::filesystem::path& path, Header* header_out = nullptr);

// Raw payload bytes in file byte order.
std::vector<std::uint8_t> read_payload_bytes(const std::filesystem::path& path,
                                             Header* header_out = nullptr);

// Writers are atomic: the file is assembled under a temporary name in the
// target directory and renamed into place. A ".gz" suffix selects gzip.
void write_volume(const Header& header, const Volume& volume, const std::filesystem::path& path);
void write_volume(const Volume& volume, const std::filesystem::path& path,
                  Datatype dt = Datatype::kFloat32);
void write_labels(const Header& header, const LabelVolume& labels,
                  const std::filesystem::path& path);
void write_labels(const LabelVolume& labels, const std::filesystem::path& path,
                  Datatype dt = Datatype::kInt16);

// Serializes header + payload to an uncompressed byte image: 348-byte header,
// 4 extension flag bytes, the sform_f64 extension when set, then the payload.
std::vector<std::uint8_t> encode(const Header& header, const std::vector<std::uint8_t>& payload);

}  // namespace mr2ct::nifti
