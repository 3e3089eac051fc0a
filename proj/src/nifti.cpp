#include "mr2ct/nifti.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <string_view>

#include <unistd.h>
#include <zlib.h>

namespace mr2ct::nifti {
namespace {

constexpr int kHeaderSize = 348;
constexpr int kDefaultVoxOffset = 352;
constexpr int kCommentEcode = 6;
constexpr std::string_view kSformTag = "mr2ct-sform-f64";

static_assert(std::endian::native == std::endian::little,
              "the NIfTI writer assumes a little-endian host");

// Field offsets inside the 348-byte header.
namespace off {
constexpr int sizeof_hdr = 0;
constexpr int dim = 40;
constexpr int datatype = 70;
constexpr int bitpix = 72;
constexpr int pixdim = 76;
constexpr int vox_offset = 108;
constexpr int scl_slope = 112;
constexpr int scl_inter = 116;
constexpr int xyzt_units = 123;
constexpr int descrip = 148;
constexpr int qform_code = 252;
constexpr int sform_code = 254;
constexpr int quatern_b = 256;
constexpr int srow_x = 280;
constexpr int srow_y = 296;
constexpr int srow_z = 312;
constexpr int magic = 344;
}  // namespace off

template <typename T>
T load(const std::uint8_t* base, int offset, bool swap) {
  T value;
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, base + offset, sizeof(T));
  if (swap) std::reverse(bytes, bytes + sizeof(T));
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

template <typename T>
void store(std::uint8_t* base, int offset, T value) {
  std::memcpy(base + offset, &value, sizeof(T));
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(Errc::kIoFailure, "no such file: " + path.string());
  }
  // gzread passes uncompressed files through unchanged.
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) fail(Errc::kIoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes;
  std::uint8_t chunk[1 << 16];
  for (;;) {
    const int n = gzread(f, chunk, sizeof(chunk));
    if (n < 0) {
      int errnum = 0;
      const std::string msg = gzerror(f, &errnum);
      gzclose(f);
      fail(Errc::kIoFailure, "read error in " + path.string() + ": " + msg);
    }
    if (n == 0) break;
    bytes.insert(bytes.end(), chunk, chunk + n);
  }
  gzclose(f);
  return bytes;
}

std::optional<std::array<double, 12>> parse_sform_extension(std::string_view text) {
  if (text.substr(0, kSformTag.size()) != kSformTag) return std::nullopt;
  std::array<double, 12> v{};
  const char* cur = text.data() + kSformTag.size();
  const char* end = text.data() + text.size();
  for (double& x : v) {
    while (cur < end && *cur == ' ') ++cur;
    const auto r = std::from_chars(cur, end, x);
    if (r.ec != std::errc()) return std::nullopt;
    cur = r.ptr;
  }
  return v;
}

std::string format_sform_extension(const std::array<double, 12>& v) {
  std::string text(kSformTag);
  char buf[32];
  for (double x : v) {
    const auto r = std::to_chars(buf, buf + sizeof(buf), x);
    text += ' ';
    text.append(buf, r.ptr);
  }
  return text;
}

struct Parsed {
  Header header;
  std::size_t payload_offset = 0;
};

Parsed parse(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  if (bytes.size() < static_cast<std::size_t>(kHeaderSize)) {
    fail(Errc::kTruncatedPayload, source + ": file shorter than the 348-byte header (size " +
                                      std::to_string(bytes.size()) + ")");
  }
  const std::uint8_t* b = bytes.data();
  bool swap = false;
  const auto dim0 = load<std::int16_t>(b, off::dim, false);
  if (dim0 < 1 || dim0 > 7) {
    const auto swapped = load<std::int16_t>(b, off::dim, true);
    if (swapped < 1 || swapped > 7) {
      fail(Errc::kBadMagic, source + ": dim[0] at offset 40 is not in [1,7] in either byte order");
    }
    swap = true;
  }
  if (load<std::int32_t>(b, off::sizeof_hdr, swap) != kHeaderSize) {
    fail(Errc::kBadMagic, source + ": sizeof_hdr at offset 0 is not 348");
  }
  if (std::memcmp(b + off::magic, "n+1\0", 4) != 0) {
    fail(Errc::kBadMagic, source + ": magic at offset 344 is not \"n+1\\0\"");
  }

  Parsed p;
  Header& h = p.header;
  h.big_endian = swap;
  for (int k = 0; k < 8; ++k) {
    h.dim[k] = load<std::int16_t>(b, off::dim + 2 * k, swap);
    h.pixdim[k] = load<float>(b, off::pixdim + 4 * k, swap);
  }
  for (int k = 1; k <= h.dim[0]; ++k) {
    if (h.dim[k] < 1) {
      fail(Errc::kDimMismatch, source + ": dim[" + std::to_string(k) + "] must be >= 1");
    }
  }
  for (int k = h.dim[0] + 1; k < 8; ++k) h.dim[k] = 1;
  for (int k = 4; k <= h.dim[0]; ++k) {
    if (h.dim[k] != 1) {
      fail(Errc::kDimMismatch, source + ": only 3D volumes are supported (dim[" +
                                   std::to_string(k) + "] = " + std::to_string(h.dim[k]) + ")");
    }
  }
  const auto dt = load<std::int16_t>(b, off::datatype, swap);
  if (dt != 2 && dt != 4 && dt != 16) {
    fail(Errc::kUnsupportedDatatype,
         source + ": datatype code " + std::to_string(dt) +
             " at offset 70 is not one of uint8(2), int16(4), float32(16)");
  }
  h.datatype = static_cast<Datatype>(dt);
  h.vox_offset = load<float>(b, off::vox_offset, swap);
  h.scl_slope = load<float>(b, off::scl_slope, swap);
  h.scl_inter = load<float>(b, off::scl_inter, swap);
  h.xyzt_units = b[off::xyzt_units];
  h.qform_code = load<std::int16_t>(b, off::qform_code, swap);
  h.sform_code = load<std::int16_t>(b, off::sform_code, swap);
  h.quatern_b = load<float>(b, off::quatern_b, swap);
  h.quatern_c = load<float>(b, off::quatern_b + 4, swap);
  h.quatern_d = load<float>(b, off::quatern_b + 8, swap);
  h.qoffset_x = load<float>(b, off::quatern_b + 12, swap);
  h.qoffset_y = load<float>(b, off::quatern_b + 16, swap);
  h.qoffset_z = load<float>(b, off::quatern_b + 20, swap);
  for (int k = 0; k < 4; ++k) {
    h.srow_x[k] = load<float>(b, off::srow_x + 4 * k, swap);
    h.srow_y[k] = load<float>(b, off::srow_y + 4 * k, swap);
    h.srow_z[k] = load<float>(b, off::srow_z + 4 * k, swap);
  }
  const char* d = reinterpret_cast<const char*>(b + off::descrip);
  h.descrip.assign(d, strnlen(d, 80));

  if (!(h.vox_offset >= 352.0f)) {
    fail(Errc::kTruncatedPayload, source + ": vox_offset at offset 108 is below 352");
  }
  p.payload_offset = static_cast<std::size_t>(h.vox_offset);
  if (bytes.size() >= 352 && b[kHeaderSize] != 0) {
    std::size_t pos = 352;
    while (pos + 8 <= p.payload_offset && pos + 8 <= bytes.size()) {
      const auto esize = load<std::int32_t>(b, static_cast<int>(pos), swap);
      const auto ecode = load<std::int32_t>(b, static_cast<int>(pos + 4), swap);
      if (esize < 8 || esize % 16 != 0 || pos + static_cast<std::size_t>(esize) > p.payload_offset) break;
      if (ecode == kCommentEcode) {
        h.sform_f64 = parse_sform_extension(
            std::string_view(reinterpret_cast<const char*>(b + pos + 8), static_cast<std::size_t>(esize) - 8));
      }
      pos += static_cast<std::size_t>(esize);
    }
  }
  const std::size_t need =
      p.payload_offset + h.voxel_count() * static_cast<std::size_t>(bytes_per_voxel(h.datatype));
  if (bytes.size() < need) {
    fail(Errc::kTruncatedPayload, source + ": payload needs " + std::to_string(need) +
                                      " bytes from offset " + std::to_string(p.payload_offset) +
                                      ", file has " + std::to_string(bytes.size()));
  }
  return p;
}

// Decodes voxel `index` of the payload as double.
double decode(const std::uint8_t* payload, std::size_t index, Datatype dt, bool swap) {
  switch (dt) {
    case Datatype::kUint8: return payload[index];
    case Datatype::kInt16: return load<std::int16_t>(payload + index * 2, 0, swap);
    case Datatype::kFloat32: return load<float>(payload + index * 4, 0, swap);
  }
  return 0.0;
}

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
  static std::atomic<unsigned> counter{0};
  std::filesystem::path tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
  return tmp;
}

bool wants_gzip(const std::filesystem::path& path) {
  const std::string s = path.string();
  return s.size() >= 3 && s.compare(s.size() - 3, 3, ".gz") == 0;
}

void write_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  const auto tmp = temp_sibling(path);
  const char* mode = wants_gzip(path) ? "wb6" : "wb0T";
  gzFile f = gzopen(tmp.c_str(), mode);
  if (f == nullptr) fail(Errc::kIoFailure, "cannot create " + tmp.string());
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - done, 1u << 20));
    if (gzwrite(f, bytes.data() + done, chunk) != static_cast<int>(chunk)) {
      gzclose(f);
      std::filesystem::remove(tmp);
      fail(Errc::kIoFailure, "write failed for " + path.string());
    }
    done += chunk;
  }
  if (gzclose(f) != Z_OK) {
    std::filesystem::remove(tmp);
    fail(Errc::kIoFailure, "close failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    fail(Errc::kIoFailure, "rename to " + path.string() + " failed: " + ec.message());
  }
}

void check_dims(const Header& header, const Geometry& geometry) {
  if (header.spatial_dims() != geometry.dims || header.voxel_count() != geometry.voxel_count()) {
    fail(Errc::kDimMismatch, "header dims do not match volume dims");
  }
}

template <typename Int>
Int checked_integer(double value, const char* what) {
  const double r = std::nearbyint(value);
  if (r < static_cast<double>(std::numeric_limits<Int>::min()) ||
      r > static_cast<double>(std::numeric_limits<Int>::max())) {
    fail(Errc::kInvalidArgument, std::string("value out of range for ") + what);
  }
  return static_cast<Int>(r);
}

std::vector<std::uint8_t> encode_values(const std::vector<double>& values, Datatype dt) {
  std::vector<std::uint8_t> out(values.size() * static_cast<std::size_t>(bytes_per_voxel(dt)));
  for (std::size_t n = 0; n < values.size(); ++n) {
    switch (dt) {
      case Datatype::kUint8:
        out[n] = checked_integer<std::uint8_t>(values[n], "uint8");
        break;
      case Datatype::kInt16:
        store(out.data(), static_cast<int>(2 * n), checked_integer<std::int16_t>(values[n], "int16"));
        break;
      case Datatype::kFloat32:
        store(out.data(), static_cast<int>(4 * n), static_cast<float>(values[n]));
        break;
    }
  }
  return out;
}

// Rotation matrix (proper) to NIfTI quaternion (b, c, d) with a >= 0.
Eigen::Vector3d rotation_to_quaternion(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  return {q.x(), q.y(), q.z()};
}

}  // namespace

int bytes_per_voxel(Datatype dt) {
  switch (dt) {
    case Datatype::kUint8: return 1;
    case Datatype::kInt16: return 2;
    case Datatype::kFloat32: return 4;
  }
  return 0;
}

const char* datatype_name(Datatype dt) {
  switch (dt) {
    case Datatype::kUint8: return "uint8";
    case Datatype::kInt16: return "int16";
    case Datatype::kFloat32: return "float32";
  }
  return "unknown";
}

std::size_t Header::voxel_count() const {
  std::size_t n = 1;
  for (int k = 1; k <= dim[0]; ++k) n *= static_cast<std::size_t>(dim[k]);
  return n;
}

Mat4 Header::affine() const {
  Mat4 a = Mat4::Identity();
  if (sform_code > 0) {
    bool precise = sform_f64.has_value();
    for (int c = 0; c < 4; ++c) {
      a(0, c) = srow_x[c];
      a(1, c) = srow_y[c];
      a(2, c) = srow_z[c];
      if (precise) {
        const auto& f = *sform_f64;
        precise = static_cast<float>(f[c]) == srow_x[c] && static_cast<float>(f[4 + c]) == srow_y[c] &&
                  static_cast<float>(f[8 + c]) == srow_z[c];
      }
    }
    if (precise) {
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 4; ++c) a(r, c) = (*sform_f64)[4 * r + c];
      }
    }
    return a;
  }
  if (qform_code > 0) {
    const double b = quatern_b, c = quatern_c, d = quatern_d;
    double w = 1.0 - (b * b + c * c + d * d);
    double qa = w > 0.0 ? std::sqrt(w) : 0.0;
    double bb = b, cc = c, dd = d;
    if (w <= 0.0) {
      const double n = std::sqrt(b * b + c * c + d * d);
      bb /= n, cc /= n, dd /= n;
      qa = 0.0;
    }
    Mat3 r;
    r << qa * qa + bb * bb - cc * cc - dd * dd, 2 * (bb * cc - qa * dd), 2 * (bb * dd + qa * cc),
        2 * (bb * cc + qa * dd), qa * qa + cc * cc - bb * bb - dd * dd, 2 * (cc * dd - qa * bb),
        2 * (bb * dd - qa * cc), 2 * (cc * dd + qa * bb), qa * qa + dd * dd - cc * cc - bb * bb;
    const double qfac = pixdim[0] < 0 ? -1.0 : 1.0;
    const Vec3 scale(pixdim[1], pixdim[2], pixdim[3] * qfac);
    a.topLeftCorner<3, 3>() = r * scale.asDiagonal();
    a(0, 3) = qoffset_x;
    a(1, 3) = qoffset_y;
    a(2, 3) = qoffset_z;
    return a;
  }
  a(0, 0) = pixdim[1];
  a(1, 1) = pixdim[2];
  a(2, 2) = pixdim[3];
  return a;
}

Geometry Header::geometry() const {
  Geometry g = Geometry::from_affine(affine(), spatial_dims());
  if (std::abs(g.direction.determinant()) < 1e-12) {
    fail(Errc::kDegenerateSpacing, "header affine is singular");
  }
  return g;
}

Header Header::from_geometry(const Geometry& geometry, Datatype dt) {
  geometry.validate();
  Header h;
  h.dim = {3, static_cast<std::int16_t>(geometry.dims[0]), static_cast<std::int16_t>(geometry.dims[1]),
           static_cast<std::int16_t>(geometry.dims[2]), 1, 1, 1, 1};
  for (int a = 0; a < 3; ++a) {
    if (geometry.dims[a] > std::numeric_limits<std::int16_t>::max()) {
      fail(Errc::kDimMismatch, "dimension exceeds the NIfTI-1 int16 limit");
    }
  }
  h.datatype = dt;
  Mat3 r = geometry.direction;
  float qfac = 1.0f;
  if (r.determinant() < 0) {
    qfac = -1.0f;
    r.col(2) *= -1.0;
  }
  h.pixdim = {qfac, static_cast<float>(geometry.spacing[0]), static_cast<float>(geometry.spacing[1]),
              static_cast<float>(geometry.spacing[2]), 1, 1, 1, 1};
  const Vec3 q = rotation_to_quaternion(r);
  h.quatern_b = static_cast<float>(q[0]);
  h.quatern_c = static_cast<float>(q[1]);
  h.quatern_d = static_cast<float>(q[2]);
  h.qoffset_x = static_cast<float>(geometry.origin[0]);
  h.qoffset_y = static_cast<float>(geometry.origin[1]);
  h.qoffset_z = static_cast<float>(geometry.origin[2]);
  const Mat4 a = geometry.affine();
  std::array<double, 12> full{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) full[4 * r + c] = a(r, c);
  }
  h.sform_f64 = full;
  for (int c = 0; c < 4; ++c) {
    h.srow_x[c] = static_cast<float>(a(0, c));
    h.srow_y[c] = static_cast<float>(a(1, c));
    h.srow_z[c] = static_cast<float>(a(2, c));
  }
  h.qform_code = 2;
  h.sform_code = 2;
  return h;
}

std::vector<std::uint8_t> encode(const Header& header, const std::vector<std::uint8_t>& payload) {
  const std::size_t expected = header.voxel_count() * bytes_per_voxel(header.datatype);
  if (payload.size() != expected) {
    fail(Errc::kDimMismatch, "payload size " + std::to_string(payload.size()) +
                                 " does not match header (" + std::to_string(expected) + ")");
  }
  std::string extension;
  if (header.sform_f64) {
    extension = format_sform_extension(*header.sform_f64);
    extension.resize((extension.size() + 8 + 15) / 16 * 16 - 8, '\0');
  }
  const std::size_t esize = extension.empty() ? 0 : extension.size() + 8;
  const std::size_t vox_offset = kDefaultVoxOffset + esize;
  std::vector<std::uint8_t> out(vox_offset + payload.size(), 0);
  std::uint8_t* b = out.data();
  if (esize > 0) {
    b[kHeaderSize] = 1;
    store<std::int32_t>(b, kDefaultVoxOffset, static_cast<std::int32_t>(esize));
    store<std::int32_t>(b, kDefaultVoxOffset + 4, kCommentEcode);
    std::memcpy(b + kDefaultVoxOffset + 8, extension.data(), extension.size());
  }
  store<std::int32_t>(b, off::sizeof_hdr, kHeaderSize);
  for (int k = 0; k < 8; ++k) {
    store<std::int16_t>(b, off::dim + 2 * k, header.dim[k]);
    store<float>(b, off::pixdim + 4 * k, header.pixdim[k]);
  }
  store<std::int16_t>(b, off::datatype, static_cast<std::int16_t>(header.datatype));
  store<std::int16_t>(b, off::bitpix, static_cast<std::int16_t>(8 * bytes_per_voxel(header.datatype)));
  store<float>(b, off::vox_offset, static_cast<float>(vox_offset));
  store<float>(b, off::scl_slope, header.scl_slope);
  store<float>(b, off::scl_inter, header.scl_inter);
  b[off::xyzt_units] = header.xyzt_units;
  std::memcpy(b + off::descrip, header.descrip.data(), std::min<std::size_t>(header.descrip.size(), 79));
  store<std::int16_t>(b, off::qform_code, header.qform_code);
  store<std::int16_t>(b, off::sform_code, header.sform_code);
  const float quat[6] = {header.quatern_b, header.quatern_c, header.quatern_d,
                         header.qoffset_x, header.qoffset_y, header.qoffset_z};
  for (int k = 0; k < 6; ++k) store<float>(b, off::quatern_b + 4 * k, quat[k]);
  for (int k = 0; k < 4; ++k) {
    store<float>(b, off::srow_x + 4 * k, header.srow_x[k]);
    store<float>(b, off::srow_y + 4 * k, header.srow_y[k]);
    store<float>(b, off::srow_z + 4 * k, header.srow_z[k]);
  }
  std::memcpy(b + off::magic, "n+1\0", 4);
  std::copy(payload.begin(), payload.end(), out.begin() + static_cast<std::ptrdiff_t>(vox_offset));
  return out;
}

Header read_header(const std::filesystem::path& path) {
  return parse(slurp(path), path.string()).header;
}

std::vector<std::uint8_t> read_payload_bytes(const std::filesystem::path& path, Header* header_out) {
  const auto bytes = slurp(path);
  const Parsed p = parse(bytes, path.string());
  if (header_out != nullptr) *header_out = p.header;
  const std::size_t n = p.header.voxel_count() * bytes_per_voxel(p.header.datatype);
  return {bytes.begin() + static_cast<std::ptrdiff_t>(p.payload_offset),
          bytes.begin() + static_cast<std::ptrdiff_t>(p.payload_offset + n)};
}

Volume read_volume(const std::filesystem::path& path, Header* header_out, IntensitySpace space) {
  const auto bytes = slurp(path);
  const Parsed p = parse(bytes, path.string());
  const Header& h = p.header;
  const std::uint8_t* payload = bytes.data() + p.payload_offset;
  const double slope = h.scl_slope == 0.0f || !std::isfinite(h.scl_slope) ? 1.0 : h.scl_slope;
  const double inter = std::isfinite(h.scl_inter) ? h.scl_inter : 0.0;
  const bool scaled = slope != 1.0 || inter != 0.0;
  std::vector<float> data(h.voxel_count());
  for (std::size_t n = 0; n < data.size(); ++n) {
    const double raw = decode(payload, n, h.datatype, h.big_endian);
    data[n] = static_cast<float>(scaled ? raw * slope + inter : raw);
  }
  if (header_out != nullptr) *header_out = h;
  return Volume(h.geometry(), space, std::move(data));
}

LabelVolume read_labels(const std::filesystem::path& path, Header* header_out) {
  const auto bytes = slurp(path);
  const Parsed p = parse(bytes, path.string());
  const Header& h = p.header;
  const std::uint8_t* payload = bytes.data() + p.payload_offset;
  std::vector<std::int32_t> data(h.voxel_count());
  for (std::size_t n = 0; n < data.size(); ++n) {
    const double raw = decode(payload, n, h.datatype, h.big_endian);
    if (raw != std::floor(raw) || raw < 0) {
      fail(Errc::kUnsupportedDatatype,
           path.string() + ": label payload contains a non-integral or negative value");
    }
    data[n] = static_cast<std::int32_t>(raw);
  }
  if (header_out != nullptr) *header_out = h;
  return LabelVolume(h.geometry(), std::move(data));
}

void write_volume(const Header& header, const Volume& volume, const std::filesystem::path& path) {
  check_dims(header, volume.geometry());
  const double slope = header.scl_slope == 0.0f ? 1.0 : header.scl_slope;
  const double inter = header.scl_inter;
  std::vector<double> raw(volume.size());
  for (std::size_t n = 0; n < raw.size(); ++n) {
    const double v = volume.data()[n];
    raw[n] = (slope == 1.0 && inter == 0.0) ? v : (v - inter) / slope;
  }
  write_atomic(path, encode(header, encode_values(raw, header.datatype)));
}

void write_volume(const Volume& volume, const std::filesystem::path& path, Datatype dt) {
  write_volume(Header::from_geometry(volume.geometry(), dt), volume, path);
}

void write_labels(const Header& header, const LabelVolume& labels, const std::filesystem::path& path) {
  check_dims(header, labels.geometry());
  std::vector<double> raw(labels.data().begin(), labels.data().end());
  Header h = header;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  write_atomic(path, encode(h, encode_values(raw, h.datatype)));
}

void write_labels(const LabelVolume& labels, const std::filesystem::path& path, Datatype dt) {
  write_labels(Header::from_geometry(labels.geometry(), dt), labels, path);
}

}  // namespace mr2ct::nifti
