#include "anisosr/nifti_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <vector>

namespace anisosr {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kDataOffset = 352;

enum Datatype : std::int16_t {
  kUInt8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUInt16 = 512,
  kUInt32 = 768,
};

template <typename T>
T read_field(const unsigned char* hdr, int offset, bool swap) {
  T v;
  std::memcpy(&v, hdr + offset, sizeof(T));
  if (swap) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

template <typename T>
void write_field(unsigned char* hdr, int offset, T v) {
  std::memcpy(hdr + offset, &v, sizeof(T));
}

bool is_gz(const std::filesystem::path& path) { return path.extension() == ".gz"; }

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("missing file: " + path.string());
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw IoError("cannot open: " + path.string());
  std::vector<unsigned char> bytes;
  std::array<unsigned char, 1 << 16> buf{};
  for (;;) {
    const int n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
    if (n < 0) {
      gzclose(f);
      throw IoError("read error: " + path.string());
    }
    if (n == 0) break;
    bytes.insert(bytes.end(), buf.begin(), buf.begin() + n);
  }
  gzclose(f);
  return bytes;
}

void write_all(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  const auto parent = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  if (!std::filesystem::is_directory(parent)) throw IoError("parent directory does not exist: " + parent.string());
  gzFile f = gzopen(path.c_str(), is_gz(path) ? "wb6" : "wbT");
  if (f == nullptr) throw IoError("cannot write: " + path.string());
  const int n = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
  const int rc = gzclose(f);
  if (n != static_cast<int>(bytes.size()) || rc != Z_OK) throw IoError("write failed: " + path.string());
}

struct Parsed {
  Shape3 shape;
  Spacing3 spacing;
  std::vector<double> data;
  std::string description;
};

Parsed parse(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < kHeaderSize) throw IoError("invalid NIfTI header (file too short): " + path.string());
  const unsigned char* hdr = bytes.data();

  bool swap = false;
  const auto sizeof_hdr = read_field<std::int32_t>(hdr, 0, false);
  if (sizeof_hdr != kHeaderSize) {
    if (read_field<std::int32_t>(hdr, 0, true) != kHeaderSize) {
      throw IoError("invalid NIfTI header (sizeof_hdr): " + path.string());
    }
    swap = true;
  }
  if (std::memcmp(hdr + 344, "n+1", 3) != 0) throw IoError("invalid NIfTI header (magic): " + path.string());

  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[i] = read_field<std::int16_t>(hdr, 40 + 2 * i, swap);
  if (dim[0] < 1 || dim[0] > 7) throw IoError("invalid NIfTI header (dim[0]): " + path.string());
  if (dim[0] < 3) throw ValidationError("non-3-D payload");
  for (int i = 4; i <= dim[0]; ++i) {
    if (dim[i] > 1) throw ValidationError("non-3-D payload");
  }
  for (int i = 1; i <= 3; ++i) {
    if (dim[i] < 1) throw IoError("invalid NIfTI header (dim): " + path.string());
  }

  Parsed p;
  p.shape = Shape3{static_cast<std::size_t>(dim[1]), static_cast<std::size_t>(dim[2]),
                   static_cast<std::size_t>(dim[3])};
  for (int i = 0; i < 3; ++i) {
    const float px = read_field<float>(hdr, 76 + 4 * (i + 1), swap);
    p.spacing[i] = px > 0.0f ? static_cast<double>(px) : 1.0;
  }

  const auto datatype = read_field<std::int16_t>(hdr, 70, swap);
  const auto vox_offset = static_cast<std::size_t>(read_field<float>(hdr, 108, swap));
  float slope = read_field<float>(hdr, 112, swap);
  const float inter = read_field<float>(hdr, 116, swap);
  const bool scaled = slope != 0.0f && !(slope == 1.0f && inter == 0.0f);

  char descrip[81] = {};
  std::memcpy(descrip, hdr + 148, 80);
  p.description = descrip;

  std::size_t bytes_per = 0;
  switch (datatype) {
    case kUInt8:
    case kInt8:
      bytes_per = 1;
      break;
    case kInt16:
    case kUInt16:
      bytes_per = 2;
      break;
    case kInt32:
    case kUInt32:
    case kFloat32:
      bytes_per = 4;
      break;
    case kFloat64:
      bytes_per = 8;
      break;
    default:
      throw IoError("unsupported NIfTI datatype " + std::to_string(datatype) + ": " + path.string());
  }

  const std::size_t n = p.shape.voxels();
  const std::size_t start = std::max<std::size_t>(vox_offset, kDataOffset);
  if (bytes.size() < start + n * bytes_per) throw IoError("truncated NIfTI payload: " + path.string());

  // NIfTI is Fortran-ordered (x fastest); our arrays are (h, w, d) with d fastest.
  p.data.resize(n);
  const unsigned char* src = bytes.data() + start;
  auto value_at = [&](std::size_t idx) -> double {
    const unsigned char* q = src + idx * bytes_per;
    switch (datatype) {
      case kUInt8:
        return *q;
      case kInt8:
        return static_cast<std::int8_t>(*q);
      case kInt16:
        return read_field<std::int16_t>(q, 0, swap);
      case kUInt16:
        return read_field<std::uint16_t>(q, 0, swap);
      case kInt32:
        return read_field<std::int32_t>(q, 0, swap);
      case kUInt32:
        return read_field<std::uint32_t>(q, 0, swap);
      case kFloat32:
        return read_field<float>(q, 0, swap);
      default:
        return read_field<double>(q, 0, swap);
    }
  };
  const Shape3& s = p.shape;
  for (std::size_t k = 0; k < s.d; ++k) {
    for (std::size_t j = 0; j < s.w; ++j) {
      for (std::size_t i = 0; i < s.h; ++i) {
        double v = value_at(i + s.h * (j + s.w * k));
        if (scaled) v = v * slope + inter;
        p.data[s.linear(i, j, k)] = v;
      }
    }
  }
  return p;
}

std::vector<unsigned char> make_header(const Shape3& s, const Spacing3& spacing, std::int16_t datatype,
                                       std::int16_t bitpix, std::string_view description) {
  for (int a = 0; a < 3; ++a) {
    if (s[a] > 32767) throw ValidationError("dimension too large for NIfTI-1");
  }
  std::vector<unsigned char> hdr(kDataOffset, 0);
  unsigned char* h = hdr.data();
  write_field<std::int32_t>(h, 0, kHeaderSize);
  h[38] = 'r';  // regular
  const std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(s.h), static_cast<std::int16_t>(s.w),
                                        static_cast<std::int16_t>(s.d), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) write_field<std::int16_t>(h, 40 + 2 * i, dim[i]);
  write_field<std::int16_t>(h, 70, datatype);
  write_field<std::int16_t>(h, 72, bitpix);
  const std::array<float, 8> pixdim{1.0f, static_cast<float>(spacing[0]), static_cast<float>(spacing[1]),
                                    static_cast<float>(spacing[2]), 1.0f, 1.0f, 1.0f, 1.0f};
  for (int i = 0; i < 8; ++i) write_field<float>(h, 76 + 4 * i, pixdim[i]);
  write_field<float>(h, 108, static_cast<float>(kDataOffset));
  write_field<float>(h, 112, 1.0f);
  write_field<float>(h, 116, 0.0f);
  h[123] = 10;  // xyzt_units: mm + sec
  const std::size_t n = std::min<std::size_t>(description.size(), 79);
  std::memcpy(h + 148, description.data(), n);
  // sform = scaled identity so viewers place the voxels sensibly.
  write_field<std::int16_t>(h, 252, 0);
  write_field<std::int16_t>(h, 254, 2);
  write_field<float>(h, 280, static_cast<float>(spacing[0]));
  write_field<float>(h, 280 + 16 + 4, static_cast<float>(spacing[1]));
  write_field<float>(h, 280 + 32 + 8, static_cast<float>(spacing[2]));
  std::memcpy(h + 344, "n+1", 4);
  return hdr;
}

template <typename T, typename Get>
void append_payload(std::vector<unsigned char>& out, const Shape3& s, Get get) {
  const std::size_t base = out.size();
  out.resize(base + s.voxels() * sizeof(T));
  unsigned char* dst = out.data() + base;
  for (std::size_t k = 0; k < s.d; ++k) {
    for (std::size_t j = 0; j < s.w; ++j) {
      for (std::size_t i = 0; i < s.h; ++i) {
        const T v = get(s.linear(i, j, k));
        std::memcpy(dst, &v, sizeof(T));
        dst += sizeof(T);
      }
    }
  }
}

}  // namespace

Volume load_volume(const std::filesystem::path& path) {
  auto p = parse(path);
  return Volume(p.shape, p.spacing, std::move(p.data));
}

void save_volume(const Volume& v, const std::filesystem::path& path, std::string_view description) {
  static_assert(std::endian::native == std::endian::little, "writer assumes a little-endian host");
  auto bytes = make_header(v.shape(), v.spacing(), kFloat64, 64, description);
  const auto data = v.data();
  append_payload<double>(bytes, v.shape(), [&](std::size_t idx) { return data[idx]; });
  write_all(path, bytes);
}

void save_mask(const Mask& m, const Spacing3& spacing, const std::filesystem::path& path,
               std::string_view description) {
  auto bytes = make_header(m.shape(), spacing, kUInt8, 8, description);
  append_payload<std::uint8_t>(bytes, m.shape(), [&](std::size_t idx) { return std::uint8_t{m.at(idx)}; });
  write_all(path, bytes);
}

Mask load_mask(const std::filesystem::path& path) {
  const auto p = parse(path);
  Mask m(p.shape);
  for (std::size_t n = 0; n < p.data.size(); ++n) m.set(n, p.data[n] != 0.0);
  return m;
}

std::string read_description(const std::filesystem::path& path) { return parse(path).description; }

}  // namespace anisosr
