#include "gsdiff/io.hpp"

#include <png.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

namespace gsdiff {
namespace {

constexpr uint32_t kSetMagic = 0x54455347;    // "GSET"
constexpr uint32_t kCloudMagic = 0x53545047;  // "GPTS"
constexpr uint32_t kVersion = 1;

void write_bytes(std::ofstream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out) throw IoError("short write");
}

void read_bytes(std::ifstream& in, void* p, size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) throw FormatError(std::string("truncated ") + what);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  return in;
}

// Doubles are printed with max_digits10 so text round-trips are exact.
std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_gaussians(const std::string& path, const GaussianSet& set) {
  std::ofstream out = open_out(path);
  const uint64_t n = static_cast<uint64_t>(set.count);
  write_bytes(out, &kSetMagic, 4);
  write_bytes(out, &kVersion, 4);
  write_bytes(out, &n, 8);
  if (n > 0) {
    write_bytes(out, set.features.data(), set.features.size() * sizeof(float));
    write_bytes(out, set.mask.data(), set.mask.size());
  }
}

GaussianSet load_gaussians(const std::string& path) {
  std::ifstream in = open_in(path);
  uint32_t magic = 0, version = 0;
  uint64_t n = 0;
  read_bytes(in, &magic, 4, "header");
  read_bytes(in, &version, 4, "header");
  read_bytes(in, &n, 8, "header");
  if (magic != kSetMagic) throw FormatError("bad magic in " + path);
  if (version != kVersion) throw FormatError("unsupported version in " + path);
  if (n > (1ull << 32)) throw FormatError("implausible count in " + path);
  GaussianSet set;
  set.count = static_cast<int>(n);
  set.features.resize(static_cast<size_t>(n) * kFeatureDim);
  set.mask.resize(static_cast<size_t>(n));
  if (n > 0) {
    read_bytes(in, set.features.data(), set.features.size() * sizeof(float), "feature block");
    read_bytes(in, set.mask.data(), set.mask.size(), "mask block");
  }
  return set;
}

void save_point_cloud(const std::string& path, const PointCloud& pc) {
  std::ofstream out = open_out(path);
  const uint64_t n = pc.points.size();
  write_bytes(out, &kCloudMagic, 4);
  write_bytes(out, &kVersion, 4);
  write_bytes(out, &n, 8);
  for (const auto& p : pc.points) {
    const float xyz[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                          static_cast<float>(p.z())};
    write_bytes(out, xyz, sizeof xyz);
  }
}

PointCloud load_point_cloud(const std::string& path) {
  std::ifstream in = open_in(path);
  uint32_t magic = 0, version = 0;
  uint64_t n = 0;
  read_bytes(in, &magic, 4, "header");
  read_bytes(in, &version, 4, "header");
  read_bytes(in, &n, 8, "header");
  if (magic != kCloudMagic) throw FormatError("bad magic in " + path);
  if (version != kVersion) throw FormatError("unsupported version in " + path);
  if (n > (1ull << 32)) throw FormatError("implausible count in " + path);
  PointCloud pc;
  pc.points.reserve(n);
  for (uint64_t i = 0; i < n; ++i) {
    float xyz[3];
    read_bytes(in, xyz, sizeof xyz, "point block");
    pc.points.emplace_back(xyz[0], xyz[1], xyz[2]);
  }
  return pc;
}

void save_camera(const std::string& path, const Camera& cam) {
  std::ofstream out = open_out(path);
  out << "fx " << fmt_double(cam.fx) << "\n";
  out << "fy " << fmt_double(cam.fy) << "\n";
  out << "cx " << fmt_double(cam.cx) << "\n";
  out << "cy " << fmt_double(cam.cy) << "\n";
  out << "width " << cam.width << "\n";
  out << "height " << cam.height << "\n";
  out << "rotation";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out << " " << fmt_double(cam.rotation(r, c));
  out << "\n";
  out << "translation";
  for (int k = 0; k < 3; ++k) out << " " << fmt_double(cam.translation[k]);
  out << "\n";
  if (!out) throw IoError("short write: " + path);
}

Camera load_camera(const std::string& path) {
  std::ifstream in = open_in(path);
  Camera cam;
  std::string key;
  bool have_rot = false, have_trans = false;
  while (in >> key) {
    if (key == "fx") in >> cam.fx;
    else if (key == "fy") in >> cam.fy;
    else if (key == "cx") in >> cam.cx;
    else if (key == "cy") in >> cam.cy;
    else if (key == "width") in >> cam.width;
    else if (key == "height") in >> cam.height;
    else if (key == "rotation") {
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) in >> cam.rotation(r, c);
      have_rot = true;
    } else if (key == "translation") {
      for (int k = 0; k < 3; ++k) in >> cam.translation[k];
      have_trans = true;
    } else {
      throw FormatError("unknown camera key '" + key + "' in " + path);
    }
    if (in.fail()) throw FormatError("bad value for camera key '" + key + "' in " + path);
  }
  if (!have_rot || !have_trans) throw FormatError("incomplete camera record in " + path);
  cam.validate();
  return cam;
}

void save_transform(const std::string& path, const NormalizationTransform& t) {
  std::ofstream out = open_out(path);
  out << "scale " << fmt_double(t.scale) << "\n";
  out << "center " << fmt_double(t.center.x()) << " " << fmt_double(t.center.y()) << " "
      << fmt_double(t.center.z()) << "\n";
  if (!out) throw IoError("short write: " + path);
}

NormalizationTransform load_transform(const std::string& path) {
  std::ifstream in = open_in(path);
  NormalizationTransform t;
  std::string key;
  while (in >> key) {
    if (key == "scale") in >> t.scale;
    else if (key == "center") in >> t.center.x() >> t.center.y() >> t.center.z();
    else throw FormatError("unknown transform key '" + key + "' in " + path);
    if (in.fail()) throw FormatError("bad value in " + path);
  }
  return t;
}

namespace {

uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint8_t>(std::lround(c * 255.0));
}

struct PngWriter {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngReader {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

void write_png_bytes(const std::string& path, const std::vector<uint8_t>& bytes, int width,
                     int height, int channels) {
  PngWriter w;
  w.fp = std::fopen(path.c_str(), "wb");
  if (!w.fp) throw IoError("cannot open for writing: " + path);
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) throw IoError("png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw IoError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(w.png))) throw IoError("libpng write error: " + path);
  png_init_io(w.png, w.fp);
  const int color = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  std::vector<png_bytep> rows(static_cast<size_t>(height));
  for (int y = 0; y < height; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(bytes.data() + static_cast<size_t>(y) * width * channels);
  png_write_image(w.png, rows.data());
  png_write_end(w.png, nullptr);
}

std::vector<uint8_t> read_png_bytes(const std::string& path, int* width, int* height,
                                    int want_channels) {
  PngReader r;
  r.fp = std::fopen(path.c_str(), "rb");
  if (!r.fp) throw IoError("cannot open: " + path);
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) throw IoError("png_create_read_struct failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw IoError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(r.png))) throw FormatError("libpng read error: " + path);
  png_init_io(r.png, r.fp);
  png_read_info(r.png, r.info);
  png_set_expand(r.png);
  png_set_strip_16(r.png);
  png_set_strip_alpha(r.png);
  if (want_channels == 3) png_set_gray_to_rgb(r.png);
  else png_set_rgb_to_gray_fixed(r.png, 1, -1, -1);
  png_read_update_info(r.png, r.info);
  *width = static_cast<int>(png_get_image_width(r.png, r.info));
  *height = static_cast<int>(png_get_image_height(r.png, r.info));
  const size_t rowbytes = png_get_rowbytes(r.png, r.info);
  if (rowbytes != static_cast<size_t>(*width) * want_channels)
    throw FormatError("unexpected row size in " + path);
  std::vector<uint8_t> bytes(static_cast<size_t>(*height) * rowbytes);
  std::vector<png_bytep> rows(static_cast<size_t>(*height));
  for (int y = 0; y < *height; ++y)
    rows[static_cast<size_t>(y)] = bytes.data() + static_cast<size_t>(y) * rowbytes;
  png_read_image(r.png, rows.data());
  return bytes;
}

}  // namespace

void save_png(const std::string& path, const ImageBuffer& im) {
  std::vector<uint8_t> bytes(im.pixel_count() * 3);
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(im.rgb[i]);
  write_png_bytes(path, bytes, im.width, im.height, 3);
}

ImageBuffer load_png(const std::string& path) {
  int w = 0, h = 0;
  const std::vector<uint8_t> bytes = read_png_bytes(path, &w, &h, 3);
  ImageBuffer im = ImageBuffer::zeros(w, h);
  for (size_t i = 0; i < bytes.size(); ++i) im.rgb[i] = bytes[i] / 255.0;
  return im;
}

void save_mask_png(const std::string& path, const std::vector<uint8_t>& mask, int width,
                   int height) {
  if (mask.size() != static_cast<size_t>(width) * height) throw ShapeMismatch("mask size");
  std::vector<uint8_t> bytes(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] ? 255 : 0;
  write_png_bytes(path, bytes, width, height, 1);
}

std::vector<uint8_t> load_mask_png(const std::string& path, int* width, int* height) {
  const std::vector<uint8_t> bytes = read_png_bytes(path, width, height, 1);
  std::vector<uint8_t> mask(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) mask[i] = bytes[i] >= 128 ? 1 : 0;
  return mask;
}

void save_ppm(const std::string& path, const ImageBuffer& im) {
  std::ofstream out = open_out(path);
  out << "P6\n" << im.width << " " << im.height << "\n255\n";
  std::vector<uint8_t> bytes(im.pixel_count() * 3);
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(im.rgb[i]);
  write_bytes(out, bytes.data(), bytes.size());
}

ImageBuffer load_ppm(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
    throw FormatError("unsupported ppm header in " + path);
  in.get();  // single whitespace after maxval
  std::vector<uint8_t> bytes(static_cast<size_t>(w) * h * 3);
  read_bytes(in, bytes.data(), bytes.size(), "ppm payload");
  ImageBuffer im = ImageBuffer::zeros(w, h);
  for (size_t i = 0; i < bytes.size(); ++i) im.rgb[i] = bytes[i] / 255.0;
  return im;
}

void save_pgm(const std::string& path, const std::vector<uint8_t>& mask, int width, int height) {
  if (mask.size() != static_cast<size_t>(width) * height) throw ShapeMismatch("mask size");
  std::ofstream out = open_out(path);
  out << "P5\n" << width << " " << height << "\n255\n";
  std::vector<uint8_t> bytes(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] ? 255 : 0;
  write_bytes(out, bytes.data(), bytes.size());
}

}  // namespace gsdiff
