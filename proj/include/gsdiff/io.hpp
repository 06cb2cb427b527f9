#pragma once

#include <string>

#include "gsdiff/types.hpp"

namespace gsdiff {

// Ellipsoid-set container: "GSET" magic, u32 version, u64 count,
// count*16 little-endian float32 features, count mask bytes.
void save_gaussians(const std::string& path, const GaussianSet& set);
GaussianSet load_gaussians(const std::string& path);

// Point cloud container: "GPTS" magic, u32 version, u64 count,
// count*3 little-endian float32 coordinates.
void save_point_cloud(const std::string& path, const PointCloud& pc);
PointCloud load_point_cloud(const std::string& path);

// Plain-text key-value camera record: fx fy cx cy width height,
// 9 row-major rotation entries, 3 translation entries.
void save_camera(const std::string& path, const Camera& cam);
Camera load_camera(const std::string& path);

// Normalization similarity: scale and center, text key-value.
void save_transform(const std::string& path, const NormalizationTransform& t);
NormalizationTransform load_transform(const std::string& path);

// 8-bit image io. PNG via libpng; PNM (binary P6/P5) for lossless tests.
// Values are quantized with round(v * 255) on write and v / 255 on read.
void save_png(const std::string& path, const ImageBuffer& im);
ImageBuffer load_png(const std::string& path);
void save_mask_png(const std::string& path, const std::vector<uint8_t>& mask, int width, int height);
std::vector<uint8_t> load_mask_png(const std::string& path, int* width, int* height);

void save_ppm(const std::string& path, const ImageBuffer& im);
ImageBuffer load_ppm(const std::string& path);
void save_pgm(const std::string& path, const std::vector<uint8_t>& mask, int width, int height);

}  // namespace gsdiff
