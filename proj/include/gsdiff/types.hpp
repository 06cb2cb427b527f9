#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gsdiff/errors.hpp"

namespace gsdiff {

// Per-ellipsoid raw feature layout, 16 channels:
//   [0..2]   position (world units)
//   [3..5]   log_scale (log of per-axis std-dev, world units)
//   [6..11]  rotation, continuous 6D representation (two un-normalized columns)
//   [12]     opacity logit
//   [13..15] color (raw RGB; clamped to [0,1] only at activation)
inline constexpr int kFeatureDim = 16;
inline constexpr int kPosOff = 0;
inline constexpr int kLogScaleOff = 3;
inline constexpr int kRot6Off = 6;
inline constexpr int kOpacityOff = 12;
inline constexpr int kColorOff = 13;

// Scale activation clamp, world units. exp(log_scale) is clamped into this
// range so noisy diffusion states cannot produce degenerate covariances.
inline constexpr double kScaleMin = 1e-4;
inline constexpr double kScaleMax = 1.0;

// Storage-precision ellipsoid set: the diffusion state as written to disk.
// Features are float32 (the serialized precision); computation promotes to
// double on use.
struct GaussianSet {
  int count = 0;
  std::vector<float> features;  // count * 16, row-major
  std::vector<uint8_t> mask;    // count entries, 1 = active, 0 = excluded outlier

  static GaussianSet zeros(int n) {
    GaussianSet s;
    s.count = n;
    s.features.assign(static_cast<size_t>(n) * kFeatureDim, 0.0f);
    s.mask.assign(static_cast<size_t>(n), 1);
    return s;
  }

  float* row(int i) { return features.data() + static_cast<size_t>(i) * kFeatureDim; }
  const float* row(int i) const { return features.data() + static_cast<size_t>(i) * kFeatureDim; }
  bool active(int i) const { return mask[static_cast<size_t>(i)] != 0; }

  int active_count() const {
    int n = 0;
    for (uint8_t m : mask) n += (m != 0);
    return n;
  }
};

// Double-precision feature array, n x 16: the in-memory diffusion state used
// by the sampler, guidance, and training.
struct FeatureSet {
  int n = 0;
  std::vector<double> data;  // n * 16, row-major

  static FeatureSet zeros(int n) {
    FeatureSet f;
    f.n = n;
    f.data.assign(static_cast<size_t>(n) * kFeatureDim, 0.0);
    return f;
  }

  double* row(int i) { return data.data() + static_cast<size_t>(i) * kFeatureDim; }
  const double* row(int i) const { return data.data() + static_cast<size_t>(i) * kFeatureDim; }
};

inline FeatureSet to_features(const GaussianSet& s) {
  FeatureSet f = FeatureSet::zeros(s.count);
  for (size_t i = 0; i < s.features.size(); ++i) f.data[i] = static_cast<double>(s.features[i]);
  return f;
}

inline GaussianSet to_gaussian_set(const FeatureSet& f, const std::vector<uint8_t>* mask = nullptr) {
  GaussianSet s = GaussianSet::zeros(f.n);
  for (size_t i = 0; i < f.data.size(); ++i) s.features[i] = static_cast<float>(f.data[i]);
  if (mask) s.mask = *mask;
  return s;
}

// Render-space parameters of one ellipsoid after activation.
struct ActivatedGaussian {
  Eigen::Vector3d position;
  Eigen::Matrix3d cov3d;    // symmetric positive definite
  double opacity = 0.0;     // in (0, 1)
  Eigen::Vector3d color;    // clamped to [0, 1]
};

// Pinhole camera with a world-to-camera rigid transform:
//   x_cam = rotation * x_world + translation, camera looks down +z.
struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  void validate() const {
    if (fx <= 0 || fy <= 0) throw FormatError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw FormatError("camera size must be positive");
    const Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
    if (err.cwiseAbs().maxCoeff() >= 1e-9) throw FormatError("camera rotation not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) >= 1e-9) throw FormatError("camera rotation not proper");
  }
};

// RGB image with an alpha channel (1 - final transmittance after
// compositing) and an optional boolean object mask.
struct ImageBuffer {
  int width = 0, height = 0;
  std::vector<double> rgb;    // height * width * 3, row-major, [0,1]
  std::vector<double> alpha;  // height * width, [0,1]
  std::vector<uint8_t> mask;  // empty, or height * width (1 = object)

  static ImageBuffer zeros(int w, int h) {
    ImageBuffer im;
    im.width = w;
    im.height = h;
    im.rgb.assign(static_cast<size_t>(w) * h * 3, 0.0);
    im.alpha.assign(static_cast<size_t>(w) * h, 0.0);
    return im;
  }

  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
  double* px(int x, int y) { return rgb.data() + 3 * (static_cast<size_t>(y) * width + x); }
  const double* px(int x, int y) const { return rgb.data() + 3 * (static_cast<size_t>(y) * width + x); }
  bool has_mask() const { return !mask.empty(); }
};

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
};

// Similarity transform stored with each scene: x_normalized = scale * (x_original - center).
struct NormalizationTransform {
  double scale = 1.0;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();

  Eigen::Vector3d to_normalized(const Eigen::Vector3d& x) const { return scale * (x - center); }
  Eigen::Vector3d to_original(const Eigen::Vector3d& x) const { return x / scale + center; }
};

}  // namespace gsdiff
