#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "gsdiff/rng.hpp"
#include "gsdiff/types.hpp"

namespace gsdiff::testutil {

// Random raw feature rows with a well-conditioned rotation block.
inline GaussianSet random_set(int n, Rng& rng, double span = 2.0) {
  GaussianSet s = GaussianSet::zeros(n);
  for (int i = 0; i < n; ++i) {
    float* f = s.row(i);
    for (int k = 0; k < 3; ++k) f[kPosOff + k] = static_cast<float>(rng.uniform(-span, span));
    for (int k = 0; k < 3; ++k) f[kLogScaleOff + k] = static_cast<float>(rng.uniform(-4.0, -1.0));
    for (int k = 0; k < 6; ++k) f[kRot6Off + k] = static_cast<float>(rng.uniform(-1.0, 1.0));
    f[kOpacityOff] = static_cast<float>(rng.uniform(-2.0, 2.0));
    for (int k = 0; k < 3; ++k) f[kColorOff + k] = static_cast<float>(rng.uniform(0.05, 0.95));
  }
  return s;
}

// Camera at distance `dist` on the -z axis looking at the origin, y down.
inline Camera simple_camera(int size = 32, double f = 40.0, double dist = 2.0) {
  Camera cam;
  cam.fx = cam.fy = f;
  cam.cx = cam.cy = size / 2.0;
  cam.width = cam.height = size;
  cam.rotation = Eigen::Matrix3d::Identity();
  cam.translation = Eigen::Vector3d(0, 0, dist);
  return cam;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("gsdiff_test_" + tag);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline double rel_err(double a, double b) {
  const double denom = std::max(std::abs(a), std::abs(b));
  return denom == 0.0 ? 0.0 : std::abs(a - b) / denom;
}

// Relative error with an absolute floor for near-zero pairs.
inline bool grad_close(double analytic, double fd, double rel_tol, double abs_tol = 1e-9) {
  if (std::abs(analytic - fd) <= abs_tol) return true;
  return rel_err(analytic, fd) <= rel_tol;
}

}  // namespace gsdiff::testutil
