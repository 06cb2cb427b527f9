#include "gsdiff/activation.hpp"

namespace gsdiff {

Eigen::Matrix3d rotation6_to_matrix(const double r6[6]) {
  const Eigen::Vector3d a(r6[0], r6[1], r6[2]);
  const Eigen::Vector3d b(r6[3], r6[4], r6[5]);
  const double na = a.norm();
  if (na <= 1e-12) throw DegenerateRotation("first 3-vector has vanishing norm");
  const Eigen::Vector3d c1 = a / na;
  const Eigen::Vector3d u = b - c1.dot(b) * c1;
  const double nu = u.norm();
  if (nu <= 1e-12) throw DegenerateRotation("second 3-vector parallel to first");
  const Eigen::Vector3d c2 = u / nu;
  const Eigen::Vector3d c3 = c1.cross(c2);
  Eigen::Matrix3d r;
  r.col(0) = c1;
  r.col(1) = c2;
  r.col(2) = c3;
  return r;
}

ActivatedGaussian activate_row(const double feat[kFeatureDim]) {
  ActivatedGaussian g;
  g.position = Eigen::Vector3d(feat[kPosOff], feat[kPosOff + 1], feat[kPosOff + 2]);
  const Eigen::Matrix3d r = rotation6_to_matrix(feat + kRot6Off);
  Eigen::Vector3d s2;
  for (int k = 0; k < 3; ++k) {
    const double s = std::clamp(std::exp(feat[kLogScaleOff + k]), kScaleMin, kScaleMax);
    s2[k] = s * s;
  }
  g.cov3d = r * s2.asDiagonal() * r.transpose();
  g.opacity = logistic(feat[kOpacityOff]);
  for (int k = 0; k < 3; ++k) g.color[k] = std::clamp(feat[kColorOff + k], 0.0, 1.0);
  return g;
}

ActivatedGaussian activate(const GaussianSet& set, int index) {
  if (index < 0 || index >= set.count) throw Error("activate: index out of range");
  if (!set.active(index)) throw Error("activate: ellipsoid is masked");
  double feat[kFeatureDim];
  const float* src = set.row(index);
  for (int k = 0; k < kFeatureDim; ++k) feat[k] = static_cast<double>(src[k]);
  return activate_row(feat);
}

std::optional<ActivatedGaussian> try_activate_row(const double feat[kFeatureDim]) {
  try {
    return activate_row(feat);
  } catch (const DegenerateRotation&) {
    return std::nullopt;
  }
}

PointCloud extract_point_cloud(const GaussianSet& set, double opacity_threshold) {
  PointCloud pc;
  for (int i = 0; i < set.count; ++i) {
    if (!set.active(i)) continue;
    const float* f = set.row(i);
    if (logistic(static_cast<double>(f[kOpacityOff])) < opacity_threshold) continue;
    pc.points.emplace_back(f[kPosOff], f[kPosOff + 1], f[kPosOff + 2]);
  }
  return pc;
}

PointCloud extract_point_cloud(const FeatureSet& feats, double opacity_threshold) {
  PointCloud pc;
  for (int i = 0; i < feats.n; ++i) {
    const double* f = feats.row(i);
    if (logistic(f[kOpacityOff]) < opacity_threshold) continue;
    pc.points.emplace_back(f[kPosOff], f[kPosOff + 1], f[kPosOff + 2]);
  }
  return pc;
}

}  // namespace gsdiff
