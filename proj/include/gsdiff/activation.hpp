#pragma once

#include <optional>

#include "gsdiff/types.hpp"

namespace gsdiff {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Decode the continuous 6D rotation representation: normalize the first
// 3-vector, Gram-Schmidt the second against it, complete with a cross
// product. Throws DegenerateRotation if the first vector vanishes or the two
// are parallel (tolerance 1e-12).
Eigen::Matrix3d rotation6_to_matrix(const double r6[6]);

// Map one raw 16-channel feature row to render-space parameters.
// Per-axis std-dev is exp(log_scale) clamped to [kScaleMin, kScaleMax];
// cov3d = R diag(s^2) R^T; opacity = logistic(logit); color clamped to [0,1].
ActivatedGaussian activate_row(const double feat[kFeatureDim]);

// Spec-facing overload: activates ellipsoid `index` of a set. The index must
// be in range and the ellipsoid active.
ActivatedGaussian activate(const GaussianSet& set, int index);

// Non-throwing variant used by the renderer: degenerate rotations make the
// ellipsoid invisible instead of failing the whole render.
std::optional<ActivatedGaussian> try_activate_row(const double feat[kFeatureDim]);

// Positions of active ellipsoids whose activated opacity is >= threshold.
PointCloud extract_point_cloud(const GaussianSet& set, double opacity_threshold);
PointCloud extract_point_cloud(const FeatureSet& feats, double opacity_threshold);

}  // namespace gsdiff
