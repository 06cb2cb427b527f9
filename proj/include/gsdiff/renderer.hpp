#pragma once

#include <optional>
#include <vector>

#include "gsdiff/activation.hpp"
#include "gsdiff/types.hpp"

namespace gsdiff::splat {

inline constexpr int kTileSize = 16;
inline constexpr double kNearDefault = 0.01;
inline constexpr double kCovFloor = 0.3;       // screen-space low-pass, pixels^2
inline constexpr double kSigmaClamp = 0.99;
inline constexpr double kSigmaMin = 1.0 / 255.0;
inline constexpr double kTransmittanceStop = 1e-4;

struct ProjectedGaussian {
  Eigen::Vector2d mean2d;          // pixels
  Eigen::Matrix2d cov2d;           // pixels^2, includes the +0.3 I floor
  Eigen::Matrix2d conic;           // inverse of cov2d
  double depth = 0.0;              // camera-space z
  Eigen::Vector3d color;
  double opacity = 0.0;
  double radius = 0.0;             // 3 * sqrt(max eigenvalue), pixels
  int source_index = -1;
};

// One alpha-blending term of the per-pixel composition sum, in blend order.
struct BlendRecord {
  int32_t source_index;
  double sigma;      // clamped opacity contribution, [1/255, 0.99]
  double t_before;   // transmittance before this term
};

struct RenderStats {
  int64_t sigma_skips = 0;   // terms dropped because sigma < 1/255
  int64_t early_outs = 0;    // pixels that stopped early on transmittance
  int64_t sigma_clamps = 0;  // terms clamped at 0.99
  bool any_threshold_hit() const { return sigma_skips || early_outs || sigma_clamps; }
};

struct RenderOutput {
  ImageBuffer image;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  std::vector<double> transmittance;      // per pixel, final T
  std::vector<uint32_t> record_offsets;   // pixel-major CSR, size h*w+1
  std::vector<BlendRecord> records;
  RenderStats stats;
  int blended_count = 0;                  // projected (non-culled) ellipsoids
};

// EWA projection of one activated ellipsoid. Returns nullopt when culled
// (behind the near plane, or the 3-sigma screen extent misses the viewport).
std::optional<ProjectedGaussian> project(const ActivatedGaussian& g, const Camera& cam,
                                         double near = kNearDefault);

// Tile-based forward pass. Blends projected ellipsoids per pixel in
// ascending depth order (source index breaks ties); records every blended
// term so the backward pass can replay the composition. Tiles run in
// parallel; the result is bit-identical for any thread count.
RenderOutput render(const FeatureSet& feats, const std::vector<uint8_t>& mask, const Camera& cam,
                    const Eigen::Vector3d& background);
RenderOutput render(const GaussianSet& set, const Camera& cam, const Eigen::Vector3d& background);

// Serial reference renderer: same math, but every projected ellipsoid is
// evaluated at every pixel with no sigma skip and no transmittance early-out.
// Kept as the oracle for the tiled path.
ImageBuffer render_brute_force(const FeatureSet& feats, const std::vector<uint8_t>& mask,
                               const Camera& cam, const Eigen::Vector3d& background);
ImageBuffer render_brute_force(const GaussianSet& set, const Camera& cam,
                               const Eigen::Vector3d& background);

struct BackwardResult {
  FeatureSet grads;                      // d loss / d raw features, n x 16
  std::vector<double> screen_grad_norm;  // per ellipsoid, |d loss / d mean2d|
};

// Analytic backward pass from image-space gradients to all 16 raw channels,
// exact through blending, projection (including the EWA Jacobian) and the
// activations.
// grad_rgb is h*w*3; grad_alpha (optional) is h*w and feeds the alpha output
// (1 - final transmittance). Ellipsoids are processed in parallel, each
// accumulating its pixels in pixel-major order, so results do not depend on
// the thread count.
BackwardResult render_backward(const RenderOutput& out, const FeatureSet& feats,
                               const std::vector<uint8_t>& mask, const Camera& cam,
                               const std::vector<double>& grad_rgb,
                               const std::vector<double>* grad_alpha = nullptr);

}  // namespace gsdiff::splat
