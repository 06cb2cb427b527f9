#include "gsdiff/renderer.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gsdiff::splat {
namespace {

Eigen::Matrix2d invert_2x2(const Eigen::Matrix2d& m) {
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  Eigen::Matrix2d inv;
  inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  return inv / det;
}

struct PreparedScene {
  std::vector<ProjectedGaussian> sorted;  // ascending (depth, source_index)
};

PreparedScene prepare(const FeatureSet& feats, const std::vector<uint8_t>& mask,
                      const Camera& cam) {
  PreparedScene scene;
  scene.sorted.reserve(static_cast<size_t>(feats.n));
  for (int i = 0; i < feats.n; ++i) {
    if (!mask.empty() && mask[static_cast<size_t>(i)] == 0) continue;
    const auto g = try_activate_row(feats.row(i));
    if (!g) continue;
    auto proj = project(*g, cam);
    if (!proj) continue;
    proj->source_index = i;
    scene.sorted.push_back(*proj);
  }
  std::sort(scene.sorted.begin(), scene.sorted.end(),
            [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
              if (a.depth != b.depth) return a.depth < b.depth;
              return a.source_index < b.source_index;
            });
  return scene;
}

inline double gaussian_power(const ProjectedGaussian& p, double px, double py) {
  const double dx = px - p.mean2d.x();
  const double dy = py - p.mean2d.y();
  return -0.5 * (p.conic(0, 0) * dx * dx + 2.0 * p.conic(0, 1) * dx * dy +
                 p.conic(1, 1) * dy * dy);
}

}  // namespace

std::optional<ProjectedGaussian> project(const ActivatedGaussian& g, const Camera& cam,
                                         double near) {
  const Eigen::Vector3d t = cam.rotation * g.position + cam.translation;
  if (t.z() <= near) return std::nullopt;

  ProjectedGaussian p;
  p.depth = t.z();
  const double inv_z = 1.0 / t.z();
  p.mean2d = Eigen::Vector2d(cam.fx * t.x() * inv_z + cam.cx, cam.fy * t.y() * inv_z + cam.cy);

  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx * inv_z, 0.0, -cam.fx * t.x() * inv_z * inv_z,
         0.0, cam.fy * inv_z, -cam.fy * t.y() * inv_z * inv_z;
  const Eigen::Matrix3d cov_cam = cam.rotation * g.cov3d * cam.rotation.transpose();
  p.cov2d = jac * cov_cam * jac.transpose();
  p.cov2d(0, 0) += kCovFloor;
  p.cov2d(1, 1) += kCovFloor;
  p.conic = invert_2x2(p.cov2d);

  const double mid = 0.5 * (p.cov2d(0, 0) + p.cov2d(1, 1));
  const double disc = std::sqrt(std::max(
      0.0, 0.25 * (p.cov2d(0, 0) - p.cov2d(1, 1)) * (p.cov2d(0, 0) - p.cov2d(1, 1)) +
               p.cov2d(0, 1) * p.cov2d(0, 1)));
  p.radius = 3.0 * std::sqrt(mid + disc);

  if (p.mean2d.x() + p.radius < 0.0 || p.mean2d.x() - p.radius > cam.width ||
      p.mean2d.y() + p.radius < 0.0 || p.mean2d.y() - p.radius > cam.height)
    return std::nullopt;

  p.color = g.color;
  p.opacity = g.opacity;
  return p;
}

RenderOutput render(const FeatureSet& feats, const std::vector<uint8_t>& mask, const Camera& cam,
                    const Eigen::Vector3d& background) {
  const int w = cam.width, h = cam.height;
  RenderOutput out;
  out.image = ImageBuffer::zeros(w, h);
  out.background = background;
  out.transmittance.assign(static_cast<size_t>(w) * h, 1.0);
  out.record_offsets.assign(static_cast<size_t>(w) * h + 1, 0);

  const PreparedScene scene = prepare(feats, mask, cam);
  out.blended_count = static_cast<int>(scene.sorted.size());

  const int tiles_x = (w + kTileSize - 1) / kTileSize;
  const int tiles_y = (h + kTileSize - 1) / kTileSize;
  const int num_tiles = tiles_x * tiles_y;

  // Bin in sorted order so per-tile lists stay depth-ordered.
  std::vector<std::vector<int>> tile_bins(static_cast<size_t>(num_tiles));
  for (int s = 0; s < static_cast<int>(scene.sorted.size()); ++s) {
    const ProjectedGaussian& p = scene.sorted[static_cast<size_t>(s)];
    const int tx0 = std::max(0, static_cast<int>(std::floor((p.mean2d.x() - p.radius) / kTileSize)));
    const int tx1 = std::min(tiles_x - 1,
                             static_cast<int>(std::floor((p.mean2d.x() + p.radius) / kTileSize)));
    const int ty0 = std::max(0, static_cast<int>(std::floor((p.mean2d.y() - p.radius) / kTileSize)));
    const int ty1 = std::min(tiles_y - 1,
                             static_cast<int>(std::floor((p.mean2d.y() + p.radius) / kTileSize)));
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        tile_bins[static_cast<size_t>(ty) * tiles_x + tx].push_back(s);
  }

  struct TileResult {
    std::vector<BlendRecord> records;    // pixel-major within the tile
    std::vector<uint32_t> pixel_counts;  // per pixel of the tile
    RenderStats stats;
  };
  std::vector<TileResult> tile_results(static_cast<size_t>(num_tiles));

#pragma omp parallel for schedule(dynamic)
  for (int tile = 0; tile < num_tiles; ++tile) {
    const int tx = tile % tiles_x, ty = tile / tiles_x;
    const int x0 = tx * kTileSize, y0 = ty * kTileSize;
    const int x1 = std::min(w, x0 + kTileSize), y1 = std::min(h, y0 + kTileSize);
    const std::vector<int>& bin = tile_bins[static_cast<size_t>(tile)];
    TileResult& res = tile_results[static_cast<size_t>(tile)];
    res.pixel_counts.assign(static_cast<size_t>(x1 - x0) * (y1 - y0), 0);

    size_t local_pixel = 0;
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x, ++local_pixel) {
        const double px = x + 0.5, py = y + 0.5;
        double t = 1.0;
        Eigen::Vector3d c = Eigen::Vector3d::Zero();
        uint32_t count = 0;
        for (int s : bin) {
          const ProjectedGaussian& p = scene.sorted[static_cast<size_t>(s)];
          const double g = std::exp(gaussian_power(p, px, py));
          double sigma = p.opacity * g;
          if (sigma > kSigmaClamp) {
            sigma = kSigmaClamp;
            ++res.stats.sigma_clamps;
          }
          if (sigma < kSigmaMin) {
            ++res.stats.sigma_skips;
            continue;
          }
          res.records.push_back(BlendRecord{p.source_index, sigma, t});
          ++count;
          c += p.color * (sigma * t);
          t *= 1.0 - sigma;
          if (t < kTransmittanceStop) {
            ++res.stats.early_outs;
            break;
          }
        }
        c += background * t;
        const size_t pix = static_cast<size_t>(y) * w + x;
        double* dst = out.image.rgb.data() + 3 * pix;
        for (int k = 0; k < 3; ++k) dst[k] = std::clamp(c[k], 0.0, 1.0);
        out.image.alpha[pix] = 1.0 - t;
        out.transmittance[pix] = t;
        res.pixel_counts[local_pixel] = count;
      }
    }
  }

  // Stitch tile records into a global pixel-major CSR layout.
  for (int tile = 0; tile < num_tiles; ++tile) {
    const int tx = tile % tiles_x, ty = tile / tiles_x;
    const int x0 = tx * kTileSize, y0 = ty * kTileSize;
    const int x1 = std::min(w, x0 + kTileSize), y1 = std::min(h, y0 + kTileSize);
    const TileResult& res = tile_results[static_cast<size_t>(tile)];
    size_t local_pixel = 0;
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x, ++local_pixel)
        out.record_offsets[static_cast<size_t>(y) * w + x + 1] = res.pixel_counts[local_pixel];
    out.stats.sigma_skips += res.stats.sigma_skips;
    out.stats.early_outs += res.stats.early_outs;
    out.stats.sigma_clamps += res.stats.sigma_clamps;
  }
  for (size_t i = 1; i < out.record_offsets.size(); ++i)
    out.record_offsets[i] += out.record_offsets[i - 1];
  out.records.resize(out.record_offsets.back());

#pragma omp parallel for schedule(dynamic)
  for (int tile = 0; tile < num_tiles; ++tile) {
    const int tx = tile % tiles_x, ty = tile / tiles_x;
    const int x0 = tx * kTileSize, y0 = ty * kTileSize;
    const int x1 = std::min(w, x0 + kTileSize), y1 = std::min(h, y0 + kTileSize);
    const TileResult& res = tile_results[static_cast<size_t>(tile)];
    size_t src = 0;
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const size_t pix = static_cast<size_t>(y) * w + x;
        const uint32_t n = out.record_offsets[pix + 1] - out.record_offsets[pix];
        std::copy_n(res.records.begin() + static_cast<long>(src), n,
                    out.records.begin() + out.record_offsets[pix]);
        src += n;
      }
    }
  }
  return out;
}

RenderOutput render(const GaussianSet& set, const Camera& cam, const Eigen::Vector3d& background) {
  return render(to_features(set), set.mask, cam, background);
}

ImageBuffer render_brute_force(const FeatureSet& feats, const std::vector<uint8_t>& mask,
                               const Camera& cam, const Eigen::Vector3d& background) {
  const int w = cam.width, h = cam.height;
  ImageBuffer im = ImageBuffer::zeros(w, h);
  const PreparedScene scene = prepare(feats, mask, cam);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double t = 1.0;
      Eigen::Vector3d c = Eigen::Vector3d::Zero();
      for (const ProjectedGaussian& p : scene.sorted) {
        const double g = std::exp(gaussian_power(p, px, py));
        const double sigma = std::min(p.opacity * g, kSigmaClamp);
        c += p.color * (sigma * t);
        t *= 1.0 - sigma;
      }
      c += background * t;
      const size_t pix = static_cast<size_t>(y) * w + x;
      for (int k = 0; k < 3; ++k) im.rgb[3 * pix + k] = std::clamp(c[k], 0.0, 1.0);
      im.alpha[pix] = 1.0 - t;
    }
  }
  return im;
}

ImageBuffer render_brute_force(const GaussianSet& set, const Camera& cam,
                               const Eigen::Vector3d& background) {
  return render_brute_force(to_features(set), set.mask, cam, background);
}

namespace {

// Backward through the 6D rotation decoding (normalize, Gram-Schmidt, cross).
void rotation6_backward(const double r6[6], const Eigen::Matrix3d& grad_r, double grad_r6[6]) {
  const Eigen::Vector3d a(r6[0], r6[1], r6[2]);
  const Eigen::Vector3d b(r6[3], r6[4], r6[5]);
  const double na = a.norm();
  const Eigen::Vector3d c1 = a / na;
  const Eigen::Vector3d u = b - c1.dot(b) * c1;
  const double nu = u.norm();
  const Eigen::Vector3d c2 = u / nu;

  const Eigen::Vector3d g3 = grad_r.col(2);
  Eigen::Vector3d gc1 = grad_r.col(0) + c2.cross(g3);
  const Eigen::Vector3d gc2 = grad_r.col(1) + g3.cross(c1);

  const Eigen::Vector3d gu = (gc2 - c2 * c2.dot(gc2)) / nu;
  const Eigen::Vector3d gb = gu - c1 * c1.dot(gu);
  gc1 += -c1.dot(gu) * b - c1.dot(b) * gu;

  const Eigen::Vector3d ga = (gc1 - c1 * c1.dot(gc1)) / na;
  for (int k = 0; k < 3; ++k) {
    grad_r6[k] = ga[k];
    grad_r6[3 + k] = gb[k];
  }
}

}  // namespace

BackwardResult render_backward(const RenderOutput& out, const FeatureSet& feats,
                               const std::vector<uint8_t>& mask, const Camera& cam,
                               const std::vector<double>& grad_rgb,
                               const std::vector<double>* grad_alpha) {
  const int w = cam.width, h = cam.height;
  const size_t num_pixels = static_cast<size_t>(w) * h;
  if (out.image.width != w || out.image.height != h)
    throw ShapeMismatch("render output does not match camera size");
  if (grad_rgb.size() != num_pixels * 3) throw ShapeMismatch("grad_rgb size");
  if (grad_alpha && grad_alpha->size() != num_pixels) throw ShapeMismatch("grad_alpha size");

  BackwardResult result;
  result.grads = FeatureSet::zeros(feats.n);
  result.screen_grad_norm.assign(static_cast<size_t>(feats.n), 0.0);

  // Re-activate and re-project; same code path as the forward pass.
  std::vector<std::optional<ProjectedGaussian>> proj(static_cast<size_t>(feats.n));
  std::vector<ActivatedGaussian> act(static_cast<size_t>(feats.n));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < feats.n; ++i) {
    if (!mask.empty() && mask[static_cast<size_t>(i)] == 0) continue;
    const auto g = try_activate_row(feats.row(i));
    if (!g) continue;
    act[static_cast<size_t>(i)] = *g;
    auto p = project(*g, cam);
    if (p) {
      p->source_index = i;
      proj[static_cast<size_t>(i)] = *p;
    }
  }

  // Phase 1: per-pixel reverse walk over the blend records, producing
  // d loss / d sigma for every record. Pixels write disjoint slices.
  std::vector<double> grad_sigma(out.records.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (int64_t pix = 0; pix < static_cast<int64_t>(num_pixels); ++pix) {
    const uint32_t begin = out.record_offsets[static_cast<size_t>(pix)];
    const uint32_t end = out.record_offsets[static_cast<size_t>(pix) + 1];
    if (begin == end && !grad_alpha) continue;
    const Eigen::Vector3d g(grad_rgb[3 * static_cast<size_t>(pix)],
                            grad_rgb[3 * static_cast<size_t>(pix) + 1],
                            grad_rgb[3 * static_cast<size_t>(pix) + 2]);
    const double ga = grad_alpha ? (*grad_alpha)[static_cast<size_t>(pix)] : 0.0;
    const double t_final = out.transmittance[static_cast<size_t>(pix)];
    // Suffix accumulator: dot(g, sum of colors blended after record i,
    // including the background) minus the alpha-output path.
    double suffix = g.dot(out.background) * t_final - ga * t_final;
    for (uint32_t r = end; r-- > begin;) {
      const BlendRecord& rec = out.records[r];
      const Eigen::Vector3d& color = proj[static_cast<size_t>(rec.source_index)]->color;
      const double gc = g.dot(color);
      grad_sigma[r] = gc * rec.t_before - suffix / (1.0 - rec.sigma);
      suffix += gc * rec.sigma * rec.t_before;
    }
  }

  // Phase 2: invert the pixel-major record list into per-ellipsoid reference
  // lists, preserving pixel-major order.
  std::vector<uint32_t> source_offsets(static_cast<size_t>(feats.n) + 1, 0);
  for (const BlendRecord& rec : out.records)
    ++source_offsets[static_cast<size_t>(rec.source_index) + 1];
  for (size_t i = 1; i < source_offsets.size(); ++i) source_offsets[i] += source_offsets[i - 1];
  struct Ref {
    uint32_t pixel;
    uint32_t record;
  };
  std::vector<Ref> refs(out.records.size());
  {
    std::vector<uint32_t> cursor(source_offsets.begin(), source_offsets.end() - 1);
    for (size_t pix = 0; pix < num_pixels; ++pix) {
      for (uint32_t r = out.record_offsets[pix]; r < out.record_offsets[pix + 1]; ++r) {
        const int src = out.records[r].source_index;
        refs[cursor[static_cast<size_t>(src)]++] =
            Ref{static_cast<uint32_t>(pix), r};
      }
    }
  }

  // Phase 3: one ellipsoid per iteration, accumulating its pixels in fixed
  // order, then chaining through projection and activation.
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < feats.n; ++i) {
    const uint32_t begin = source_offsets[static_cast<size_t>(i)];
    const uint32_t end = source_offsets[static_cast<size_t>(i) + 1];
    if (begin == end) continue;
    const ProjectedGaussian& p = *proj[static_cast<size_t>(i)];

    Eigen::Vector3d grad_color = Eigen::Vector3d::Zero();
    double grad_opacity = 0.0;
    Eigen::Vector2d grad_mean2d = Eigen::Vector2d::Zero();
    Eigen::Matrix2d grad_conic = Eigen::Matrix2d::Zero();

    for (uint32_t r = begin; r < end; ++r) {
      const Ref& ref = refs[r];
      const BlendRecord& rec = out.records[ref.record];
      const double px = (ref.pixel % static_cast<uint32_t>(w)) + 0.5;
      const double py = (ref.pixel / static_cast<uint32_t>(w)) + 0.5;
      const Eigen::Vector3d g(grad_rgb[3 * ref.pixel], grad_rgb[3 * ref.pixel + 1],
                              grad_rgb[3 * ref.pixel + 2]);

      grad_color += g * (rec.sigma * rec.t_before);

      const double gs = grad_sigma[ref.record];
      const Eigen::Vector2d d(px - p.mean2d.x(), py - p.mean2d.y());
      const double power = -0.5 * d.dot(p.conic * d);
      const double gauss = std::exp(power);
      const double sigma_raw = p.opacity * gauss;
      if (sigma_raw > kSigmaClamp) continue;  // clamp dead zone
      grad_opacity += gs * gauss;
      const double grad_power = gs * p.opacity * gauss;
      grad_mean2d += grad_power * (p.conic * d);
      grad_conic += grad_power * (-0.5) * (d * d.transpose());
    }

    result.screen_grad_norm[static_cast<size_t>(i)] = grad_mean2d.norm();

    // conic = cov2d^-1; the +0.3 I floor is additive and passes through.
    const Eigen::Matrix2d grad_cov2d = -p.conic * grad_conic * p.conic;

    // Projection chain: both the mean and the Jacobian of the covariance
    // projection are differentiated with respect to the camera-space point,
    // so position gradients are exact for extended splats.
    const ActivatedGaussian& a = act[static_cast<size_t>(i)];
    const Eigen::Vector3d t = cam.rotation * a.position + cam.translation;
    const double inv_z = 1.0 / t.z();
    const double inv_z2 = inv_z * inv_z;
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx * inv_z, 0.0, -cam.fx * t.x() * inv_z2,
           0.0, cam.fy * inv_z, -cam.fy * t.y() * inv_z2;

    Eigen::Vector3d grad_t(
        cam.fx * inv_z * grad_mean2d.x(),
        cam.fy * inv_z * grad_mean2d.y(),
        -cam.fx * t.x() * inv_z2 * grad_mean2d.x() -
            cam.fy * t.y() * inv_z2 * grad_mean2d.y());
    {
      const Eigen::Matrix3d cov_cam = cam.rotation * a.cov3d * cam.rotation.transpose();
      const Eigen::Matrix<double, 2, 3> grad_jac = 2.0 * grad_cov2d * jac * cov_cam;
      grad_t.x() += grad_jac(0, 2) * (-cam.fx * inv_z2);
      grad_t.y() += grad_jac(1, 2) * (-cam.fy * inv_z2);
      grad_t.z() += grad_jac(0, 0) * (-cam.fx * inv_z2) +
                    grad_jac(0, 2) * (2.0 * cam.fx * t.x() * inv_z2 * inv_z) +
                    grad_jac(1, 1) * (-cam.fy * inv_z2) +
                    grad_jac(1, 2) * (2.0 * cam.fy * t.y() * inv_z2 * inv_z);
    }
    const Eigen::Vector3d grad_pos = cam.rotation.transpose() * grad_t;

    const Eigen::Matrix3d grad_cov_cam = jac.transpose() * grad_cov2d * jac;
    const Eigen::Matrix3d grad_cov3d = cam.rotation.transpose() * grad_cov_cam * cam.rotation;

    // Activation chain.
    const double* f = feats.row(i);
    const Eigen::Matrix3d rot = rotation6_to_matrix(f + kRot6Off);
    Eigen::Vector3d s;
    for (int k = 0; k < 3; ++k)
      s[k] = std::clamp(std::exp(f[kLogScaleOff + k]), kScaleMin, kScaleMax);

    double* grad_row = result.grads.row(i);
    for (int k = 0; k < 3; ++k) grad_row[kPosOff + k] = grad_pos[k];

    const Eigen::Matrix3d rt_g_r = rot.transpose() * grad_cov3d * rot;
    for (int k = 0; k < 3; ++k) {
      const double raw_s = std::exp(f[kLogScaleOff + k]);
      const bool clamped = raw_s < kScaleMin || raw_s > kScaleMax;
      grad_row[kLogScaleOff + k] = clamped ? 0.0 : 2.0 * s[k] * rt_g_r(k, k) * s[k];
    }

    const Eigen::Vector3d s2(s[0] * s[0], s[1] * s[1], s[2] * s[2]);
    const Eigen::Matrix3d grad_rot = 2.0 * grad_cov3d * rot * s2.asDiagonal();
    rotation6_backward(f + kRot6Off, grad_rot, grad_row + kRot6Off);

    grad_row[kOpacityOff] = grad_opacity * a.opacity * (1.0 - a.opacity);

    for (int k = 0; k < 3; ++k) {
      const double raw_c = f[kColorOff + k];
      grad_row[kColorOff + k] = (raw_c > 0.0 && raw_c < 1.0) ? grad_color[k] : 0.0;
    }
  }
  return result;
}

}  // namespace gsdiff::splat
