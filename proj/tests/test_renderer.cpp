#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "gsdiff/renderer.hpp"
#include "test_util.hpp"

using namespace gsdiff;
using namespace gsdiff::splat;

namespace {

// Scenes built so no render threshold can fire: big soft blobs near the
// image center (every 3-sigma footprint covers the whole viewport, every
// per-pixel sigma stays inside [1/255, 0.99], total opacity low enough that
// the transmittance never reaches the early-out). On such scenes the tiled
// renderer and the brute-force oracle compute the same sums.
FeatureSet soft_blob_scene(int n, Rng& rng) {
  FeatureSet f = FeatureSet::zeros(n);
  const double alpha_max = std::min(0.5, 3.5 / n);
  // Depths are stratified so no two ellipsoids come within a finite-difference
  // step of swapping blend order (the sort is a genuine discontinuity).
  const double slot = 0.3 / n;
  for (int i = 0; i < n; ++i) {
    double* row = f.row(i);
    row[kPosOff + 0] = rng.uniform(-0.1, 0.1);
    row[kPosOff + 1] = rng.uniform(-0.1, 0.1);
    row[kPosOff + 2] = -0.15 + (i + 0.15 + 0.7 * rng.uniform()) * slot;
    for (int k = 0; k < 3; ++k)
      row[kLogScaleOff + k] = rng.uniform(std::log(0.75), std::log(0.98));
    for (;;) {
      for (int k = 0; k < 6; ++k) row[kRot6Off + k] = rng.uniform(-1.0, 1.0);
      const Eigen::Vector3d a(row[kRot6Off], row[kRot6Off + 1], row[kRot6Off + 2]);
      const Eigen::Vector3d b(row[kRot6Off + 3], row[kRot6Off + 4], row[kRot6Off + 5]);
      if (a.norm() > 0.5 && a.cross(b).norm() > 0.3) break;
    }
    row[kOpacityOff] = logit(rng.uniform(0.05, alpha_max));
    for (int k = 0; k < 3; ++k) row[kColorOff + k] = rng.uniform(0.05, 0.95);
  }
  return f;
}

std::vector<uint8_t> full_mask(int n) { return std::vector<uint8_t>(static_cast<size_t>(n), 1); }

}  // namespace

TEST_CASE("project: on-axis closed form") {
  ActivatedGaussian g;
  g.position = Eigen::Vector3d::Zero();
  g.cov3d = 0.01 * Eigen::Matrix3d::Identity();
  g.opacity = 0.5;
  g.color = Eigen::Vector3d(1, 0, 0);
  Camera cam = testutil::simple_camera(64, 100.0, 2.0);
  cam.cx = cam.cy = 32.0;

  const auto p = project(g, cam);
  REQUIRE(p.has_value());
  CHECK(p->mean2d.x() == doctest::Approx(32.0).epsilon(1e-12));
  CHECK(p->mean2d.y() == doctest::Approx(32.0).epsilon(1e-12));
  // J = diag(fx/z, fy/z) on axis: cov2d = (100/2)^2 * 0.01 * I + 0.3 * I.
  CHECK(p->cov2d(0, 0) == doctest::Approx(25.3).epsilon(1e-12));
  CHECK(p->cov2d(1, 1) == doctest::Approx(25.3).epsilon(1e-12));
  CHECK(p->cov2d(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p->depth == doctest::Approx(2.0));
}

TEST_CASE("project: behind the camera is culled") {
  ActivatedGaussian g;
  g.position = Eigen::Vector3d(0, 0, -3.0);  // camera at z offset 2 -> t_z = -1
  g.cov3d = 0.01 * Eigen::Matrix3d::Identity();
  g.opacity = 0.5;
  g.color = Eigen::Vector3d::Ones();
  const Camera cam = testutil::simple_camera();
  CHECK(!project(g, cam).has_value());
}

TEST_CASE("project: off-viewport extent is culled") {
  ActivatedGaussian g;
  g.position = Eigen::Vector3d(10.0, 0, 0);  // far off axis
  g.cov3d = 1e-4 * Eigen::Matrix3d::Identity();
  g.opacity = 0.5;
  g.color = Eigen::Vector3d::Ones();
  const Camera cam = testutil::simple_camera();
  CHECK(!project(g, cam).has_value());
}

TEST_CASE("render: empty set gives pure background") {
  const FeatureSet f = FeatureSet::zeros(0);
  const Camera cam = testutil::simple_camera();
  const Eigen::Vector3d bg(0.2, 0.4, 0.6);
  const RenderOutput out = render(f, {}, cam, bg);
  for (size_t p = 0; p < out.image.pixel_count(); ++p) {
    CHECK(out.image.rgb[3 * p + 0] == 0.2);
    CHECK(out.image.rgb[3 * p + 1] == 0.4);
    CHECK(out.image.rgb[3 * p + 2] == 0.6);
    CHECK(out.image.alpha[p] == 0.0);
  }
  const ImageBuffer oracle = render_brute_force(f, {}, cam, bg);
  CHECK(oracle.rgb == out.image.rgb);
}

TEST_CASE("render: single on-pixel ellipsoid matches the one-term blend") {
  // Place the center exactly on the center of pixel (16,16): continuous
  // coordinate 16.5 with fx=40, z=2 means x = 0.025 world units.
  FeatureSet f = FeatureSet::zeros(1);
  double* row = f.row(0);
  row[kPosOff + 0] = 0.025;
  row[kPosOff + 1] = 0.025;
  row[kLogScaleOff] = row[kLogScaleOff + 1] = row[kLogScaleOff + 2] = std::log(0.05);
  row[kRot6Off + 0] = 1;
  row[kRot6Off + 4] = 1;
  row[kOpacityOff] = 0.0;  // opacity 0.5
  row[kColorOff + 0] = 1.0;
  const Camera cam = testutil::simple_camera();
  const RenderOutput out = render(f, full_mask(1), cam, Eigen::Vector3d::Zero());

  const size_t pix = 16 * 32 + 16;
  CHECK(out.image.rgb[3 * pix + 0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out.image.rgb[3 * pix + 1] == 0.0);
  CHECK(out.image.alpha[pix] == doctest::Approx(0.5).epsilon(1e-12));

  const ImageBuffer oracle = render_brute_force(f, full_mask(1), cam, Eigen::Vector3d::Zero());
  CHECK(oracle.rgb[3 * pix] == out.image.rgb[3 * pix]);
}

TEST_CASE("render: two coincident ellipsoids expand to the two-term blend") {
  FeatureSet f = FeatureSet::zeros(2);
  for (int i = 0; i < 2; ++i) {
    double* row = f.row(i);
    row[kPosOff + 0] = 0.025;
    row[kPosOff + 1] = 0.025;
    row[kLogScaleOff] = row[kLogScaleOff + 1] = row[kLogScaleOff + 2] = std::log(0.05);
    row[kRot6Off + 0] = 1;
    row[kRot6Off + 4] = 1;
    row[kOpacityOff] = 0.0;
  }
  f.row(0)[kColorOff + 0] = 1.0;  // front: red (tie broken by index)
  f.row(1)[kColorOff + 2] = 1.0;  // back: blue
  const Camera cam = testutil::simple_camera();
  const RenderOutput out = render(f, full_mask(2), cam, Eigen::Vector3d::Zero());
  const size_t pix = 16 * 32 + 16;
  CHECK(out.image.rgb[3 * pix + 0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out.image.rgb[3 * pix + 1] == 0.0);
  CHECK(out.image.rgb[3 * pix + 2] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("render: oracle equivalence on threshold-free scenes") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(128));
    const FeatureSet f = soft_blob_scene(n, rng);
    const Camera cam = testutil::simple_camera();
    const Eigen::Vector3d bg(rng.uniform(), rng.uniform(), rng.uniform());
    const RenderOutput out = render(f, full_mask(n), cam, bg);

    REQUIRE(!out.stats.any_threshold_hit());
    // Every projected ellipsoid reached every pixel: no binning truncation.
    for (size_t p = 0; p < out.image.pixel_count(); ++p)
      REQUIRE(out.record_offsets[p + 1] - out.record_offsets[p] ==
              static_cast<uint32_t>(out.blended_count));

    const ImageBuffer oracle = render_brute_force(f, full_mask(n), cam, bg);
    double max_diff = 0.0;
    for (size_t i = 0; i < oracle.rgb.size(); ++i)
      max_diff = std::max(max_diff, std::abs(oracle.rgb[i] - out.image.rgb[i]));
    CHECK(max_diff <= 1e-5);
  }
}

TEST_CASE("render: storage permutation leaves the image bit-identical") {
  Rng rng(22);
  const int n = 24;
  const FeatureSet f = soft_blob_scene(n, rng);
  const Camera cam = testutil::simple_camera();
  const RenderOutput base = render(f, full_mask(n), cam, Eigen::Vector3d::Zero());

  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<size_t>(i)], perm[rng.uniform_index(static_cast<uint64_t>(i + 1))]);
  FeatureSet shuffled = FeatureSet::zeros(n);
  for (int i = 0; i < n; ++i)
    std::copy_n(f.row(perm[static_cast<size_t>(i)]), kFeatureDim, shuffled.row(i));

  const RenderOutput out = render(shuffled, full_mask(n), cam, Eigen::Vector3d::Zero());
  CHECK(out.image.rgb == base.image.rgb);
  CHECK(out.image.alpha == base.image.alpha);
}

TEST_CASE("render: alpha bounded and monotone in opacity") {
  FeatureSet f = FeatureSet::zeros(1);
  double* row = f.row(0);
  row[kLogScaleOff] = row[kLogScaleOff + 1] = row[kLogScaleOff + 2] = std::log(0.2);
  row[kRot6Off + 0] = 1;
  row[kRot6Off + 4] = 1;
  row[kColorOff] = 0.5;
  const Camera cam = testutil::simple_camera();

  double prev = -1.0;
  for (double lgt : {-3.0, -1.0, 0.0, 1.0, 3.0}) {
    row[kOpacityOff] = lgt;
    const RenderOutput out = render(f, full_mask(1), cam, Eigen::Vector3d::Zero());
    double max_alpha = 0.0;
    for (size_t p = 0; p < out.image.pixel_count(); ++p) {
      CHECK(out.image.alpha[p] >= 0.0);
      CHECK(out.image.alpha[p] <= 1.0);
      max_alpha = std::max(max_alpha, out.image.alpha[p]);
    }
    CHECK(max_alpha > prev);
    prev = max_alpha;
  }
}

TEST_CASE("render_backward: zero image gradient gives zero feature gradients") {
  Rng rng(23);
  const int n = 8;
  const FeatureSet f = soft_blob_scene(n, rng);
  const Camera cam = testutil::simple_camera();
  const RenderOutput out = render(f, full_mask(n), cam, Eigen::Vector3d::Zero());
  const std::vector<double> zeros(out.image.pixel_count() * 3, 0.0);
  const BackwardResult back = render_backward(out, f, full_mask(n), cam, zeros);
  for (double g : back.grads.data) CHECK(g == 0.0);
}

TEST_CASE("render_backward: opacity-logit chain at an exact center") {
  FeatureSet f = FeatureSet::zeros(1);
  double* row = f.row(0);
  row[kPosOff + 0] = 0.025;
  row[kPosOff + 1] = 0.025;
  row[kLogScaleOff] = row[kLogScaleOff + 1] = row[kLogScaleOff + 2] = std::log(0.05);
  row[kRot6Off + 0] = 1;
  row[kRot6Off + 4] = 1;
  row[kOpacityOff] = 0.0;
  row[kColorOff + 0] = 1.0;
  const Camera cam = testutil::simple_camera();
  const RenderOutput out = render(f, full_mask(1), cam, Eigen::Vector3d::Zero());

  // L = red channel of the center pixel.
  std::vector<double> grad(out.image.pixel_count() * 3, 0.0);
  grad[3 * (16 * 32 + 16)] = 1.0;
  const BackwardResult back = render_backward(out, f, full_mask(1), cam, grad);
  CHECK(back.grads.row(0)[kOpacityOff] == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("render_backward: mismatched gradient shape throws") {
  Rng rng(29);
  const FeatureSet f = soft_blob_scene(2, rng);
  const Camera cam = testutil::simple_camera();
  const RenderOutput out = render(f, full_mask(2), cam, Eigen::Vector3d::Zero());
  const std::vector<double> bad(7, 0.0);
  CHECK_THROWS_AS(render_backward(out, f, full_mask(2), cam, bad), ShapeMismatch);
}

TEST_CASE("render_backward: matches central finite differences on all 16 channels") {
  Rng rng(24);
  int worst_channel = -1;
  double worst = 0.0;
  for (int scene = 0; scene < 6; ++scene) {
    const int n = 8;
    FeatureSet f = soft_blob_scene(n, rng);
    const Camera cam = testutil::simple_camera();
    const Eigen::Vector3d bg(0.1, 0.2, 0.3);

    // Random linear functional over rgb and alpha.
    std::vector<double> grad_rgb(static_cast<size_t>(cam.width) * cam.height * 3);
    std::vector<double> grad_alpha(static_cast<size_t>(cam.width) * cam.height);
    for (double& v : grad_rgb) v = rng.uniform(-1.0, 1.0);
    for (double& v : grad_alpha) v = rng.uniform(-1.0, 1.0);

    const auto loss = [&](const FeatureSet& feats) {
      const RenderOutput out = render(feats, full_mask(n), cam, bg);
      REQUIRE(!out.stats.any_threshold_hit());
      double l = 0.0;
      for (size_t i = 0; i < grad_rgb.size(); ++i) l += grad_rgb[i] * out.image.rgb[i];
      for (size_t i = 0; i < grad_alpha.size(); ++i) l += grad_alpha[i] * out.image.alpha[i];
      return l;
    };

    const RenderOutput out = render(f, full_mask(n), cam, bg);
    const BackwardResult back = render_backward(out, f, full_mask(n), cam, grad_rgb, &grad_alpha);

    const double h = 1e-4;
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < kFeatureDim; ++k) {
        const double saved = f.row(i)[k];
        f.row(i)[k] = saved + h;
        const double lp = loss(f);
        f.row(i)[k] = saved - h;
        const double lm = loss(f);
        f.row(i)[k] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double analytic = back.grads.row(i)[k];
        const bool ok = testutil::grad_close(analytic, fd, 1e-3, 1e-7);
        if (!ok && testutil::rel_err(analytic, fd) > worst) {
          worst = testutil::rel_err(analytic, fd);
          worst_channel = k;
        }
        CHECK(ok);
      }
    }
  }
  if (worst_channel >= 0)
    MESSAGE("worst channel ", worst_channel, " rel err ", worst);
}
