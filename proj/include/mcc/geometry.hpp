#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mcc/common.hpp"

namespace mcc::geom {

struct CameraIntrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;
};

// Maps camera-frame points to the world frame: p_w = R * p_c + t.
struct Pose {
  Mat3 rotation;
  Vec3 translation;

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Pose inverse() const {
    const Mat3 rt = rotation.transposed();
    return {rt, rt * (translation * -1.0)};
  }
  void validate(double tol = 1e-9) const;
};

// Posed RGB-D view. image is H*W*3 row-major in [0,1]; depth is H*W with
// non-finite values marking unknown depth.
struct RgbdFrame {
  std::vector<double> image;
  std::vector<double> depth;
  CameraIntrinsics intrinsics;
  Pose pose;

  int width() const { return intrinsics.width; }
  int height() const { return intrinsics.height; }
  double depth_at(int v, int u) const { return depth[v * width() + u]; }
  const double* pixel(int v, int u) const {
    return &image[(v * width() + u) * 3];
  }
  void validate() const;
};

struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;  // empty or same length as positions

  size_t size() const { return positions.size(); }
  bool has_colors() const { return !colors.empty(); }
  void validate() const;
};

struct QueryBatch {
  std::vector<Vec3> points;
  std::vector<uint8_t> occupied;
  std::vector<std::array<int, 3>> color_bins;  // meaningful where occupied
};

struct NormalizationTransform {
  Vec3 centroid{0, 0, 0};
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return (p - centroid) / scale; }
  Vec3 invert(const Vec3& q) const { return q * scale + centroid; }
};

// Per-pixel unprojection map; points is H*W, valid marks finite-depth pixels.
struct PointMap {
  std::vector<Vec3> points;
  std::vector<uint8_t> valid;
  int width = 0, height = 0;
};

// Pinhole unprojection of every pixel; integer pixel coordinates are ray
// centers. Entries with sentinel depth are left zero and marked invalid.
PointMap unproject_map(const RgbdFrame& frame, bool to_world);

struct UnprojectResult {
  PointCloud cloud;
  std::vector<uint8_t> validity;  // H*W
};
UnprojectResult unproject(const RgbdFrame& frame, bool to_world);

// Camera-frame point -> (u, v, depth).
Vec3 project(const CameraIntrinsics& intr, const Vec3& cam_point);

// Union (concatenation) of world-frame unprojections of all frames.
PointCloud build_gt_cloud(std::span<const RgbdFrame> frames);

struct NormalizedCloud {
  PointCloud cloud;
  NormalizationTransform transform;
};
// Zero-mean, pooled-unit-variance normalization with an isotropic scale.
NormalizedCloud normalize_cloud(const PointCloud& cloud);

// Uniform grid over points of `pts`, cell size `cell`. Exact radius queries
// probe the 27 neighboring cells; full nearest-neighbor queries expand
// shells outward until the bound excludes closer points.
class SpatialHash {
 public:
  SpatialHash(const std::vector<Vec3>& pts, double cell);

  struct Hit {
    int64_t index = -1;
    double d2 = 0;
  };

  // Nearest point with distance <= r (inclusive); requires r <= cell size.
  // Ties on distance resolve to the lowest index.
  std::optional<Hit> nearest_within(const Vec3& p, double r) const;

  // Exact global nearest neighbor.
  Hit nearest(const Vec3& p) const;

  double cell() const { return cell_; }

 private:
  void scan_cell(int cx, int cy, int cz, const Vec3& p, Hit& best) const;

  const std::vector<Vec3>* pts_;
  double cell_;
  Vec3 origin_;
  int nx_ = 0, ny_ = 0, nz_ = 0;
  std::vector<int64_t> cell_start_;
  std::vector<int64_t> order_;
};

struct LabelResult {
  std::vector<uint8_t> occupied;
  std::vector<std::array<int, 3>> color_bins;
};
// occupied[i] iff min distance from queries[i] to gt is <= tau (inclusive);
// color target is the nearest gt point's color, ties to the lowest index.
LabelResult label_queries(std::span<const Vec3> queries, const PointCloud& gt,
                          double tau);

// Inclusive axis-aligned lattice, x fastest.
std::vector<Vec3> make_grid(const Vec3& min, const Vec3& max,
                            double granularity);
// Per-axis point count of make_grid.
std::array<int64_t, 3> grid_dims(const Vec3& min, const Vec3& max,
                                 double granularity);

// Rz*Ry*Rx with per-axis angles drawn uniformly from [lo, hi] (degrees).
Mat3 random_rotation(Rng& rng, double lo_deg = -180.0, double hi_deg = 180.0);

int color_bin(double c);
double bin_color(int b);

}  // namespace mcc::geom
