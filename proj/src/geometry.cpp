#include "mcc/geometry.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mcc {

namespace {
std::atomic<int> g_max_threads{0};  // 0 = hardware default
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

int max_threads() {
  int n = g_max_threads.load();
  if (n > 0) return n;
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_max_threads(int n) {
  g_max_threads.store(n);
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

Mat3 Mat3::rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r.m[0] = 1; r.m[1] = 0; r.m[2] = 0;
  r.m[3] = 0; r.m[4] = c; r.m[5] = -s;
  r.m[6] = 0; r.m[7] = s; r.m[8] = c;
  return r;
}

Mat3 Mat3::rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r.m[0] = c;  r.m[1] = 0; r.m[2] = s;
  r.m[3] = 0;  r.m[4] = 1; r.m[5] = 0;
  r.m[6] = -s; r.m[7] = 0; r.m[8] = c;
  return r;
}

Mat3 Mat3::rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r.m[0] = c; r.m[1] = -s; r.m[2] = 0;
  r.m[3] = s; r.m[4] = c;  r.m[5] = 0;
  r.m[6] = 0; r.m[7] = 0;  r.m[8] = 1;
  return r;
}

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += at(i, k) * o.at(k, j);
      r.at(i, j) = s;
    }
  return r;
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.at(i, j) = at(j, i);
  return r;
}

double Mat3::det() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) -
         m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

double Mat3::orthonormal_error() const {
  const Mat3 g = transposed() * (*this);
  double e = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      e = std::max(e, std::abs(g.at(i, j) - (i == j ? 1.0 : 0.0)));
  return e;
}

}  // namespace mcc

namespace mcc::geom {

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0))
    throw invalid_argument("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0)
    throw invalid_argument("intrinsics: image size must be positive");
  if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
    throw invalid_argument("intrinsics: principal point outside image");
}

void Pose::validate(double tol) const {
  if (rotation.orthonormal_error() > tol)
    throw invalid_argument("pose: rotation is not orthonormal");
  if (std::abs(rotation.det() - 1.0) > tol)
    throw invalid_argument("pose: rotation determinant is not +1");
  if (!translation.finite())
    throw invalid_argument("pose: non-finite translation");
}

void RgbdFrame::validate() const {
  intrinsics.validate();
  const size_t n = static_cast<size_t>(width()) * height();
  if (depth.size() != n)
    throw invalid_argument("frame: depth size does not match intrinsics");
  if (image.size() != n * 3)
    throw invalid_argument("frame: image size does not match intrinsics");
  for (double v : image)
    if (!(v >= 0.0 && v <= 1.0))
      throw invalid_argument("frame: image value outside [0,1]");
  for (double d : depth)
    if (std::isfinite(d) && !(d > 0))
      throw invalid_argument("frame: finite depth must be positive");
}

void PointCloud::validate() const {
  if (has_colors() && colors.size() != positions.size())
    throw invalid_argument("cloud: color count differs from position count");
  for (const Vec3& p : positions)
    if (!p.finite()) throw invalid_argument("cloud: non-finite position");
}

PointMap unproject_map(const RgbdFrame& frame, bool to_world) {
  frame.validate();
  const int w = frame.width(), h = frame.height();
  const CameraIntrinsics& in = frame.intrinsics;
  PointMap out;
  out.width = w;
  out.height = h;
  out.points.assign(static_cast<size_t>(w) * h, Vec3{});
  out.valid.assign(static_cast<size_t>(w) * h, 0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const size_t i = static_cast<size_t>(v) * w + u;
      const double d = frame.depth[i];
      if (!std::isfinite(d)) continue;
      Vec3 p{(u - in.cx) * d / in.fx, (v - in.cy) * d / in.fy, d};
      if (to_world) p = frame.pose.apply(p);
      out.points[i] = p;
      out.valid[i] = 1;
    }
  }
  return out;
}

UnprojectResult unproject(const RgbdFrame& frame, bool to_world) {
  PointMap map = unproject_map(frame, to_world);
  UnprojectResult r;
  r.validity = map.valid;
  const size_t n = map.points.size();
  for (size_t i = 0; i < n; ++i) {
    if (!map.valid[i]) continue;
    r.cloud.positions.push_back(map.points[i]);
    r.cloud.colors.push_back(
        {frame.image[3 * i], frame.image[3 * i + 1], frame.image[3 * i + 2]});
  }
  return r;
}

Vec3 project(const CameraIntrinsics& intr, const Vec3& p) {
  return {p.x * intr.fx / p.z + intr.cx, p.y * intr.fy / p.z + intr.cy, p.z};
}

PointCloud build_gt_cloud(std::span<const RgbdFrame> frames) {
  if (frames.empty())
    throw invalid_argument("build_gt_cloud: no frames given");
  PointCloud all;
  for (const RgbdFrame& f : frames) {
    UnprojectResult r = unproject(f, /*to_world=*/true);
    all.positions.insert(all.positions.end(), r.cloud.positions.begin(),
                         r.cloud.positions.end());
    all.colors.insert(all.colors.end(), r.cloud.colors.begin(),
                      r.cloud.colors.end());
  }
  return all;
}

NormalizedCloud normalize_cloud(const PointCloud& cloud) {
  const size_t n = cloud.size();
  if (n < 2) throw invalid_argument("normalize_cloud: need at least 2 points");
  Vec3 c{0, 0, 0};
  for (const Vec3& p : cloud.positions) c += p;
  c = c / static_cast<double>(n);
  double ss = 0;
  for (const Vec3& p : cloud.positions) ss += dist2(p, c);
  const double scale = std::sqrt(ss / (3.0 * static_cast<double>(n)));
  if (!(scale > 1e-12))
    throw invalid_argument("normalize_cloud: degenerate cloud (zero spread)");
  NormalizedCloud out;
  out.transform = {c, scale};
  out.cloud.positions.reserve(n);
  for (const Vec3& p : cloud.positions)
    out.cloud.positions.push_back(out.transform.apply(p));
  out.cloud.colors = cloud.colors;
  return out;
}

SpatialHash::SpatialHash(const std::vector<Vec3>& pts, double cell)
    : pts_(&pts), cell_(cell) {
  if (!(cell > 0)) throw invalid_argument("spatial hash: cell size must be > 0");
  if (pts.empty()) throw invalid_argument("spatial hash: empty point set");
  Vec3 lo = pts[0], hi = pts[0];
  for (const Vec3& p : pts) {
    lo.x = std::min(lo.x, p.x); lo.y = std::min(lo.y, p.y); lo.z = std::min(lo.z, p.z);
    hi.x = std::max(hi.x, p.x); hi.y = std::max(hi.y, p.y); hi.z = std::max(hi.z, p.z);
  }
  origin_ = lo;
  auto dim = [&](double a, double b) {
    int64_t n = static_cast<int64_t>(std::floor((b - a) / cell_)) + 1;
    return static_cast<int>(std::max<int64_t>(1, n));
  };
  nx_ = dim(lo.x, hi.x);
  ny_ = dim(lo.y, hi.y);
  nz_ = dim(lo.z, hi.z);

  const int64_t ncells = static_cast<int64_t>(nx_) * ny_ * nz_;
  std::vector<int64_t> counts(ncells + 1, 0);
  std::vector<int64_t> cell_of(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    const Vec3& p = pts[i];
    int cx = std::min(nx_ - 1, static_cast<int>(std::floor((p.x - origin_.x) / cell_)));
    int cy = std::min(ny_ - 1, static_cast<int>(std::floor((p.y - origin_.y) / cell_)));
    int cz = std::min(nz_ - 1, static_cast<int>(std::floor((p.z - origin_.z) / cell_)));
    cell_of[i] = (static_cast<int64_t>(cz) * ny_ + cy) * nx_ + cx;
    ++counts[cell_of[i] + 1];
  }
  for (int64_t i = 0; i < ncells; ++i) counts[i + 1] += counts[i];
  cell_start_ = counts;
  order_.resize(pts.size());
  std::vector<int64_t> cursor(cell_start_.begin(), cell_start_.end() - 1);
  for (size_t i = 0; i < pts.size(); ++i) order_[cursor[cell_of[i]]++] = i;
}

void SpatialHash::scan_cell(int cx, int cy, int cz, const Vec3& p,
                            Hit& best) const {
  if (cx < 0 || cy < 0 || cz < 0 || cx >= nx_ || cy >= ny_ || cz >= nz_) return;
  const int64_t c = (static_cast<int64_t>(cz) * ny_ + cy) * nx_ + cx;
  const auto& pts = *pts_;
  for (int64_t k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
    const int64_t idx = order_[k];
    const double d2 = dist2(p, pts[idx]);
    if (best.index < 0 || d2 < best.d2 ||
        (d2 == best.d2 && idx < best.index)) {
      best.index = idx;
      best.d2 = d2;
    }
  }
}

std::optional<SpatialHash::Hit> SpatialHash::nearest_within(const Vec3& p,
                                                            double r) const {
  if (r > cell_ * (1 + 1e-12))
    throw invalid_argument("spatial hash: query radius exceeds cell size");
  const int cx = static_cast<int>(std::floor((p.x - origin_.x) / cell_));
  const int cy = static_cast<int>(std::floor((p.y - origin_.y) / cell_));
  const int cz = static_cast<int>(std::floor((p.z - origin_.z) / cell_));
  Hit best;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        scan_cell(cx + dx, cy + dy, cz + dz, p, best);
  if (best.index < 0 || best.d2 > r * r) return std::nullopt;
  return best;
}

SpatialHash::Hit SpatialHash::nearest(const Vec3& p) const {
  // Shells are centered on the clamped cell; a point in shell k is at least
  // (k-1)*cell away from the in-box projection of p, which lower-bounds the
  // distance from p itself.
  const auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
  const int cx = clampi(static_cast<int>(std::floor((p.x - origin_.x) / cell_)), nx_);
  const int cy = clampi(static_cast<int>(std::floor((p.y - origin_.y) / cell_)), ny_);
  const int cz = clampi(static_cast<int>(std::floor((p.z - origin_.z) / cell_)), nz_);
  const int kmax = std::max({cx, nx_ - 1 - cx, cy, ny_ - 1 - cy, cz, nz_ - 1 - cz});
  Hit best;
  for (int k = 0; k <= kmax; ++k) {
    if (best.index >= 0) {
      const double bound = (k - 1) * cell_;
      if (bound > 0 && best.d2 <= bound * bound) break;
    }
    for (int dz = -k; dz <= k; ++dz)
      for (int dy = -k; dy <= k; ++dy)
        for (int dx = -k; dx <= k; ++dx) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != k)
            continue;
          scan_cell(cx + dx, cy + dy, cz + dz, p, best);
        }
  }
  return best;
}

LabelResult label_queries(std::span<const Vec3> queries, const PointCloud& gt,
                          double tau) {
  if (!(tau > 0)) throw invalid_argument("label_queries: tau must be > 0");
  if (gt.positions.empty())
    throw invalid_argument("label_queries: empty ground-truth cloud");
  SpatialHash hash(gt.positions, tau);
  LabelResult out;
  const size_t n = queries.size();
  out.occupied.assign(n, 0);
  out.color_bins.assign(n, {0, 0, 0});
  const int64_t sn = static_cast<int64_t>(n);
#pragma omp parallel for schedule(static) if (sn > 4096)
  for (int64_t i = 0; i < sn; ++i) {
    auto hit = hash.nearest_within(queries[i], tau);
    if (!hit) continue;
    out.occupied[i] = 1;
    if (gt.has_colors()) {
      const Vec3& c = gt.colors[hit->index];
      out.color_bins[i] = {color_bin(c.x), color_bin(c.y), color_bin(c.z)};
    }
  }
  return out;
}

std::array<int64_t, 3> grid_dims(const Vec3& min, const Vec3& max,
                                 double granularity) {
  if (!(granularity > 0))
    throw invalid_argument("make_grid: granularity must be > 0");
  std::array<int64_t, 3> dims;
  for (int a = 0; a < 3; ++a) {
    const double span = max[a] - min[a];
    if (!(span > 0)) throw invalid_argument("make_grid: max must exceed min");
    const double ratio = span / granularity;
    const double snapped = std::round(ratio);
    // Decimal steps like 6/0.1 land epsilon short of an integer; snap.
    const int64_t steps =
        (std::abs(ratio - snapped) < 1e-9 * std::max(1.0, snapped))
            ? static_cast<int64_t>(snapped)
            : static_cast<int64_t>(std::floor(ratio));
    dims[a] = steps + 1;
  }
  return dims;
}

std::vector<Vec3> make_grid(const Vec3& min, const Vec3& max,
                            double granularity) {
  const auto dims = grid_dims(min, max, granularity);
  std::vector<Vec3> pts;
  pts.reserve(static_cast<size_t>(dims[0] * dims[1] * dims[2]));
  for (int64_t iz = 0; iz < dims[2]; ++iz)
    for (int64_t iy = 0; iy < dims[1]; ++iy)
      for (int64_t ix = 0; ix < dims[0]; ++ix)
        pts.push_back({min.x + ix * granularity, min.y + iy * granularity,
                       min.z + iz * granularity});
  return pts;
}

Mat3 random_rotation(Rng& rng, double lo_deg, double hi_deg) {
  if (lo_deg < -180.0 || hi_deg > 180.0 || lo_deg > hi_deg)
    throw invalid_argument("random_rotation: invalid angle interval");
  const double d2r = kPi / 180.0;
  const double ax = rng.uniform(lo_deg, hi_deg) * d2r;
  const double ay = rng.uniform(lo_deg, hi_deg) * d2r;
  const double az = rng.uniform(lo_deg, hi_deg) * d2r;
  return Mat3::rot_z(az) * Mat3::rot_y(ay) * Mat3::rot_x(ax);
}

int color_bin(double c) {
  if (!(c >= 0.0 && c <= 1.0))
    throw invalid_argument("color_bin: value outside [0,1]");
  return static_cast<int>(std::floor(c * 255.0 + 0.5));
}

double bin_color(int b) {
  if (b < 0 || b > 255) throw invalid_argument("bin_color: bin outside [0,255]");
  return b / 255.0;
}

}  // namespace mcc::geom
