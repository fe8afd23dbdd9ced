#include "mcc/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mcc::metrics {

using geom::PointCloud;
using geom::SpatialHash;

namespace {

int64_t count_within(const std::vector<Vec3>& from,
                     const std::vector<Vec3>& to, double rho) {
  SpatialHash hash(to, rho);
  int64_t hits = 0;
  const int64_t n = static_cast<int64_t>(from.size());
#pragma omp parallel for schedule(static) reduction(+ : hits) if (n > 4096)
  for (int64_t i = 0; i < n; ++i)
    if (hash.nearest_within(from[i], rho)) ++hits;
  return hits;
}

double mean_nn_dist(const std::vector<Vec3>& from,
                    const std::vector<Vec3>& to) {
  Vec3 lo = to[0], hi = to[0];
  for (const Vec3& p : to) {
    lo.x = std::min(lo.x, p.x); lo.y = std::min(lo.y, p.y); lo.z = std::min(lo.z, p.z);
    hi.x = std::max(hi.x, p.x); hi.y = std::max(hi.y, p.y); hi.z = std::max(hi.z, p.z);
  }
  const double vol = std::max(1e-30, (hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z));
  const double cell = std::max(
      1e-9, std::cbrt(vol / static_cast<double>(to.size())) * 2.0);
  SpatialHash hash(to, cell);
  // Fixed-order accumulation keeps the mean deterministic.
  std::vector<double> d(from.size());
  const int64_t n = static_cast<int64_t>(from.size());
#pragma omp parallel for schedule(static) if (n > 2048)
  for (int64_t i = 0; i < n; ++i) d[i] = std::sqrt(hash.nearest(from[i]).d2);
  double s = 0;
  for (double x : d) s += x;
  return s / static_cast<double>(from.size());
}

}  // namespace

double accuracy(const PointCloud& pred, const PointCloud& gt, double rho) {
  if (!(rho > 0)) throw invalid_argument("accuracy: rho must be > 0");
  if (gt.positions.empty())
    throw invalid_argument("accuracy: empty ground-truth cloud");
  if (pred.positions.empty()) return 0.0;
  return 100.0 * static_cast<double>(
                     count_within(pred.positions, gt.positions, rho)) /
         static_cast<double>(pred.size());
}

double completeness(const PointCloud& pred, const PointCloud& gt, double rho) {
  if (!(rho > 0)) throw invalid_argument("completeness: rho must be > 0");
  if (gt.positions.empty())
    throw invalid_argument("completeness: empty ground-truth cloud");
  if (pred.positions.empty()) return 0.0;
  return 100.0 * static_cast<double>(
                     count_within(gt.positions, pred.positions, rho)) /
         static_cast<double>(gt.size());
}

double f1(double acc, double cmp) {
  if (acc == 0.0 && cmp == 0.0) return 0.0;
  return 2.0 * acc * cmp / (acc + cmp);
}

double chamfer(const PointCloud& a, const PointCloud& b) {
  if (a.positions.empty() || b.positions.empty())
    throw invalid_argument("chamfer: empty cloud");
  return 0.5 * (mean_nn_dist(a.positions, b.positions) +
                mean_nn_dist(b.positions, a.positions));
}

MetricReport evaluate_clouds(const PointCloud& pred, const PointCloud& gt,
                             double rho, bool with_chamfer) {
  MetricReport r;
  r.empty_pred_warning = pred.positions.empty();
  r.accuracy = accuracy(pred, gt, rho);
  r.completeness = completeness(pred, gt, rho);
  r.f1 = f1(r.accuracy, r.completeness);
  if (with_chamfer && !r.empty_pred_warning) r.chamfer = chamfer(pred, gt);
  return r;
}

std::string metrics_csv(const MetricReport& r, bool with_chamfer) {
  std::ostringstream os;
  char buf[64];
  auto row = [&](const char* name, double v) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f\n", name, v);
    os << buf;
  };
  row("accuracy", r.accuracy);
  row("completeness", r.completeness);
  row("f1", r.f1);
  if (with_chamfer) row("chamfer", r.chamfer);
  return os.str();
}

}  // namespace mcc::metrics
