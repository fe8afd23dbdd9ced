#pragma once

#include <string>

#include "mcc/geometry.hpp"

namespace mcc::metrics {

// Percentage of pred points within rho (inclusive) of some gt point.
double accuracy(const geom::PointCloud& pred, const geom::PointCloud& gt,
                double rho);
// Percentage of gt points within rho of some pred point.
double completeness(const geom::PointCloud& pred, const geom::PointCloud& gt,
                    double rho);
// 2*acc*cmp/(acc+cmp); 0 when both are 0.
double f1(double acc, double cmp);

// 0.5 * (mean nearest-neighbor distance a->b + mean b->a), plain L2.
double chamfer(const geom::PointCloud& a, const geom::PointCloud& b);

struct MetricReport {
  double accuracy = 0;
  double completeness = 0;
  double f1 = 0;
  double chamfer = 0;
  bool empty_pred_warning = false;
};

MetricReport evaluate_clouds(const geom::PointCloud& pred,
                             const geom::PointCloud& gt, double rho,
                             bool with_chamfer = true);

// "metric,value" rows.
std::string metrics_csv(const MetricReport& r, bool with_chamfer = true);

}  // namespace mcc::metrics
