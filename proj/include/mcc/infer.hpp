#pragma once

#include "mcc/model.hpp"

namespace mcc::infer {

struct ReconstructStats {
  int encode_calls = 0;
  int decode_calls = 0;
  int64_t queries_evaluated = 0;
};

struct Reconstruction {
  geom::PointCloud cloud;  // normalized model frame
  geom::NormalizationTransform transform;
  std::vector<double> sigma;  // per grid point, grid order
  ReconstructStats stats;
};

// Encodes the frame once, decodes the mode's query grid in chunks, and keeps
// points with occupancy strictly above the threshold.
Reconstruction reconstruct(const model::MccModel& model,
                           const geom::RgbdFrame& frame, double granularity,
                           double threshold, int chunk_size = 2048);

// ASCII PLY with float x/y/z and uchar red/green/blue.
void export_ply(const geom::PointCloud& cloud, const std::string& path);
geom::PointCloud import_ply(const std::string& path);

}  // namespace mcc::infer
