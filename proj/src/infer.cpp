#include "mcc/infer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace mcc::infer {

using geom::PointCloud;
using model::MccModel;

Reconstruction reconstruct(const MccModel& model, const geom::RgbdFrame& frame,
                           double granularity, double threshold,
                           int chunk_size) {
  if (!(granularity > 0))
    throw invalid_argument("reconstruct: granularity must be > 0");
  if (!(threshold > 0 && threshold < 1))
    throw invalid_argument("reconstruct: threshold must be in (0,1)");
  if (chunk_size < 1)
    throw invalid_argument("reconstruct: chunk_size must be >= 1");
  const model::ModelConfig& cfg = model.config();
  nn::NoGradGuard ng;

  Reconstruction rec;
  rec.transform = model::frame_normalization(frame, cfg.mode);
  model::FrameInput input =
      model::frame_to_input(frame, rec.transform, Mat3::identity(), cfg.mode);

  model::EncoderOutput enc = model.encode(input);
  rec.stats.encode_calls = 1;

  Vec3 lo, hi;
  cfg.query_range(lo, hi, granularity);
  const std::vector<Vec3> grid = geom::make_grid(lo, hi, granularity);
  rec.stats.queries_evaluated = static_cast<int64_t>(grid.size());
  rec.sigma.resize(grid.size());
  std::vector<Vec3> colors(grid.size());

  for (size_t begin = 0; begin < grid.size(); begin += chunk_size) {
    const size_t end = std::min(grid.size(), begin + chunk_size);
    model::DecoderOutput out = model.decode(
        enc, std::span<const Vec3>(grid.data() + begin, end - begin));
    ++rec.stats.decode_calls;
    const auto& occ = out.occupancy_logits.values();
    const auto& col = out.color_logits.values();
    for (size_t i = begin; i < end; ++i) {
      const double z = occ[i - begin];
      rec.sigma[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                            : std::exp(z) / (1.0 + std::exp(z));
      double rgb[3];
      for (int c = 0; c < 3; ++c) {
        const double* row =
            col.data() + ((i - begin) * 3 + c) * model::ModelConfig::color_bins;
        int best = 0;
        for (int b = 1; b < model::ModelConfig::color_bins; ++b)
          if (row[b] > row[best]) best = b;
        rgb[c] = geom::bin_color(best);
      }
      colors[i] = {rgb[0], rgb[1], rgb[2]};
    }
  }

  for (size_t i = 0; i < grid.size(); ++i) {
    if (rec.sigma[i] > threshold) {  // strictly greater
      rec.cloud.positions.push_back(grid[i]);
      rec.cloud.colors.push_back(colors[i]);
    }
  }
  return rec;
}

void export_ply(const PointCloud& cloud, const std::string& path) {
  if (cloud.has_colors() && cloud.colors.size() != cloud.positions.size())
    throw invalid_argument("export_ply: color count mismatch");
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw io_error("cannot open for writing: " + path);
  std::fprintf(f,
               "ply\n"
               "format ascii 1.0\n"
               "element vertex %zu\n"
               "property float x\n"
               "property float y\n"
               "property float z\n"
               "property uchar red\n"
               "property uchar green\n"
               "property uchar blue\n"
               "end_header\n",
               cloud.positions.size());
  for (size_t i = 0; i < cloud.positions.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    int r = 0, g = 0, b = 0;
    if (cloud.has_colors()) {
      r = geom::color_bin(cloud.colors[i].x);
      g = geom::color_bin(cloud.colors[i].y);
      b = geom::color_bin(cloud.colors[i].z);
    }
    std::fprintf(f, "%.9g %.9g %.9g %d %d %d\n", p.x, p.y, p.z, r, g, b);
  }
  if (std::fclose(f) != 0) throw io_error("write failed: " + path);
}

PointCloud import_ply(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open: " + path);
  auto fail = [&](int line, const std::string& why) {
    throw parse_error(path + ":" + std::to_string(line) + ": " + why);
  };
  std::string line;
  int ln = 0;
  auto next_line = [&]() {
    if (!std::getline(f, line)) fail(ln + 1, "unexpected end of file");
    ++ln;
  };
  next_line();
  if (line != "ply") fail(ln, "bad magic, expected 'ply'");
  next_line();
  if (line != "format ascii 1.0") fail(ln, "unsupported format line");
  next_line();
  size_t n = 0;
  if (std::sscanf(line.c_str(), "element vertex %zu", &n) != 1)
    fail(ln, "expected 'element vertex N'");
  const char* props[] = {"property float x",   "property float y",
                         "property float z",   "property uchar red",
                         "property uchar green", "property uchar blue"};
  for (const char* p : props) {
    next_line();
    if (line != p) fail(ln, std::string("expected '") + p + "'");
  }
  next_line();
  if (line != "end_header") fail(ln, "expected 'end_header'");
  PointCloud cloud;
  cloud.positions.reserve(n);
  cloud.colors.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    next_line();
    double x, y, z;
    int r, g, b;
    if (std::sscanf(line.c_str(), "%lf %lf %lf %d %d %d", &x, &y, &z, &r, &g,
                    &b) != 6)
      fail(ln, "malformed vertex line");
    if (r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255)
      fail(ln, "color component outside [0,255]");
    cloud.positions.push_back({x, y, z});
    cloud.colors.push_back(
        {geom::bin_color(r), geom::bin_color(g), geom::bin_color(b)});
  }
  return cloud;
}

}  // namespace mcc::infer
