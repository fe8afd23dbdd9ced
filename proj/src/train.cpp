#include "mcc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

namespace fs = std::filesystem;

namespace mcc::train {

using geom::PointCloud;
using geom::QueryBatch;
using geom::RgbdFrame;
using model::MccModel;
using model::ModelConfig;
using nn::Tensor;

void TrainConfig::validate() const {
  if (!(lr > 0)) throw invalid_argument("train config: lr must be > 0");
  if (!(warmup_frac >= 0 && warmup_frac < 1))
    throw invalid_argument("train config: warmup_frac outside [0,1)");
  if (total_steps < 1)
    throw invalid_argument("train config: total_steps must be >= 1");
  if (batch_size < 1)
    throw invalid_argument("train config: batch_size must be >= 1");
  if (!(scale_aug_min > 0) || scale_aug_max < scale_aug_min)
    throw invalid_argument("train config: invalid scale augmentation range");
  if (rotation_range_deg < 0 || rotation_range_deg > 180)
    throw invalid_argument("train config: rotation range outside [0,180]");
  if (color_loss_weight < 0)
    throw invalid_argument("train config: color_loss_weight must be >= 0");
  if (log_interval < 1)
    throw invalid_argument("train config: log_interval must be >= 1");
}

std::vector<Vec3> sample_queries(Rng& rng, int n_q, synth::SceneMode mode) {
  if (n_q < 1) throw invalid_argument("sample_queries: n_q must be >= 1");
  std::vector<Vec3> q(n_q);
  for (int i = 0; i < n_q; ++i) {
    if (mode == synth::SceneMode::Object) {
      const double x = rng.uniform(-3, 3), y = rng.uniform(-3, 3);
      q[i] = {x, y, rng.uniform(-3, 3)};
    } else {
      const double x = rng.uniform(-6, 6), y = rng.uniform(-6, 6);
      double z = rng.uniform(0, 6);
      while (z == 0.0) z = rng.uniform(0, 6);  // z strictly positive
      q[i] = {x, y, z};
    }
  }
  return q;
}

namespace {

// Spatial resize: bilinear for the image, nearest for depth (values kept).
RgbdFrame rescale_frame(const RgbdFrame& in, double s) {
  const int S = in.width();
  const int ns = std::max(1, static_cast<int>(std::lround(s * S)));
  std::vector<double> img(static_cast<size_t>(ns) * ns * 3);
  std::vector<double> dep(static_cast<size_t>(ns) * ns);
  const double inv = static_cast<double>(S) / ns;
  for (int v = 0; v < ns; ++v) {
    for (int u = 0; u < ns; ++u) {
      const double sy = (v + 0.5) * inv - 0.5;
      const double sx = (u + 0.5) * inv - 0.5;
      const int y0 = static_cast<int>(std::floor(sy));
      const int x0 = static_cast<int>(std::floor(sx));
      const double fy = sy - y0, fx = sx - x0;
      auto clamp = [S](int a) { return std::clamp(a, 0, S - 1); };
      const int y0c = clamp(y0), y1c = clamp(y0 + 1);
      const int x0c = clamp(x0), x1c = clamp(x0 + 1);
      for (int c = 0; c < 3; ++c) {
        const double v00 = in.image[(static_cast<size_t>(y0c) * S + x0c) * 3 + c];
        const double v01 = in.image[(static_cast<size_t>(y0c) * S + x1c) * 3 + c];
        const double v10 = in.image[(static_cast<size_t>(y1c) * S + x0c) * 3 + c];
        const double v11 = in.image[(static_cast<size_t>(y1c) * S + x1c) * 3 + c];
        img[(static_cast<size_t>(v) * ns + u) * 3 + c] =
            (1 - fy) * ((1 - fx) * v00 + fx * v01) +
            fy * ((1 - fx) * v10 + fx * v11);
      }
      const int yn = clamp(static_cast<int>(std::lround(sy)));
      const int xn = clamp(static_cast<int>(std::lround(sx)));
      dep[static_cast<size_t>(v) * ns + u] =
          in.depth[static_cast<size_t>(yn) * S + xn];
    }
  }
  // Center crop / pad back to S x S.
  RgbdFrame out;
  out.intrinsics = in.intrinsics;
  out.pose = in.pose;
  out.image.assign(static_cast<size_t>(S) * S * 3, 0.0);
  out.depth.assign(static_cast<size_t>(S) * S,
                   std::numeric_limits<double>::quiet_NaN());
  const int off = (ns - S) / 2;
  for (int v = 0; v < S; ++v) {
    const int sv = v + off;
    if (sv < 0 || sv >= ns) continue;
    for (int u = 0; u < S; ++u) {
      const int su = u + off;
      if (su < 0 || su >= ns) continue;
      for (int c = 0; c < 3; ++c)
        out.image[(static_cast<size_t>(v) * S + u) * 3 + c] =
            img[(static_cast<size_t>(sv) * ns + su) * 3 + c];
      out.depth[static_cast<size_t>(v) * S + u] =
          dep[static_cast<size_t>(sv) * ns + su];
    }
  }
  return out;
}

}  // namespace

AugmentResult augment(const RgbdFrame& frame, const PointCloud& gt, Rng& rng,
                      const TrainConfig& cfg) {
  AugmentResult out;
  const double s = rng.uniform(cfg.scale_aug_min, cfg.scale_aug_max);
  out.frame = (s == 1.0 && cfg.scale_aug_min == cfg.scale_aug_max)
                  ? frame
                  : rescale_frame(frame, s);
  out.rotation = cfg.rotation_aug
                     ? geom::random_rotation(rng, -cfg.rotation_range_deg,
                                             cfg.rotation_range_deg)
                     : Mat3::identity();
  out.gt.positions.reserve(gt.size());
  for (const Vec3& p : gt.positions) out.gt.positions.push_back(out.rotation * p);
  out.gt.colors = gt.colors;
  return out;
}

LossValue compute_loss(const model::DecoderOutput& pred,
                       const QueryBatch& labels, double lambda) {
  const int64_t n = pred.occupancy_logits.numel();
  if (static_cast<int64_t>(labels.occupied.size()) != n)
    throw invalid_argument("compute_loss: label count mismatch");
  std::vector<double> targets(n);
  for (int64_t i = 0; i < n; ++i) targets[i] = labels.occupied[i] ? 1.0 : 0.0;
  LossValue lv;
  Tensor occ = nn::bce_with_logits(pred.occupancy_logits, targets);
  lv.occ_v = occ.item();
  std::vector<int64_t> rows;
  std::vector<int> classes;
  for (int64_t i = 0; i < n; ++i) {
    if (!labels.occupied[i]) continue;
    for (int c = 0; c < 3; ++c) {
      rows.push_back(3 * i + c);
      classes.push_back(labels.color_bins[i][c]);
    }
  }
  if (lambda > 0 && !rows.empty()) {
    Tensor flat =
        nn::reshape(pred.color_logits, {3 * n, ModelConfig::color_bins});
    Tensor ce = nn::softmax_cross_entropy(nn::select_rows(flat, rows), classes);
    lv.color_v = ce.item();
    lv.total = nn::add(occ, nn::scale(ce, lambda));
  } else {
    lv.total = occ;
  }
  lv.total_v = lv.total.item();
  return lv;
}

BundleDataset::BundleDataset(const std::string& dir) {
  if (!fs::exists(dir)) throw io_error("data directory not found: " + dir);
  if (fs::exists(fs::path(dir) / "scene.txt")) {
    dirs_.push_back(dir);
  } else {
    std::vector<std::string> subs;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory() && fs::exists(e.path() / "scene.txt"))
        subs.push_back(e.path().string());
    std::sort(subs.begin(), subs.end());
    dirs_ = std::move(subs);
  }
  if (dirs_.empty())
    throw io_error("no scene bundles found under: " + dir);
  frame_counts_.assign(dirs_.size(), -1);
}

int BundleDataset::num_frames(size_t scene) const {
  if (frame_counts_[scene] < 0)
    frame_counts_[scene] = synth::count_frames(dirs_[scene]);
  return frame_counts_[scene];
}

RgbdFrame BundleDataset::load_frame(size_t scene, int frame) const {
  return synth::read_frame(dirs_[scene], frame);
}

const PointCloud& BundleDataset::gt_cloud(size_t scene) const {
  auto it = gt_cache_.find(scene);
  if (it != gt_cache_.end()) return it->second;
  synth::Bundle b = synth::read_bundle(dirs_[scene]);
  PointCloud cloud = geom::build_gt_cloud(b.frames);
  return gt_cache_.emplace(scene, std::move(cloud)).first->second;
}

TrainExample BundleDataset::make_example(Rng& rng, const TrainConfig& tc,
                                         const ModelConfig& mc) const {
  const size_t scene = static_cast<size_t>(rng.uniform_int(num_scenes()));
  const int frame_idx = static_cast<int>(rng.uniform_int(num_frames(scene)));
  RgbdFrame frame = load_frame(scene, frame_idx);
  const geom::NormalizationTransform t =
      model::frame_normalization(frame, tc.mode);

  PointCloud gt_norm;
  const PointCloud& gt_world = gt_cloud(scene);
  gt_norm.positions.reserve(gt_world.size());
  if (tc.mode == synth::SceneMode::Object) {
    for (const Vec3& p : gt_world.positions)
      gt_norm.positions.push_back(t.apply(p));
  } else {
    const geom::Pose cam_from_world = frame.pose.inverse();
    for (const Vec3& p : gt_world.positions)
      gt_norm.positions.push_back(t.apply(cam_from_world.apply(p)));
  }
  gt_norm.colors = gt_world.colors;

  AugmentResult aug = augment(frame, gt_norm, rng, tc);
  TrainExample ex;
  ex.input = model::frame_to_input(aug.frame, t, aug.rotation, tc.mode);
  ex.queries = sample_queries(rng, mc.n_queries_train, tc.mode);
  geom::LabelResult lab = geom::label_queries(ex.queries, aug.gt, mc.tau);
  ex.labels.points = ex.queries;
  ex.labels.occupied = std::move(lab.occupied);
  ex.labels.color_bins = std::move(lab.color_bins);
  return ex;
}

StepResult train_step(MccModel& model, std::span<const TrainExample> batch,
                      nn::AdamState& opt, const TrainConfig& tc, int64_t step) {
  if (batch.empty()) throw invalid_argument("train_step: empty batch");
  StepResult res;
  res.lr = nn::cosine_lr(step, tc.total_steps, tc.warmup_frac, tc.lr);
  model.params().zero_grads();
  Tensor total;
  for (const TrainExample& ex : batch) {
    model::EncoderOutput enc = model.encode(ex.input);
    model::DecoderOutput dec = model.decode(enc, ex.queries);
    LossValue lv = compute_loss(dec, ex.labels, tc.color_loss_weight);
    res.loss += lv.total_v;
    res.occ_loss += lv.occ_v;
    res.color_loss += lv.color_v;
    total = total.defined() ? nn::add(total, lv.total) : lv.total;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  res.loss *= inv;
  res.occ_loss *= inv;
  res.color_loss *= inv;
  if (batch.size() > 1) total = nn::scale(total, inv);
  if (!std::isfinite(res.loss))
    throw numeric_error("train_step: non-finite loss at step " +
                        std::to_string(step) + " (loss=" +
                        std::to_string(res.loss) + ")");
  total.backward();
  nn::adam_step(model.params(), opt, res.lr);
  return res;
}

TrainResult train_loop(const std::string& data_dir, const TrainConfig& tc,
                       const ModelConfig& mc, const std::string& ckpt_path,
                       const std::string& resume_path,
                       const std::string& log_path) {
  tc.validate();
  mc.validate();
  if (tc.mode != mc.mode)
    throw invalid_argument("train_loop: train and model mode differ");
  BundleDataset data(data_dir);

  MccModel model = MccModel::init(mc, tc.seed);
  nn::AdamState opt;
  if (!resume_path.empty()) {
    model::ModelCheckpoint ck = model::load_model_checkpoint(resume_path);
    const auto diffs = ModelConfig::diff_fields(ck.model.config(), mc);
    if (!diffs.empty()) {
      std::string msg = "resume checkpoint does not match configuration:";
      for (const auto& d : diffs) msg += " " + d;
      throw invalid_argument(msg);
    }
    model = std::move(ck.model);
    opt = std::move(ck.opt);
  }

  const std::string log_file =
      log_path.empty() ? ckpt_path + ".log.csv" : log_path;
  const bool append = !resume_path.empty() && fs::exists(log_file);
  std::FILE* log = std::fopen(log_file.c_str(), append ? "a" : "w");
  if (!log) throw io_error("cannot open loss log: " + log_file);
  struct Closer {
    std::FILE* f;
    ~Closer() { if (f) std::fclose(f); }
  } closer{log};

  TrainResult result;
  const int64_t start = opt.step;
  if (start >= tc.total_steps)
    throw invalid_argument("train_loop: checkpoint already at or past "
                           "total_steps");
  std::vector<TrainExample> batch;
  for (int64_t step = start; step < tc.total_steps; ++step) {
    batch.clear();
    for (int b = 0; b < tc.batch_size; ++b) {
      Rng rng(seed_stream(tc.seed ^ splitmix64(0x57e9 + static_cast<uint64_t>(step)),
                          static_cast<uint64_t>(b)));
      batch.push_back(data.make_example(rng, tc, mc));
    }
    StepResult sr = train_step(model, batch, opt, tc, step);
    if (step == start) result.first_loss = sr.loss;
    result.final_loss = sr.loss;
    ++result.steps_run;
    if ((step + 1) % tc.log_interval == 0) {
      std::fprintf(log, "%lld,%.17g,%.17g,%.17g,%.17g\n",
                   static_cast<long long>(step + 1), sr.lr, sr.loss,
                   sr.occ_loss, sr.color_loss);
      std::fflush(log);
    }
    if (tc.checkpoint_interval > 0 && (step + 1) % tc.checkpoint_interval == 0)
      model::save_model_checkpoint(ckpt_path, model, opt);
  }
  model::save_model_checkpoint(ckpt_path, model, opt);
  return result;
}

}  // namespace mcc::train
