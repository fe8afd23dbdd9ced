#pragma once

#include <memory>
#include <string>
#include <unordered_map>

#include "mcc/model.hpp"

namespace mcc::train {

struct TrainConfig {
  double lr = 1e-3;
  double warmup_frac = 0.05;
  int64_t total_steps = 2000;
  int batch_size = 1;
  uint64_t seed = 1;
  double scale_aug_min = 0.8;
  double scale_aug_max = 1.2;
  bool rotation_aug = true;
  double rotation_range_deg = 180.0;
  double color_loss_weight = 0.1;
  synth::SceneMode mode = synth::SceneMode::Object;
  int64_t log_interval = 50;
  int64_t checkpoint_interval = 0;  // 0 = final checkpoint only

  void validate() const;
};

// Object mode: uniform in [-3,3]^3. Scene mode: uniform in x,y in [-6,6],
// z in (0,6] (camera-view coordinates, in front of the camera).
std::vector<Vec3> sample_queries(Rng& rng, int n_q, synth::SceneMode mode);

struct AugmentResult {
  geom::RgbdFrame frame;
  geom::PointCloud gt;
  Mat3 rotation;
};
// Spatially rescales image and depth by a shared factor (depth values are
// untouched), draws one rotation, and applies it to the gt cloud. The same
// rotation must be applied to the seen points downstream.
AugmentResult augment(const geom::RgbdFrame& frame, const geom::PointCloud& gt,
                      Rng& rng, const TrainConfig& cfg);

struct LossValue {
  nn::Tensor total;
  double total_v = 0, occ_v = 0, color_v = 0;
};
LossValue compute_loss(const model::DecoderOutput& pred,
                       const geom::QueryBatch& labels, double lambda);

struct TrainExample {
  model::FrameInput input;
  std::vector<Vec3> queries;
  geom::QueryBatch labels;
};

// Scene bundles under a directory: either one bundle (scene.txt at the top
// level) or one subdirectory per bundle. Ground-truth clouds are cached.
class BundleDataset {
 public:
  explicit BundleDataset(const std::string& dir);

  size_t num_scenes() const { return dirs_.size(); }
  const std::string& scene_dir(size_t i) const { return dirs_[i]; }
  int num_frames(size_t scene) const;
  geom::RgbdFrame load_frame(size_t scene, int frame) const;
  // World-frame union cloud over all frames of the scene.
  const geom::PointCloud& gt_cloud(size_t scene) const;

  // Deterministically builds one training example.
  TrainExample make_example(Rng& rng, const TrainConfig& tc,
                            const model::ModelConfig& mc) const;

 private:
  std::vector<std::string> dirs_;
  mutable std::vector<int> frame_counts_;
  mutable std::unordered_map<size_t, geom::PointCloud> gt_cache_;
};

struct StepResult {
  double loss = 0, occ_loss = 0, color_loss = 0, lr = 0;
};
// One forward/backward/Adam update over a batch of examples.
StepResult train_step(model::MccModel& model,
                      std::span<const TrainExample> batch,
                      nn::AdamState& opt, const TrainConfig& tc, int64_t step);

struct TrainResult {
  double first_loss = 0;
  double final_loss = 0;
  int64_t steps_run = 0;
};
TrainResult train_loop(const std::string& data_dir, const TrainConfig& tc,
                       const model::ModelConfig& mc,
                       const std::string& ckpt_path,
                       const std::string& resume_path = "",
                       const std::string& log_path = "");

}  // namespace mcc::train
