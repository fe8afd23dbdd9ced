#pragma once

#include "mcc/geometry.hpp"
#include "mcc/ops.hpp"
#include "mcc/optim.hpp"
#include "mcc/synthdata.hpp"

namespace mcc::model {

enum class Conditioning { Detailed, Global };
enum class DecoderMode { ConcatAttn, CrossAttn };

struct ModelConfig {
  int image_size = 64;
  int patch_size = 8;
  int enc_dim = 64;
  int enc_layers = 2;
  int enc_heads = 4;
  int dec_dim = 64;
  int dec_layers = 2;
  int dec_heads = 4;
  bool use_rgb = true;
  Conditioning conditioning = Conditioning::Detailed;
  DecoderMode decoder_mode = DecoderMode::ConcatAttn;
  int n_queries_train = 128;
  double tau = 0.1;
  double occupancy_threshold = 0.1;
  synth::SceneMode mode = synth::SceneMode::Object;
  static constexpr int color_bins = 256;

  // MLP widths relative to the embedding dim.
  static constexpr int enc_mlp_ratio = 4;
  static constexpr int patch_mlp_ratio = 2;
  static constexpr int dec_mlp_ratio = 4;

  int n_patches() const {
    const int s = image_size / patch_size;
    return s * s;
  }
  int n_enc_tokens() const { return n_patches() + 1; }  // + global token
  void query_range(Vec3& lo, Vec3& hi, double granularity = 0.0) const;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;

  static ModelConfig desk();
  static ModelConfig paper();

  // Field-by-field differences, for checkpoint/config mismatch reporting.
  static std::vector<std::string> diff_fields(const ModelConfig& a,
                                              const ModelConfig& b);

  nn::Tensor to_meta() const;
  static ModelConfig from_meta(const nn::Tensor& t);
};

// Per-frame model input: the image plus the aligned seen-point map in the
// (normalized, possibly rotated) model coordinate frame.
struct FrameInput {
  int image_size = 0;
  std::vector<double> image;    // H*W*3
  std::vector<Vec3> points;     // H*W, meaningful where valid
  std::vector<uint8_t> valid;   // H*W
};

struct EncoderOutput {
  nn::Tensor R;  // [n_enc_tokens, enc_dim]
};

struct DecoderOutput {
  nn::Tensor occupancy_logits;  // [n_q]
  nn::Tensor color_logits;      // [n_q, 3, 256]
};

// Token order [global, encoder tokens, query tokens]; a token may attend to
// the global token and any encoder token, and to a query token only if it is
// that query itself.
nn::AttnMask build_decoder_mask(int64_t n_enc, int64_t n_q);

struct Prediction {
  std::vector<double> sigma;
  std::vector<Vec3> colors;
};

class MccModel {
 public:
  static MccModel init(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  nn::Tensor patch_embed_rgb(const FrameInput& in) const;
  nn::Tensor patch_embed_xyz(const FrameInput& in) const;
  EncoderOutput encode(const FrameInput& in) const;
  DecoderOutput decode(const EncoderOutput& R,
                       std::span<const Vec3> queries) const;
  Prediction predict(const FrameInput& in, std::span<const Vec3> queries) const;

 private:
  ModelConfig cfg_;
  nn::ParamStore params_;
};

// Model checkpoints: the nn checkpoint format with the configuration stored
// as an extra "__config__" record.
void save_model_checkpoint(const std::string& path, const MccModel& model,
                           const nn::AdamState& opt);
struct ModelCheckpoint {
  MccModel model;
  nn::AdamState opt;
};
ModelCheckpoint load_model_checkpoint(const std::string& path);

// Seen-cloud normalization shared by training and inference: object mode
// recenters and rescales by the seen points; scene mode keeps the camera at
// the origin (camera-frame coordinates, isotropic scale only).
geom::NormalizationTransform frame_normalization(const geom::RgbdFrame& frame,
                                                 synth::SceneMode mode);

// Assembles the model input from a frame: unprojection (world frame for
// object mode, camera frame for scene mode), normalization, then rotation.
FrameInput frame_to_input(const geom::RgbdFrame& frame,
                          const geom::NormalizationTransform& t,
                          const Mat3& rotation, synth::SceneMode mode);

}  // namespace mcc::model
