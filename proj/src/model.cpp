#include "mcc/model.hpp"

#include <algorithm>
#include <cmath>

namespace mcc::model {

using nn::AttnMask;
using nn::ParamStore;
using nn::Tensor;

void ModelConfig::query_range(Vec3& lo, Vec3& hi, double granularity) const {
  if (mode == synth::SceneMode::Object) {
    lo = {-3, -3, -3};
    hi = {3, 3, 3};
  } else {
    // in front of the camera only: z starts at one lattice step
    lo = {-6, -6, granularity > 0 ? granularity : 1e-6};
    hi = {6, 6, 6};
  }
}

void ModelConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
    throw invalid_argument("config: image_size must be divisible by patch_size");
  if (enc_dim <= 0 || enc_heads <= 0 || enc_dim % enc_heads != 0)
    throw invalid_argument("config: enc_dim must be divisible by enc_heads");
  if (dec_dim <= 0 || dec_heads <= 0 || dec_dim % dec_heads != 0)
    throw invalid_argument("config: dec_dim must be divisible by dec_heads");
  if (enc_layers < 1 || dec_layers < 1)
    throw invalid_argument("config: need at least one layer per stack");
  if (n_queries_train < 1)
    throw invalid_argument("config: n_queries_train must be >= 1");
  if (!(tau > 0)) throw invalid_argument("config: tau must be > 0");
  if (!(occupancy_threshold > 0 && occupancy_threshold < 1))
    throw invalid_argument("config: occupancy_threshold must be in (0,1)");
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.image_size = 224;
  c.patch_size = 16;
  c.enc_dim = 768;
  c.enc_layers = 12;
  c.enc_heads = 12;
  c.dec_dim = 512;
  c.dec_layers = 8;
  c.dec_heads = 16;
  c.n_queries_train = 550;
  return c;
}

std::vector<std::string> ModelConfig::diff_fields(const ModelConfig& a,
                                                  const ModelConfig& b) {
  std::vector<std::string> out;
  auto cmp = [&](auto x, auto y, const char* name) {
    if (!(x == y)) out.push_back(name);
  };
  cmp(a.image_size, b.image_size, "image_size");
  cmp(a.patch_size, b.patch_size, "patch_size");
  cmp(a.enc_dim, b.enc_dim, "enc_dim");
  cmp(a.enc_layers, b.enc_layers, "enc_layers");
  cmp(a.enc_heads, b.enc_heads, "enc_heads");
  cmp(a.dec_dim, b.dec_dim, "dec_dim");
  cmp(a.dec_layers, b.dec_layers, "dec_layers");
  cmp(a.dec_heads, b.dec_heads, "dec_heads");
  cmp(a.use_rgb, b.use_rgb, "use_rgb");
  cmp(static_cast<int>(a.conditioning), static_cast<int>(b.conditioning),
      "conditioning");
  cmp(static_cast<int>(a.decoder_mode), static_cast<int>(b.decoder_mode),
      "decoder_mode");
  cmp(a.n_queries_train, b.n_queries_train, "n_queries_train");
  cmp(a.tau, b.tau, "tau");
  cmp(a.occupancy_threshold, b.occupancy_threshold, "occupancy_threshold");
  cmp(static_cast<int>(a.mode), static_cast<int>(b.mode), "mode");
  return out;
}

Tensor ModelConfig::to_meta() const {
  std::vector<double> v = {
      1.0,  // layout version
      static_cast<double>(image_size),
      static_cast<double>(patch_size),
      static_cast<double>(enc_dim),
      static_cast<double>(enc_layers),
      static_cast<double>(enc_heads),
      static_cast<double>(dec_dim),
      static_cast<double>(dec_layers),
      static_cast<double>(dec_heads),
      use_rgb ? 1.0 : 0.0,
      static_cast<double>(static_cast<int>(conditioning)),
      static_cast<double>(static_cast<int>(decoder_mode)),
      static_cast<double>(n_queries_train),
      tau,
      occupancy_threshold,
      static_cast<double>(static_cast<int>(mode))};
  return Tensor::from({static_cast<int64_t>(v.size())}, std::move(v));
}

ModelConfig ModelConfig::from_meta(const Tensor& t) {
  const auto& v = t.values();
  if (v.size() != 16 || v[0] != 1.0)
    throw parse_error("unrecognized model configuration record");
  ModelConfig c;
  c.image_size = static_cast<int>(v[1]);
  c.patch_size = static_cast<int>(v[2]);
  c.enc_dim = static_cast<int>(v[3]);
  c.enc_layers = static_cast<int>(v[4]);
  c.enc_heads = static_cast<int>(v[5]);
  c.dec_dim = static_cast<int>(v[6]);
  c.dec_layers = static_cast<int>(v[7]);
  c.dec_heads = static_cast<int>(v[8]);
  c.use_rgb = v[9] != 0.0;
  c.conditioning = static_cast<Conditioning>(static_cast<int>(v[10]));
  c.decoder_mode = static_cast<DecoderMode>(static_cast<int>(v[11]));
  c.n_queries_train = static_cast<int>(v[12]);
  // tau/threshold round-trip through f32 in the checkpoint
  c.tau = static_cast<double>(static_cast<float>(v[13]));
  c.occupancy_threshold = static_cast<double>(static_cast<float>(v[14]));
  c.mode = static_cast<synth::SceneMode>(static_cast<int>(v[15]));
  return c;
}

AttnMask build_decoder_mask(int64_t n_enc, int64_t n_q) {
  if (n_enc < 1 || n_q < 1)
    throw invalid_argument("build_decoder_mask: need n_enc, n_q >= 1");
  const int64_t t = 1 + n_enc + n_q;
  AttnMask mask{t, t, std::vector<uint8_t>(static_cast<size_t>(t * t), 0)};
  for (int64_t i = 0; i < t; ++i) {
    for (int64_t j = 0; j < t; ++j) {
      const bool j_is_query = j > n_enc;
      mask.set(i, j, !j_is_query || i == j);
    }
  }
  return mask;
}

namespace {

// ---- parameter construction -------------------------------------------------

void add_trunc_normal(ParamStore& ps, const std::string& name, nn::Shape shape,
                      Rng& rng, double sigma = 0.02) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.raw_values()) v = rng.trunc_normal(sigma);
  ps.add(name, std::move(t));
}

void add_zeros(ParamStore& ps, const std::string& name, nn::Shape shape) {
  ps.add(name, Tensor::zeros(std::move(shape)));
}

void add_layer_norm(ParamStore& ps, const std::string& prefix, int64_t d) {
  ps.add(prefix + ".g", Tensor::full({d}, 1.0));
  ps.add(prefix + ".b", Tensor::zeros({d}));
}

void add_mha(ParamStore& ps, const std::string& prefix, int64_t d, Rng& rng) {
  for (const char* w : {"Wq", "Wk", "Wv", "Wo"})
    add_trunc_normal(ps, prefix + "." + w, {d, d}, rng);
  for (const char* b : {"bq", "bk", "bv", "bo"})
    add_zeros(ps, prefix + "." + b, {d});
}

void add_block(ParamStore& ps, const std::string& prefix, int64_t d,
               int64_t hidden, Rng& rng) {
  add_layer_norm(ps, prefix + ".ln1", d);
  add_mha(ps, prefix + ".attn", d, rng);
  add_layer_norm(ps, prefix + ".ln2", d);
  add_trunc_normal(ps, prefix + ".mlp.W1", {d, hidden}, rng);
  add_zeros(ps, prefix + ".mlp.b1", {hidden});
  add_trunc_normal(ps, prefix + ".mlp.W2", {hidden, d}, rng);
  add_zeros(ps, prefix + ".mlp.b2", {d});
}

// ---- forward helpers --------------------------------------------------------

Tensor apply_ln(const ParamStore& ps, const std::string& prefix,
                const Tensor& x) {
  return nn::layer_norm(x, ps.get(prefix + ".g"), ps.get(prefix + ".b"));
}

Tensor apply_mha(const ParamStore& ps, const std::string& prefix,
                 const Tensor& xq, const Tensor& xkv, const AttnMask* mask,
                 int heads) {
  Tensor q = nn::linear(xq, ps.get(prefix + ".Wq"), ps.get(prefix + ".bq"));
  Tensor k = nn::linear(xkv, ps.get(prefix + ".Wk"), ps.get(prefix + ".bk"));
  Tensor v = nn::linear(xkv, ps.get(prefix + ".Wv"), ps.get(prefix + ".bv"));
  Tensor o = nn::masked_attention(q, k, v, mask, heads);
  return nn::linear(o, ps.get(prefix + ".Wo"), ps.get(prefix + ".bo"));
}

Tensor apply_mlp(const ParamStore& ps, const std::string& prefix,
                 const Tensor& x) {
  Tensor h = nn::gelu(
      nn::linear(x, ps.get(prefix + ".W1"), ps.get(prefix + ".b1")));
  return nn::linear(h, ps.get(prefix + ".W2"), ps.get(prefix + ".b2"));
}

// Pre-norm transformer block (self-attention).
Tensor apply_block(const ParamStore& ps, const std::string& prefix,
                   const Tensor& x, const AttnMask* mask, int heads) {
  Tensor n1 = apply_ln(ps, prefix + ".ln1", x);
  Tensor y = nn::add(x, apply_mha(ps, prefix + ".attn", n1, n1, mask, heads));
  Tensor n2 = apply_ln(ps, prefix + ".ln2", y);
  return nn::add(y, apply_mlp(ps, prefix + ".mlp", n2));
}

// Cross-attention block: queries read from fixed kv, never from each other.
Tensor apply_cross_block(const ParamStore& ps, const std::string& prefix,
                         const Tensor& x, const Tensor& kv, int heads) {
  Tensor n1 = apply_ln(ps, prefix + ".ln1", x);
  Tensor y =
      nn::add(x, apply_mha(ps, prefix + ".attn", n1, kv, nullptr, heads));
  Tensor n2 = apply_ln(ps, prefix + ".ln2", y);
  return nn::add(y, apply_mlp(ps, prefix + ".mlp", n2));
}

Tensor run_tower(const ParamStore& ps, const std::string& prefix,
                 const Tensor& patch_tokens, const ModelConfig& cfg) {
  Tensor cls = nn::reshape(ps.get(prefix + ".cls"), {1, cfg.enc_dim});
  Tensor x = nn::concat(cls, patch_tokens, 0);
  x = nn::add(x, ps.get(prefix + ".pos"));
  for (int l = 0; l < cfg.enc_layers; ++l)
    x = apply_block(ps, prefix + ".enc." + std::to_string(l), x, nullptr,
                    cfg.enc_heads);
  return apply_ln(ps, prefix + ".final_ln", x);
}

}  // namespace

MccModel MccModel::init(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  MccModel m;
  m.cfg_ = cfg;
  Rng rng(seed_stream(seed, 0x1417));
  ParamStore& ps = m.params_;
  const int64_t C = cfg.enc_dim, D = cfg.dec_dim;
  const int64_t P1 = cfg.n_enc_tokens();
  const int64_t p2 = static_cast<int64_t>(cfg.patch_size) * cfg.patch_size;

  if (cfg.use_rgb) {
    add_trunc_normal(ps, "rgb.patch.W", {3 * p2, C}, rng);
    add_zeros(ps, "rgb.patch.b", {C});
    add_trunc_normal(ps, "rgb.cls", {C}, rng);
    add_trunc_normal(ps, "rgb.pos", {P1, C}, rng);
    for (int l = 0; l < cfg.enc_layers; ++l)
      add_block(ps, "rgb.enc." + std::to_string(l), C,
                C * ModelConfig::enc_mlp_ratio, rng);
    add_layer_norm(ps, "rgb.final_ln", C);
  }

  add_trunc_normal(ps, "xyz.pix.W", {3, C}, rng);
  add_zeros(ps, "xyz.pix.b", {C});
  add_trunc_normal(ps, "xyz.unknown", {C}, rng);
  add_trunc_normal(ps, "xyz.readout", {C}, rng);
  add_block(ps, "xyz.patch", C, C * ModelConfig::patch_mlp_ratio, rng);
  add_trunc_normal(ps, "xyz.cls", {C}, rng);
  add_trunc_normal(ps, "xyz.pos", {P1, C}, rng);
  for (int l = 0; l < cfg.enc_layers; ++l)
    add_block(ps, "xyz.enc." + std::to_string(l), C,
              C * ModelConfig::enc_mlp_ratio, rng);
  add_layer_norm(ps, "xyz.final_ln", C);

  add_trunc_normal(ps, "fuse.W", {cfg.use_rgb ? 2 * C : C, C}, rng);
  add_zeros(ps, "fuse.b", {C});

  add_trunc_normal(ps, "dec.query.W", {3, C}, rng);
  add_zeros(ps, "dec.query.b", {C});
  add_trunc_normal(ps, "dec.cls", {C}, rng);
  add_trunc_normal(ps, "dec.proj.W", {C, D}, rng);
  add_zeros(ps, "dec.proj.b", {D});
  for (int l = 0; l < cfg.dec_layers; ++l)
    add_block(ps, "dec." + std::to_string(l), D,
              D * ModelConfig::dec_mlp_ratio, rng);
  add_layer_norm(ps, "dec.final_ln", D);

  add_trunc_normal(ps, "head.occ.W", {D, 1}, rng);
  add_zeros(ps, "head.occ.b", {1});
  add_trunc_normal(ps, "head.color.W", {D, 3 * ModelConfig::color_bins}, rng);
  add_zeros(ps, "head.color.b", {3 * ModelConfig::color_bins});
  return m;
}

Tensor MccModel::patch_embed_rgb(const FrameInput& in) const {
  const int s = cfg_.image_size, p = cfg_.patch_size;
  if (in.image_size != s ||
      in.image.size() != static_cast<size_t>(s) * s * 3)
    throw invalid_argument("patch_embed_rgb: input size mismatch");
  const int np = s / p;
  const int64_t row_len = static_cast<int64_t>(p) * p * 3;
  std::vector<double> rows(static_cast<size_t>(np) * np * row_len);
  for (int pi = 0; pi < np; ++pi)
    for (int pj = 0; pj < np; ++pj) {
      double* dst = rows.data() + (static_cast<int64_t>(pi) * np + pj) * row_len;
      for (int a = 0; a < p; ++a)
        for (int b = 0; b < p; ++b) {
          const size_t px = (static_cast<size_t>(pi * p + a) * s + pj * p + b) * 3;
          *dst++ = in.image[px];
          *dst++ = in.image[px + 1];
          *dst++ = in.image[px + 2];
        }
    }
  Tensor x = Tensor::from({static_cast<int64_t>(np) * np, row_len},
                          std::move(rows));
  return nn::linear(x, params_.get("rgb.patch.W"), params_.get("rgb.patch.b"));
}

Tensor MccModel::patch_embed_xyz(const FrameInput& in) const {
  const int s = cfg_.image_size, p = cfg_.patch_size;
  if (in.image_size != s ||
      in.points.size() != static_cast<size_t>(s) * s ||
      in.valid.size() != in.points.size())
    throw invalid_argument("patch_embed_xyz: input size mismatch");
  const int64_t npx = static_cast<int64_t>(s) * s;
  // Coordinates of invalid pixels are zeroed before the linear map so the
  // output cannot depend on whatever garbage they hold.
  std::vector<double> coords(static_cast<size_t>(npx) * 3, 0.0);
  for (int64_t i = 0; i < npx; ++i) {
    if (!in.valid[i]) continue;
    coords[3 * i] = in.points[i].x;
    coords[3 * i + 1] = in.points[i].y;
    coords[3 * i + 2] = in.points[i].z;
  }
  Tensor pix = nn::linear(Tensor::from({npx, 3}, std::move(coords)),
                          params_.get("xyz.pix.W"), params_.get("xyz.pix.b"));
  pix = nn::where_rows(in.valid, pix, params_.get("xyz.unknown"));

  // Regroup pixel tokens by patch.
  const int np = s / p;
  const int64_t n_patches = static_cast<int64_t>(np) * np;
  const int64_t p2 = static_cast<int64_t>(p) * p;
  std::vector<int64_t> perm(n_patches * p2);
  int64_t w = 0;
  for (int pi = 0; pi < np; ++pi)
    for (int pj = 0; pj < np; ++pj)
      for (int a = 0; a < p; ++a)
        for (int b = 0; b < p; ++b)
          perm[w++] = static_cast<int64_t>(pi * p + a) * s + pj * p + b;
  Tensor grouped =
      nn::reshape(nn::select_rows(pix, perm), {n_patches, p2, cfg_.enc_dim});
  Tensor readout = nn::tile_token(params_.get("xyz.readout"), n_patches);
  Tensor tokens = nn::concat(readout, grouped, 1);  // [P, p2+1, C]
  tokens = apply_block(params_, "xyz.patch", tokens, nullptr, cfg_.enc_heads);
  return nn::take_token(tokens, 0);  // [P, C]
}

EncoderOutput MccModel::encode(const FrameInput& in) const {
  Tensor xyz = run_tower(params_, "xyz", patch_embed_xyz(in), cfg_);
  Tensor fused;
  if (cfg_.use_rgb) {
    Tensor rgb = run_tower(params_, "rgb", patch_embed_rgb(in), cfg_);
    fused = nn::concat(rgb, xyz, 1);  // channel concat -> [P+1, 2C]
  } else {
    fused = xyz;
  }
  return {nn::linear(fused, params_.get("fuse.W"), params_.get("fuse.b"))};
}

DecoderOutput MccModel::decode(const EncoderOutput& enc,
                               std::span<const Vec3> queries) const {
  const int64_t n_q = static_cast<int64_t>(queries.size());
  if (n_q < 1) throw invalid_argument("decode: empty query set");
  std::vector<double> qdata(static_cast<size_t>(n_q) * 3);
  for (int64_t i = 0; i < n_q; ++i) {
    if (!queries[i].finite())
      throw invalid_argument("decode: non-finite query point");
    qdata[3 * i] = queries[i].x;
    qdata[3 * i + 1] = queries[i].y;
    qdata[3 * i + 2] = queries[i].z;
  }
  Tensor q_emb = nn::linear(Tensor::from({n_q, 3}, std::move(qdata)),
                            params_.get("dec.query.W"),
                            params_.get("dec.query.b"));
  Tensor r = enc.R;
  if (cfg_.conditioning == Conditioning::Global) r = nn::mean_rows(r);
  const int64_t n_enc = r.dim(0);

  Tensor q_rows;
  if (cfg_.decoder_mode == DecoderMode::ConcatAttn) {
    Tensor cls = nn::reshape(params_.get("dec.cls"), {1, cfg_.enc_dim});
    const Tensor parts[] = {cls, r, q_emb};
    Tensor x = nn::linear(nn::concat(std::span<const Tensor>(parts, 3), 0),
                          params_.get("dec.proj.W"), params_.get("dec.proj.b"));
    const AttnMask mask = build_decoder_mask(n_enc, n_q);
    for (int l = 0; l < cfg_.dec_layers; ++l)
      x = apply_block(params_, "dec." + std::to_string(l), x, &mask,
                      cfg_.dec_heads);
    x = apply_ln(params_, "dec.final_ln", x);
    std::vector<int64_t> idx(n_q);
    for (int64_t i = 0; i < n_q; ++i) idx[i] = 1 + n_enc + i;
    q_rows = nn::select_rows(x, idx);
  } else {
    Tensor kv = nn::linear(r, params_.get("dec.proj.W"),
                           params_.get("dec.proj.b"));
    Tensor x = nn::linear(q_emb, params_.get("dec.proj.W"),
                          params_.get("dec.proj.b"));
    for (int l = 0; l < cfg_.dec_layers; ++l)
      x = apply_cross_block(params_, "dec." + std::to_string(l), x, kv,
                            cfg_.dec_heads);
    q_rows = apply_ln(params_, "dec.final_ln", x);
  }

  DecoderOutput out;
  out.occupancy_logits = nn::reshape(
      nn::linear(q_rows, params_.get("head.occ.W"), params_.get("head.occ.b")),
      {n_q});
  out.color_logits = nn::reshape(
      nn::linear(q_rows, params_.get("head.color.W"),
                 params_.get("head.color.b")),
      {n_q, 3, ModelConfig::color_bins});
  return out;
}

Prediction MccModel::predict(const FrameInput& in,
                             std::span<const Vec3> queries) const {
  nn::NoGradGuard ng;
  EncoderOutput enc = encode(in);
  DecoderOutput dec = decode(enc, queries);
  Prediction pred;
  const int64_t n = dec.occupancy_logits.numel();
  pred.sigma.resize(n);
  pred.colors.resize(n);
  const auto& occ = dec.occupancy_logits.values();
  const auto& col = dec.color_logits.values();
  for (int64_t i = 0; i < n; ++i) {
    const double z = occ[i];
    pred.sigma[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                           : std::exp(z) / (1.0 + std::exp(z));
    double rgb[3];
    for (int c = 0; c < 3; ++c) {
      const double* row = col.data() + (i * 3 + c) * ModelConfig::color_bins;
      int best = 0;
      for (int b2 = 1; b2 < ModelConfig::color_bins; ++b2)
        if (row[b2] > row[best]) best = b2;
      rgb[c] = geom::bin_color(best);
    }
    pred.colors[i] = {rgb[0], rgb[1], rgb[2]};
  }
  return pred;
}

void save_model_checkpoint(const std::string& path, const MccModel& model,
                           const nn::AdamState& opt) {
  // Copy the store and append the config record; optimizer slots align
  // because the extra record is appended last (load tolerates the extra m/v).
  ParamStore ps;
  for (size_t i = 0; i < model.params().size(); ++i) {
    const auto& [name, t] = model.params().item(i);
    ps.add(name, Tensor::from(t.shape(), t.values()));
  }
  ps.add("__config__", model.config().to_meta());
  nn::AdamState opt2 = opt;
  if (opt.m.size() == model.params().size()) {
    opt2.m.emplace_back(ps.get("__config__").numel(), 0.0);
    opt2.v.emplace_back(ps.get("__config__").numel(), 0.0);
  }
  nn::save_checkpoint(path, ps, opt2);
}

ModelCheckpoint load_model_checkpoint(const std::string& path) {
  nn::Checkpoint ck = nn::load_checkpoint(path);
  if (!ck.params.has("__config__"))
    throw parse_error("checkpoint lacks a model configuration: " + path);
  ModelConfig cfg = ModelConfig::from_meta(ck.params.get("__config__"));
  cfg.validate();
  // Rebuild a model with the right parameter layout, then load values.
  MccModel model = MccModel::init(cfg, /*seed=*/0);
  nn::AdamState opt;
  opt.step = ck.opt.step;
  const bool have_opt = !ck.opt.m.empty();
  for (size_t i = 0; i < model.params().size(); ++i) {
    auto& [name, t] = model.params().item(i);
    if (!ck.params.has(name))
      throw parse_error("checkpoint missing parameter '" + name + "': " + path);
    const Tensor& src = ck.params.get(name);
    if (src.shape() != t.shape())
      throw parse_error("checkpoint shape mismatch for '" + name + "' (" +
                        nn::shape_str(src.shape()) + " vs " +
                        nn::shape_str(t.shape()) + "): " + path);
    t.raw_values() = src.values();
    if (have_opt) {
      // locate the record index of this param in the checkpoint store
      for (size_t j = 0; j < ck.params.size(); ++j) {
        if (ck.params.item(j).first == name) {
          opt.m.push_back(ck.opt.m[j]);
          opt.v.push_back(ck.opt.v[j]);
          break;
        }
      }
    }
  }
  return {std::move(model), std::move(opt)};
}

geom::NormalizationTransform frame_normalization(const geom::RgbdFrame& frame,
                                                 synth::SceneMode mode) {
  if (mode == synth::SceneMode::Object) {
    geom::UnprojectResult seen = geom::unproject(frame, /*to_world=*/true);
    return geom::normalize_cloud(seen.cloud).transform;
  }
  // Scene mode: camera-frame coordinates with the camera kept at the origin.
  geom::UnprojectResult seen = geom::unproject(frame, /*to_world=*/false);
  if (seen.cloud.size() < 2)
    throw invalid_argument("frame_normalization: too few valid pixels");
  double ss = 0;
  for (const Vec3& p : seen.cloud.positions) ss += p.norm2();
  const double scale =
      std::sqrt(ss / (3.0 * static_cast<double>(seen.cloud.size())));
  if (!(scale > 1e-12))
    throw invalid_argument("frame_normalization: degenerate seen cloud");
  return {Vec3{0, 0, 0}, scale};
}

FrameInput frame_to_input(const geom::RgbdFrame& frame,
                          const geom::NormalizationTransform& t,
                          const Mat3& rotation, synth::SceneMode mode) {
  geom::PointMap map =
      geom::unproject_map(frame, /*to_world=*/mode == synth::SceneMode::Object);
  FrameInput in;
  in.image_size = frame.width();
  if (frame.width() != frame.height())
    throw invalid_argument("frame_to_input: image must be square");
  in.image = frame.image;
  in.valid = std::move(map.valid);
  in.points.assign(map.points.size(), Vec3{});
  for (size_t i = 0; i < map.points.size(); ++i)
    if (in.valid[i]) in.points[i] = rotation * t.apply(map.points[i]);
  return in;
}

}  // namespace mcc::model
