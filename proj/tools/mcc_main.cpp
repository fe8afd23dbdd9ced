#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "mcc/config.hpp"
#include "mcc/evalmetrics.hpp"
#include "mcc/infer.hpp"
#include "mcc/selftest.hpp"
#include "mcc/train.hpp"

namespace fs = std::filesystem;
using namespace mcc;

// Exit codes: 0 ok, 1 selftest failure, 2 usage, 3 I/O, 4 numerical.
namespace {

constexpr int kExitOk = 0;
constexpr int kExitSelftest = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct GenDataArgs {
  std::string out;
  int scenes = 1;
  int views = 32;
  int image_size = 64;
  std::string mode = "object";
  double noise = 0.0;
  double unknown_frac = 0.0;
  uint64_t seed = 1;
};

int cmd_gen_data(const GenDataArgs& a) {
  if (a.scenes < 1 || a.views < 1 || a.image_size < 1)
    throw invalid_argument("gen-data: counts must be positive");
  if (!(a.unknown_frac >= 0.0 && a.unknown_frac < 1.0))
    throw invalid_argument("gen-data: --unknown-frac must be in [0,1)");
  if (a.noise < 0) throw invalid_argument("gen-data: --noise must be >= 0");
  synth::GenParams gp;
  if (a.mode == "object") {
    gp.mode = synth::SceneMode::Object;
  } else if (a.mode == "scene") {
    gp.mode = synth::SceneMode::Scene;
  } else {
    throw invalid_argument("gen-data: --mode must be object or scene");
  }
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw io_error("cannot create output directory: " + a.out);
  std::ofstream manifest(a.out + "/manifest.txt");
  if (!manifest) throw io_error("cannot write manifest in: " + a.out);
  for (int s = 0; s < a.scenes; ++s) {
    const uint64_t scene_seed = seed_stream(a.seed, 0xb0d1e + s);
    synth::SceneSpec scene = synth::generate_scene(scene_seed, gp);
    synth::ViewSpec views =
        gp.mode == synth::SceneMode::Object
            ? synth::make_object_views(a.views, a.image_size)
            : synth::make_scene_views(a.views, a.image_size, scene_seed);
    std::vector<geom::RgbdFrame> frames =
        synth::render_views(scene, views, a.noise, a.unknown_frac);
    char name[32];
    std::snprintf(name, sizeof(name), "bundle_%04d", s);
    synth::write_bundle(a.out + "/" + name, frames, scene);
    manifest << name << " " << scene_seed << "\n";
  }
  std::cout << "wrote " << a.scenes << " scene bundle(s) under " << a.out
            << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data, config, out, resume, log;
};

int cmd_train(const TrainArgs& a) {
  config::ParsedConfig pc = config::load_config_file(a.config);
  train::TrainResult r = train::train_loop(a.data, pc.train, pc.model, a.out,
                                           a.resume, a.log);
  std::printf("trained %lld step(s): loss %.6f -> %.6f\n",
              static_cast<long long>(r.steps_run), r.first_loss, r.final_loss);
  std::printf("checkpoint: %s\n", a.out.c_str());
  return kExitOk;
}

struct ReconstructArgs {
  std::string ckpt, bundle, out;
  int frame = 0;
  double granularity = 0.1;
  double threshold = 0.1;
  int chunk_size = 2048;
};

int cmd_reconstruct(const ReconstructArgs& a) {
  model::ModelCheckpoint ck = model::load_model_checkpoint(a.ckpt);
  const int n_frames = synth::count_frames(a.bundle);
  if (n_frames == 0) throw io_error("no frames found in bundle: " + a.bundle);
  if (a.frame < 0 || a.frame >= n_frames)
    throw invalid_argument("--frame index out of range (bundle has " +
                           std::to_string(n_frames) + " frames)");
  geom::RgbdFrame frame = synth::read_frame(a.bundle, a.frame);
  infer::Reconstruction rec = infer::reconstruct(
      ck.model, frame, a.granularity, a.threshold, a.chunk_size);
  infer::export_ply(rec.cloud, a.out);

  std::vector<double> sig = rec.sigma;
  std::sort(sig.begin(), sig.end());
  std::printf("queries evaluated: %lld\n",
              static_cast<long long>(rec.stats.queries_evaluated));
  std::printf("points kept (sigma > %g): %zu\n", a.threshold,
              rec.cloud.positions.size());
  std::printf("sigma deciles:");
  for (int d = 1; d <= 9; ++d) {
    const size_t idx = std::min(sig.size() - 1,
                                static_cast<size_t>(d * 0.1 * sig.size()));
    std::printf(" %.4f", sig[idx]);
  }
  std::printf("\n");
  std::printf("normalization: centroid (%.6f %.6f %.6f) scale %.6f\n",
              rec.transform.centroid.x, rec.transform.centroid.y,
              rec.transform.centroid.z, rec.transform.scale);
  return kExitOk;
}

struct EvalArgs {
  std::string pred, gt;
  double rho = 0.1;
};

int cmd_eval(const EvalArgs& a) {
  geom::PointCloud pred = infer::import_ply(a.pred);
  geom::PointCloud gt = infer::import_ply(a.gt);
  metrics::MetricReport r = metrics::evaluate_clouds(pred, gt, a.rho);
  if (r.empty_pred_warning)
    std::fprintf(stderr, "warning: predicted cloud is empty\n");
  std::fputs(metrics::metrics_csv(r, !r.empty_pred_warning).c_str(), stdout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv("MCC_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) set_max_threads(n);
  }

  CLI::App app{"Single-frame RGB-D 3D reconstruction on synthetic scenes"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* app_gen = app.add_subcommand(
      "gen-data", "Generate synthetic multi-view RGB-D scene bundles");
  app_gen->add_option("--out", gen.out, "Output directory")->required();
  app_gen->add_option("--scenes", gen.scenes, "Number of scenes")
      ->capture_default_str();
  app_gen->add_option("--views", gen.views, "Views per scene")
      ->capture_default_str();
  app_gen->add_option("--image-size", gen.image_size, "Image size in pixels")
      ->capture_default_str();
  app_gen->add_option("--mode", gen.mode, "object or scene")
      ->capture_default_str();
  app_gen->add_option("--noise", gen.noise, "Depth noise sigma")
      ->capture_default_str();
  app_gen->add_option("--unknown-frac", gen.unknown_frac,
                      "Fraction of pixels with unknown depth, in [0,1)")
      ->capture_default_str();
  app_gen->add_option("--seed", gen.seed, "Root seed")->capture_default_str();

  TrainArgs tr;
  CLI::App* app_train =
      app.add_subcommand("train", "Train a model on scene bundles");
  app_train->add_option("--data", tr.data, "Bundle directory")->required();
  app_train->add_option("--config", tr.config, "Config file (key = value)")
      ->required();
  app_train->add_option("--out", tr.out, "Output checkpoint path")->required();
  app_train->add_option("--resume", tr.resume, "Checkpoint to resume from");
  app_train->add_option("--log", tr.log,
                        "Loss log CSV (default: <out>.log.csv)");

  ReconstructArgs rc;
  CLI::App* app_rec = app.add_subcommand(
      "reconstruct", "Reconstruct a colored point cloud from one frame");
  app_rec->add_option("--ckpt", rc.ckpt, "Checkpoint path")->required();
  app_rec->add_option("--bundle", rc.bundle, "Scene bundle directory")
      ->required();
  app_rec->add_option("--frame", rc.frame, "Frame index within the bundle")
      ->capture_default_str();
  app_rec->add_option("--granularity", rc.granularity, "Query grid step")
      ->capture_default_str();
  app_rec->add_option("--threshold", rc.threshold,
                      "Keep points with occupancy strictly above this")
      ->capture_default_str();
  app_rec->add_option("--chunk-size", rc.chunk_size, "Queries per decode call")
      ->capture_default_str();
  app_rec->add_option("--out", rc.out, "Output PLY path")->required();

  EvalArgs ev;
  CLI::App* app_eval =
      app.add_subcommand("eval", "Compare two point clouds (PLY)");
  app_eval->add_option("--pred", ev.pred, "Predicted cloud PLY")->required();
  app_eval->add_option("--gt", ev.gt, "Ground-truth cloud PLY")->required();
  app_eval->add_option("--rho", ev.rho, "Match radius")->capture_default_str();

  CLI::App* app_selftest = app.add_subcommand(
      "selftest", "Run gradient, masking, and metric-oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(app_gen)) return cmd_gen_data(gen);
    if (app.got_subcommand(app_train)) return cmd_train(tr);
    if (app.got_subcommand(app_rec)) return cmd_reconstruct(rc);
    if (app.got_subcommand(app_eval)) return cmd_eval(ev);
    if (app.got_subcommand(app_selftest))
      return selftest::run_selftest(std::cout).ok() ? kExitOk : kExitSelftest;
  } catch (const numeric_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const io_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
