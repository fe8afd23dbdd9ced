#pragma once

#include <string>
#include <vector>

#include "mcc/geometry.hpp"

namespace mcc::synth {

enum class SceneMode { Object, Scene };

enum class PrimKind { Sphere, Box, Cylinder };

// params: sphere (radius, -, -); box half-extents (hx, hy, hz);
// cylinder (radius, half_height, -). Cylinder axis is local z.
struct Primitive {
  PrimKind kind = PrimKind::Sphere;
  Vec3 center{0, 0, 0};
  Vec3 params{1, 0, 0};
  Vec3 albedo{0.5, 0.5, 0.5};
  Mat3 orientation;

  void validate() const;
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  uint64_t seed = 0;
  SceneMode mode = SceneMode::Object;
};

struct ViewSpec {
  std::vector<geom::Pose> cameras;  // world-from-camera
  geom::CameraIntrinsics intrinsics;
};

struct GenParams {
  int min_primitives = 2;
  int max_primitives = 4;
  double size_min = 0.5;   // characteristic primitive size
  double size_max = 1.1;
  double albedo_min = 0.15;
  double albedo_max = 0.95;
  SceneMode mode = SceneMode::Object;
};

SceneSpec generate_scene(uint64_t seed, const GenParams& params = {});

// Unsigned distance from p to the union of primitive surfaces.
double analytic_distance(const SceneSpec& scene, const Vec3& p);
bool inside_any(const SceneSpec& scene, const Vec3& p);
bool oracle_occupancy(const SceneSpec& scene, const Vec3& q, double tau);

// Cameras on a sphere looking at the origin (object mode).
ViewSpec make_object_views(int n_views, int image_size,
                           double camera_distance = 5.0);
// Cameras near the origin looking outward (scene mode).
ViewSpec make_scene_views(int n_views, int image_size, uint64_t seed);

// Ray-casts each view against the primitives. Depth is the camera-frame z of
// the first hit (rounded to 32-bit float precision); misses get NaN. Optional
// Gaussian depth noise with std `noise_sigma` and an i.i.d. `unknown_frac`
// chance per pixel of replacing depth with the sentinel.
std::vector<geom::RgbdFrame> render_views(const SceneSpec& scene,
                                          const ViewSpec& views,
                                          double noise_sigma = 0.0,
                                          double unknown_frac = 0.0);

void write_bundle(const std::string& dir,
                  std::span<const geom::RgbdFrame> frames,
                  const SceneSpec& scene);

struct Bundle {
  std::vector<geom::RgbdFrame> frames;
  SceneSpec scene;
};
Bundle read_bundle(const std::string& dir);

// Single-frame access without loading the whole bundle.
int count_frames(const std::string& dir);
geom::RgbdFrame read_frame(const std::string& dir, int idx);

}  // namespace mcc::synth
