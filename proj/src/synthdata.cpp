#include "mcc/synthdata.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace fs = std::filesystem;

namespace mcc::synth {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const Vec3 kLightDir = Vec3{0.4, -0.6, 0.8}.normalized();

double max_extent(const Primitive& p) {
  switch (p.kind) {
    case PrimKind::Sphere:
      return p.params.x;
    case PrimKind::Box:
      return p.params.norm();
    case PrimKind::Cylinder:
      return std::sqrt(p.params.x * p.params.x + p.params.y * p.params.y);
  }
  return 0;
}

// Signed distance in the primitive's local frame (negative inside).
double signed_distance_local(const Primitive& prim, const Vec3& q) {
  switch (prim.kind) {
    case PrimKind::Sphere:
      return q.norm() - prim.params.x;
    case PrimKind::Box: {
      const Vec3 d{std::abs(q.x) - prim.params.x, std::abs(q.y) - prim.params.y,
                   std::abs(q.z) - prim.params.z};
      const Vec3 outside{std::max(d.x, 0.0), std::max(d.y, 0.0),
                         std::max(d.z, 0.0)};
      return outside.norm() + std::min(std::max({d.x, d.y, d.z}), 0.0);
    }
    case PrimKind::Cylinder: {
      const double dr = std::hypot(q.x, q.y) - prim.params.x;
      const double dz = std::abs(q.z) - prim.params.y;
      const double ox = std::max(dr, 0.0), oz = std::max(dz, 0.0);
      return std::hypot(ox, oz) + std::min(std::max(dr, dz), 0.0);
    }
  }
  return 0;
}

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal_local;  // at the hit point
  bool hit = false;
};

constexpr double kRayEps = 1e-9;

RayHit intersect_sphere(double r, const Vec3& o, const Vec3& d) {
  RayHit h;
  const double a = d.dot(d), b = 2.0 * o.dot(d), c = o.dot(o) - r * r;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return h;
  const double sq = std::sqrt(disc);
  for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
    if (t > kRayEps && t < h.t) {
      h.t = t;
      h.hit = true;
      h.normal_local = (o + d * t).normalized();
    }
  }
  return h;
}

RayHit intersect_box(const Vec3& he, const Vec3& o, const Vec3& d) {
  RayHit h;
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  int near_axis = -1;
  for (int a = 0; a < 3; ++a) {
    const double oa = a == 0 ? o.x : (a == 1 ? o.y : o.z);
    const double da = a == 0 ? d.x : (a == 1 ? d.y : d.z);
    const double ha = a == 0 ? he.x : (a == 1 ? he.y : he.z);
    if (std::abs(da) < 1e-300) {
      if (std::abs(oa) > ha) return h;
      continue;
    }
    double t1 = (-ha - oa) / da, t2 = (ha - oa) / da;
    if (t1 > t2) std::swap(t1, t2);
    if (t1 > tmin) {
      tmin = t1;
      near_axis = a;
    }
    tmax = std::min(tmax, t2);
  }
  if (tmax < tmin) return h;
  double t = tmin;
  if (t <= kRayEps) t = tmax;  // inside the box
  if (t <= kRayEps || !std::isfinite(t)) return h;
  h.t = t;
  h.hit = true;
  const Vec3 p = o + d * t;
  // face with the largest relative coordinate
  double best = -1;
  for (int a = 0; a < 3; ++a) {
    const double pa = a == 0 ? p.x : (a == 1 ? p.y : p.z);
    const double ha = a == 0 ? he.x : (a == 1 ? he.y : he.z);
    if (std::abs(pa) / ha > best) {
      best = std::abs(pa) / ha;
      h.normal_local = Vec3{0, 0, 0};
      (a == 0 ? h.normal_local.x : a == 1 ? h.normal_local.y
                                          : h.normal_local.z) =
          pa >= 0 ? 1.0 : -1.0;
    }
  }
  (void)near_axis;
  return h;
}

RayHit intersect_cylinder(double r, double hh, const Vec3& o, const Vec3& d) {
  RayHit h;
  const double a = d.x * d.x + d.y * d.y;
  if (a > 1e-300) {
    const double b = 2.0 * (o.x * d.x + o.y * d.y);
    const double c = o.x * o.x + o.y * o.y - r * r;
    const double disc = b * b - 4 * a * c;
    if (disc >= 0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
        if (t > kRayEps && t < h.t) {
          const Vec3 p = o + d * t;
          if (std::abs(p.z) <= hh) {
            h.t = t;
            h.hit = true;
            h.normal_local = Vec3{p.x, p.y, 0}.normalized();
          }
        }
      }
    }
  }
  if (std::abs(d.z) > 1e-300) {
    for (double zc : {-hh, hh}) {
      const double t = (zc - o.z) / d.z;
      if (t > kRayEps && t < h.t) {
        const Vec3 p = o + d * t;
        if (p.x * p.x + p.y * p.y <= r * r) {
          h.t = t;
          h.hit = true;
          h.normal_local = Vec3{0, 0, zc > 0 ? 1.0 : -1.0};
        }
      }
    }
  }
  return h;
}

RayHit intersect_primitive(const Primitive& prim, const Vec3& o_world,
                           const Vec3& d_world) {
  const Mat3 rt = prim.orientation.transposed();
  const Vec3 o = rt * (o_world - prim.center);
  const Vec3 d = rt * d_world;
  RayHit h;
  switch (prim.kind) {
    case PrimKind::Sphere:
      h = intersect_sphere(prim.params.x, o, d);
      break;
    case PrimKind::Box:
      h = intersect_box(prim.params, o, d);
      break;
    case PrimKind::Cylinder:
      h = intersect_cylinder(prim.params.x, prim.params.y, o, d);
      break;
  }
  return h;
}

geom::Pose look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 fwd = (target - eye).normalized();
  Vec3 hint{0, 1, 0};
  if (std::abs(fwd.dot(hint)) > 0.99) hint = {1, 0, 0};
  const Vec3 right = hint.cross(fwd).normalized();
  const Vec3 down = fwd.cross(right);
  geom::Pose pose;
  for (int i = 0; i < 3; ++i) {
    pose.rotation.at(i, 0) = right[i];
    pose.rotation.at(i, 1) = down[i];
    pose.rotation.at(i, 2) = fwd[i];
  }
  pose.translation = eye;
  return pose;
}

geom::CameraIntrinsics square_intrinsics(int image_size, double fov_deg) {
  geom::CameraIntrinsics in;
  in.width = in.height = image_size;
  const double f = (image_size / 2.0) / std::tan(fov_deg * kPi / 360.0);
  in.fx = in.fy = f;
  in.cx = in.cy = (image_size - 1) / 2.0;
  return in;
}

void write_exact(std::ofstream& f, const void* data, size_t n,
                 const std::string& path) {
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!f) throw io_error("write failed: " + path);
}

std::string frame_base(int idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d", idx);
  return buf;
}

void write_ppm(const std::string& path, const geom::RgbdFrame& fr) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for writing: " + path);
  const int w = fr.width(), h = fr.height();
  std::ostringstream head;
  head << "P6\n" << w << " " << h << "\n255\n";
  const std::string hs = head.str();
  write_exact(f, hs.data(), hs.size(), path);
  std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u)
      for (int c = 0; c < 3; ++c)
        row[u * 3 + c] = static_cast<unsigned char>(
            geom::color_bin(fr.image[(static_cast<size_t>(v) * w + u) * 3 + c]));
    write_exact(f, row.data(), row.size(), path);
  }
}

void write_pfm(const std::string& path, const geom::RgbdFrame& fr) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for writing: " + path);
  const int w = fr.width(), h = fr.height();
  std::ostringstream head;
  head << "Pf\n" << w << " " << h << "\n-1.0\n";
  const std::string hs = head.str();
  write_exact(f, hs.data(), hs.size(), path);
  std::vector<float> row(w);
  for (int v = h - 1; v >= 0; --v) {  // PFM rows run bottom-up
    for (int u = 0; u < w; ++u)
      row[u] = static_cast<float>(fr.depth[static_cast<size_t>(v) * w + u]);
    write_exact(f, row.data(), row.size() * sizeof(float), path);
  }
}

void write_cam(const std::string& path, const geom::RgbdFrame& fr) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw io_error("cannot open for writing: " + path);
  std::fprintf(f, "%.17g %.17g %.17g %.17g\n", fr.intrinsics.fx,
               fr.intrinsics.fy, fr.intrinsics.cx, fr.intrinsics.cy);
  for (int r = 0; r < 3; ++r)
    std::fprintf(f, "%.17g %.17g %.17g %.17g\n", fr.pose.rotation.at(r, 0),
                 fr.pose.rotation.at(r, 1), fr.pose.rotation.at(r, 2),
                 fr.pose.translation[r]);
  if (std::fclose(f) != 0) throw io_error("write failed: " + path);
}

std::string token(std::istream& in, const std::string& path,
                  const std::string& what) {
  std::string t;
  if (!(in >> t))
    throw parse_error("malformed file " + path + ": missing " + what);
  return t;
}

double num_token(std::istream& in, const std::string& path,
                 const std::string& what) {
  const std::string t = token(in, path, what);
  try {
    size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw parse_error("malformed file " + path + ": bad number for " + what);
  }
}

void read_ppm(const std::string& path, geom::RgbdFrame& fr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw parse_error("bad magic in " + path + ": expected P6");
  const int w = static_cast<int>(num_token(f, path, "width"));
  const int h = static_cast<int>(num_token(f, path, "height"));
  const int maxval = static_cast<int>(num_token(f, path, "maxval"));
  if (w <= 0 || h <= 0 || maxval != 255)
    throw parse_error("unsupported PPM header in " + path);
  f.get();  // single whitespace after maxval
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(buf.size()));
  if (static_cast<size_t>(f.gcount()) != buf.size())
    throw parse_error("truncated pixel data in " + path);
  fr.intrinsics.width = w;
  fr.intrinsics.height = h;
  fr.image.resize(buf.size());
  for (size_t i = 0; i < buf.size(); ++i) fr.image[i] = buf[i] / 255.0;
}

void read_pfm(const std::string& path, geom::RgbdFrame& fr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open: " + path);
  std::string magic;
  f >> magic;
  if (magic != "Pf")
    throw parse_error("bad magic in " + path + ": expected Pf");
  const int w = static_cast<int>(num_token(f, path, "width"));
  const int h = static_cast<int>(num_token(f, path, "height"));
  const double scale = num_token(f, path, "scale");
  if (w != fr.width() || h != fr.height())
    throw parse_error("depth size mismatch in " + path);
  if (!(scale < 0))
    throw parse_error(path + ": big-endian PFM not supported");
  f.get();
  std::vector<float> buf(static_cast<size_t>(w) * h);
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (static_cast<size_t>(f.gcount()) != buf.size() * sizeof(float))
    throw parse_error("truncated depth data in " + path);
  fr.depth.resize(buf.size());
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      fr.depth[static_cast<size_t>(v) * w + u] =
          buf[static_cast<size_t>(h - 1 - v) * w + u];
}

void read_cam(const std::string& path, geom::RgbdFrame& fr) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open: " + path);
  fr.intrinsics.fx = num_token(f, path, "fx");
  fr.intrinsics.fy = num_token(f, path, "fy");
  fr.intrinsics.cx = num_token(f, path, "cx");
  fr.intrinsics.cy = num_token(f, path, "cy");
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c)
      fr.pose.rotation.at(r, c) = num_token(f, path, "rotation");
    const double t = num_token(f, path, "translation");
    (r == 0 ? fr.pose.translation.x
            : r == 1 ? fr.pose.translation.y : fr.pose.translation.z) = t;
  }
}

const char* kind_name(PrimKind k) {
  switch (k) {
    case PrimKind::Sphere: return "sphere";
    case PrimKind::Box: return "box";
    case PrimKind::Cylinder: return "cylinder";
  }
  return "?";
}

}  // namespace

void Primitive::validate() const {
  bool ok = true;
  switch (kind) {
    case PrimKind::Sphere: ok = params.x > 0; break;
    case PrimKind::Box: ok = params.x > 0 && params.y > 0 && params.z > 0; break;
    case PrimKind::Cylinder: ok = params.x > 0 && params.y > 0; break;
  }
  if (!ok) throw invalid_argument("primitive: non-positive size parameter");
  for (int c = 0; c < 3; ++c)
    if (!(albedo[c] >= 0 && albedo[c] <= 1))
      throw invalid_argument("primitive: albedo outside [0,1]");
  if (orientation.orthonormal_error() > 1e-9)
    throw invalid_argument("primitive: orientation not orthonormal");
}

SceneSpec generate_scene(uint64_t seed, const GenParams& params) {
  if (params.min_primitives < 1 || params.max_primitives < params.min_primitives)
    throw invalid_argument("generate_scene: invalid primitive count range");
  if (!(params.size_min > 0) || params.size_max < params.size_min)
    throw invalid_argument("generate_scene: invalid size range");
  Rng rng(seed_stream(seed, 0x5ce11e));
  SceneSpec scene;
  scene.seed = seed;
  scene.mode = params.mode;
  const int n = params.min_primitives +
                static_cast<int>(rng.uniform_int(
                    params.max_primitives - params.min_primitives + 1));
  const bool object = params.mode == SceneMode::Object;
  for (int i = 0; i < n; ++i) {
    Primitive p;
    const double scale_up = object ? 1.0 : 1.6;
    const double s = rng.uniform(params.size_min, params.size_max) * scale_up;
    switch (rng.uniform_int(3)) {
      case 0:
        p.kind = PrimKind::Sphere;
        p.params = {s, 0, 0};
        break;
      case 1:
        p.kind = PrimKind::Box;
        p.params = {s * rng.uniform(0.5, 1.0), s * rng.uniform(0.5, 1.0),
                    s * rng.uniform(0.5, 1.0)};
        break;
      default:
        p.kind = PrimKind::Cylinder;
        p.params = {s * rng.uniform(0.4, 0.9), s * rng.uniform(0.5, 1.0), 0};
        break;
    }
    for (int c = 0; c < 3; ++c)
      (c == 0 ? p.albedo.x : c == 1 ? p.albedo.y : p.albedo.z) =
          rng.uniform(params.albedo_min, params.albedo_max);
    p.orientation = geom::random_rotation(rng);
    const double ext = max_extent(p);
    Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
    while (dir.norm() < 1e-6) dir = {rng.normal(), rng.normal(), rng.normal()};
    dir = dir.normalized();
    if (object) {
      const double room = std::max(0.0, 2.0 - ext);
      p.center = dir * (room * std::cbrt(rng.uniform()));
    } else {
      p.center = dir * rng.uniform(2.5, 4.5);
    }
    p.validate();
    scene.primitives.push_back(p);
  }
  return scene;
}

double analytic_distance(const SceneSpec& scene, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const Primitive& prim : scene.primitives) {
    const Vec3 q = prim.orientation.transposed() * (p - prim.center);
    best = std::min(best, std::abs(signed_distance_local(prim, q)));
  }
  return best;
}

bool inside_any(const SceneSpec& scene, const Vec3& p) {
  for (const Primitive& prim : scene.primitives) {
    const Vec3 q = prim.orientation.transposed() * (p - prim.center);
    if (signed_distance_local(prim, q) < 0) return true;
  }
  return false;
}

bool oracle_occupancy(const SceneSpec& scene, const Vec3& q, double tau) {
  if (!(tau > 0)) throw invalid_argument("oracle_occupancy: tau must be > 0");
  return analytic_distance(scene, q) <= tau;
}

ViewSpec make_object_views(int n_views, int image_size, double camera_distance) {
  if (n_views < 1) throw invalid_argument("make_object_views: need >= 1 view");
  ViewSpec v;
  v.intrinsics = square_intrinsics(image_size, 55.0);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n_views; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n_views;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double a = golden * i;
    const Vec3 dir{r * std::cos(a), r * std::sin(a), z};
    v.cameras.push_back(look_at(dir * camera_distance, Vec3{0, 0, 0}));
  }
  return v;
}

ViewSpec make_scene_views(int n_views, int image_size, uint64_t seed) {
  if (n_views < 1) throw invalid_argument("make_scene_views: need >= 1 view");
  ViewSpec v;
  v.intrinsics = square_intrinsics(image_size, 70.0);
  Rng rng(seed_stream(seed, 0x71e35));
  for (int i = 0; i < n_views; ++i) {
    Vec3 eye{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
             rng.uniform(-0.5, 0.5)};
    Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
    while (dir.norm() < 1e-6) dir = {rng.normal(), rng.normal(), rng.normal()};
    v.cameras.push_back(look_at(eye, eye + dir.normalized()));
  }
  return v;
}

std::vector<geom::RgbdFrame> render_views(const SceneSpec& scene,
                                          const ViewSpec& views,
                                          double noise_sigma,
                                          double unknown_frac) {
  if (!(unknown_frac >= 0.0 && unknown_frac < 1.0))
    throw invalid_argument("render_views: unknown_frac must be in [0,1)");
  if (scene.primitives.empty())
    throw invalid_argument("render_views: scene has no primitives");
  views.intrinsics.validate();
  for (size_t i = 0; i < views.cameras.size(); ++i)
    if (inside_any(scene, views.cameras[i].translation))
      throw invalid_argument("render_views: camera " + std::to_string(i) +
                             " is inside a primitive");

  const int w = views.intrinsics.width, h = views.intrinsics.height;
  const uint64_t noise_seed = seed_stream(scene.seed, 0x4e015e);
  std::vector<geom::RgbdFrame> frames(views.cameras.size());
  for (size_t vi = 0; vi < views.cameras.size(); ++vi) {
    geom::RgbdFrame& fr = frames[vi];
    fr.intrinsics = views.intrinsics;
    fr.pose = views.cameras[vi];
    fr.image.assign(static_cast<size_t>(w) * h * 3, 0.0);
    fr.depth.assign(static_cast<size_t>(w) * h, kNaN);
    const Vec3 origin = fr.pose.translation;
#pragma omp parallel for schedule(static)
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const size_t pix = static_cast<size_t>(v) * w + u;
        const Vec3 dir_cam{(u - fr.intrinsics.cx) / fr.intrinsics.fx,
                           (v - fr.intrinsics.cy) / fr.intrinsics.fy, 1.0};
        const Vec3 dir = fr.pose.rotation * dir_cam;
        RayHit best;
        const Primitive* hit_prim = nullptr;
        for (const Primitive& prim : scene.primitives) {
          RayHit rh = intersect_primitive(prim, origin, dir);
          if (rh.hit && rh.t < best.t) {
            best = rh;
            hit_prim = &prim;
          }
        }
        if (!hit_prim) continue;
        double d = best.t;  // camera-frame z: dir_cam.z == 1
        SmallRng prng(splitmix64(noise_seed ^ (vi * 0x100000001b3ull + pix)));
        if (unknown_frac > 0 && prng.uniform() < unknown_frac) {
          d = kNaN;
        } else if (noise_sigma > 0) {
          d = std::max(1e-6, d + noise_sigma * prng.normal());
        }
        fr.depth[pix] = static_cast<double>(static_cast<float>(d));
        const Vec3 n_world = hit_prim->orientation * best.normal_local;
        const double lambert =
            0.3 + 0.7 * std::max(0.0, n_world.dot(kLightDir));
        for (int c = 0; c < 3; ++c)
          fr.image[pix * 3 + c] =
              std::clamp(hit_prim->albedo[c] * lambert, 0.0, 1.0);
      }
    }
  }
  return frames;
}

void write_bundle(const std::string& dir,
                  std::span<const geom::RgbdFrame> frames,
                  const SceneSpec& scene) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory: " + dir);
  for (size_t i = 0; i < frames.size(); ++i) {
    const std::string base = dir + "/" + frame_base(static_cast<int>(i));
    write_ppm(base + ".ppm", frames[i]);
    write_pfm(base + ".pfm", frames[i]);
    write_cam(base + ".cam", frames[i]);
  }
  std::FILE* f = std::fopen((dir + "/scene.txt").c_str(), "w");
  if (!f) throw io_error("cannot open for writing: " + dir + "/scene.txt");
  for (const Primitive& p : scene.primitives) {
    std::fprintf(f, "%s %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g",
                 kind_name(p.kind), p.center.x, p.center.y, p.center.z,
                 p.params.x, p.params.y, p.params.z, p.albedo.x, p.albedo.y,
                 p.albedo.z);
    for (int k = 0; k < 9; ++k) std::fprintf(f, " %.17g", p.orientation.m[k]);
    std::fprintf(f, "\n");
  }
  if (std::fclose(f) != 0) throw io_error("write failed: " + dir + "/scene.txt");
}

int count_frames(const std::string& dir) {
  int n = 0;
  while (fs::exists(dir + "/" + frame_base(n) + ".ppm")) ++n;
  return n;
}

geom::RgbdFrame read_frame(const std::string& dir, int idx) {
  const std::string base = dir + "/" + frame_base(idx);
  if (!fs::exists(base + ".ppm"))
    throw io_error("frame " + std::to_string(idx) + ": missing image file " +
                   base + ".ppm");
  geom::RgbdFrame fr;
  read_ppm(base + ".ppm", fr);
  if (!fs::exists(base + ".pfm"))
    throw io_error("frame " + std::to_string(idx) + ": missing depth file " +
                   base + ".pfm");
  read_pfm(base + ".pfm", fr);
  if (!fs::exists(base + ".cam"))
    throw io_error("frame " + std::to_string(idx) + ": missing camera file " +
                   base + ".cam");
  read_cam(base + ".cam", fr);
  fr.validate();
  return fr;
}

Bundle read_bundle(const std::string& dir) {
  Bundle b;
  const int n = count_frames(dir);
  if (n == 0) throw io_error("no frames found in bundle: " + dir);
  for (int i = 0; i < n; ++i) b.frames.push_back(read_frame(dir, i));
  const std::string scene_path = dir + "/scene.txt";
  std::ifstream f(scene_path);
  if (!f) throw io_error("cannot open: " + scene_path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    Primitive p;
    if (kind == "sphere") p.kind = PrimKind::Sphere;
    else if (kind == "box") p.kind = PrimKind::Box;
    else if (kind == "cylinder") p.kind = PrimKind::Cylinder;
    else
      throw parse_error(scene_path + ":" + std::to_string(lineno) +
                        ": unknown primitive kind '" + kind + "'");
    const std::string where = scene_path + ":" + std::to_string(lineno);
    p.center = {num_token(ls, where, "cx"), num_token(ls, where, "cy"),
                num_token(ls, where, "cz")};
    p.params = {num_token(ls, where, "p1"), num_token(ls, where, "p2"),
                num_token(ls, where, "p3")};
    p.albedo = {num_token(ls, where, "r"), num_token(ls, where, "g"),
                num_token(ls, where, "b")};
    for (int k = 0; k < 9; ++k)
      p.orientation.m[k] = num_token(ls, where, "orientation");
    p.validate();
    b.scene.primitives.push_back(p);
  }
  if (b.scene.primitives.empty())
    throw parse_error(scene_path + ": no primitives");
  return b;
}

}  // namespace mcc::synth
