#include "splat/benchmark.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "splat/serial.hpp"

namespace splat {

namespace {

constexpr char kAnimMagic[8] = {'P', 'T', 'A', 'N', 'I', 'M', '1', '\0'};
constexpr double kPi = 3.14159265358979323846;

Vec3 normalize3(const Vec3& v) {
  const double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  return Vec3{v.x / n, v.y / n, v.z / n};
}

struct MouthFrame {
  Vec3 center;  // m0, on the blob surface
  Vec3 z;       // outward normal
  Vec3 y;       // opening direction (tangent, up-ish)
  Vec3 x;       // tangent completing the frame
};

MouthFrame mouth_frame(double blob_radius) {
  MouthFrame f;
  f.z = normalize3(Vec3{0.0, -0.35, -1.0});
  f.center = Vec3{blob_radius * f.z.x, blob_radius * f.z.y, blob_radius * f.z.z};
  const Vec3 ey{0.0, 1.0, 0.0};
  const double d = ey.y * f.z.y + ey.x * f.z.x + ey.z * f.z.z;
  f.y = normalize3(Vec3{ey.x - d * f.z.x, ey.y - d * f.z.y, ey.z - d * f.z.z});
  f.x = Vec3{f.y.y * f.z.z - f.y.z * f.z.y, f.y.z * f.z.x - f.y.x * f.z.z,
             f.y.x * f.z.y - f.y.y * f.z.x};
  return f;
}

// Point on the blob surface offset from the mouth center by tangent coords.
Vec3 surface_point(const MouthFrame& f, double blob_radius, double u, double v) {
  Vec3 q{f.center.x + u * f.x.x + v * f.y.x, f.center.y + u * f.x.y + v * f.y.y,
         f.center.z + u * f.x.z + v * f.y.z};
  Vec3 n = normalize3(q);
  return Vec3{blob_radius * n.x, blob_radius * n.y, blob_radius * n.z};
}

// Mouth falloff and lip side at a point; zero outside the mouth radius.
double mouth_weight(const MouthFrame& f, const Vec3& p, double mouth_radius) {
  const Vec3 d{p.x - f.center.x, p.y - f.center.y, p.z - f.center.z};
  const double r = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
  if (r >= mouth_radius) return 0.0;
  const double c = std::cos(kPi * r / (2.0 * mouth_radius));
  return c * c;
}

double lip_side(const MouthFrame& f, const Vec3& p) {
  const Vec3 d{p.x - f.center.x, p.y - f.center.y, p.z - f.center.z};
  return (d.x * f.y.x + d.y * f.y.y + d.z * f.y.z) >= 0.0 ? 1.0 : -1.0;
}

Vec3 displacement(const MouthFrame& f, const Vec3& p, double o, double s,
                  double a_open, double a_sway, double mouth_radius) {
  const double w = mouth_weight(f, p, mouth_radius) * lip_side(f, p) * o * a_open;
  return Vec3{w * f.y.x + s * a_sway, w * f.y.y, w * f.y.z};
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path);
  out << text;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string static_image_path(const std::string& dir, int i, bool png) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "static/view_%03d.%s", i, png ? "png" : "f32");
  return dir + "/" + buf;
}

std::string anim_image_path(const std::string& dir, int64_t t, bool png) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "anim/frame_%03d.%s", int(t), png ? "png" : "f32");
  return dir + "/" + buf;
}

Mat project_markers(const GaussianSet& set, const std::vector<int64_t>& markers,
                    const Mat* dx, const Camera& cam) {
  Mat out(int64_t(markers.size()), 2);
  for (size_t k = 0; k < markers.size(); ++k) {
    const int64_t i = markers[k];
    Vec3 x{set.pos(i, 0), set.pos(i, 1), set.pos(i, 2)};
    if (dx) {
      x.x += (*dx)(i, 0);
      x.y += (*dx)(i, 1);
      x.z += (*dx)(i, 2);
    }
    const Quat q = quat_normalize(
        Quat{set.rot(i, 0), set.rot(i, 1), set.rot(i, 2), set.rot(i, 3)});
    const Vec3 s{std::exp(set.log_scale(i, 0)), std::exp(set.log_scale(i, 1)),
                 std::exp(set.log_scale(i, 2))};
    ProjectedGaussian pg = project_gaussian(covariance_from_rs(q, s), x, cam);
    if (pg.culled) throw StateError("project_markers: marker behind camera");
    out(int64_t(k), 0) = pg.mean.x;
    out(int64_t(k), 1) = pg.mean.y;
  }
  return out;
}

BenchmarkScene build_scene(const BenchmarkConfig& cfg, uint64_t seed) {
  if (cfg.gaussians < cfg.landmark_count + 8)
    throw std::invalid_argument("build_scene: too few gaussians");
  BenchmarkScene sc;
  sc.cfg = cfg;
  sc.seed = seed;

  const MouthFrame mf = mouth_frame(cfg.blob_radius);
  const int64_t n = cfg.gaussians;
  const int k = cfg.landmark_count;

  GaussianSet& set = sc.set;
  set.pos = Mat(n, 3);
  set.rot = Mat(n, 4);
  set.log_scale = Mat(n, 3);
  set.opacity_raw = Mat(n, 1);
  set.color = Mat(n, 3);
  set.landmark.assign(size_t(n), 0);
  set.box_min = {-0.6, -0.6, -0.6};
  set.box_max = {0.6, 0.6, 0.6};

  Rng rng(seed);

  // markers on a ring halfway into the mouth region, bright and opaque
  for (int j = 0; j < k; ++j) {
    const double th = 2.0 * kPi * double(j) / double(k);
    const double rr = 0.5 * cfg.mouth_radius;
    const Vec3 p = surface_point(mf, cfg.blob_radius, rr * std::cos(th),
                                 rr * std::sin(th));
    set.pos(j, 0) = p.x;
    set.pos(j, 1) = p.y;
    set.pos(j, 2) = p.z;
    set.rot(j, 0) = 1.0;
    for (int c = 0; c < 3; ++c) set.log_scale(j, c) = std::log(0.012);
    set.opacity_raw(j, 0) = logit(0.95);
    set.color(j, 0) = 0.95;
    set.color(j, 1) = 0.1;
    set.color(j, 2) = 0.1;
    set.landmark[size_t(j)] = 1;
    sc.markers.push_back(j);
  }

  // mouth-region filler, reddish
  const int64_t n_mouth = (n - k) * 12 / 100;
  for (int64_t i = k; i < k + n_mouth; ++i) {
    const double r = cfg.mouth_radius * 0.95 * std::sqrt(rng.uniform(0, 1));
    const double th = rng.uniform(0, 2.0 * kPi);
    const Vec3 p = surface_point(mf, cfg.blob_radius, r * std::cos(th),
                                 r * std::sin(th));
    set.pos(i, 0) = p.x;
    set.pos(i, 1) = p.y;
    set.pos(i, 2) = p.z;
    for (int c = 0; c < 4; ++c) set.rot(i, c) = rng.normal();
    for (int c = 0; c < 3; ++c)
      set.log_scale(i, c) = std::log(rng.uniform(0.015, 0.03));
    set.opacity_raw(i, 0) = logit(rng.uniform(0.55, 0.9));
    set.color(i, 0) = rng.uniform(0.6, 0.95);
    set.color(i, 1) = rng.uniform(0.1, 0.35);
    set.color(i, 2) = rng.uniform(0.1, 0.35);
  }

  // shell body
  for (int64_t i = k + n_mouth; i < n; ++i) {
    Vec3 d{rng.normal(), rng.normal(), rng.normal()};
    d = normalize3(d);
    const double r = cfg.blob_radius * rng.uniform(0.94, 1.0);
    set.pos(i, 0) = r * d.x;
    set.pos(i, 1) = r * d.y;
    set.pos(i, 2) = r * d.z;
    for (int c = 0; c < 4; ++c) set.rot(i, c) = rng.normal();
    for (int c = 0; c < 3; ++c)
      set.log_scale(i, c) = std::log(rng.uniform(0.018, 0.04));
    set.opacity_raw(i, 0) = logit(rng.uniform(0.5, 0.9));
    for (int c = 0; c < 3; ++c) set.color(i, c) = rng.uniform(0.15, 0.9);
  }

  // lip point-cloud template in the mouth disc
  sc.lip_template = Mat(cfg.lip_points, 3);
  for (int64_t i = 0; i < cfg.lip_points; ++i) {
    const double r = cfg.mouth_radius * 0.95 * std::sqrt(rng.uniform(0, 1));
    const double th = rng.uniform(0, 2.0 * kPi);
    const Vec3 p = surface_point(mf, cfg.blob_radius, r * std::cos(th),
                                 r * std::sin(th));
    sc.lip_template(i, 0) = p.x;
    sc.lip_template(i, 1) = p.y;
    sc.lip_template(i, 2) = p.z;
  }

  // cameras: front hemisphere fan for the static stage, frontal for animation
  const double cx = cfg.image_size / 2.0, cy = cfg.image_size / 2.0;
  (void)cx;
  (void)cy;
  for (int i = 0; i < cfg.static_views; ++i) {
    const double az = rng.uniform(-1.05, 1.05);   // ~±60 deg
    const double el = rng.uniform(-0.44, 0.44);   // ~±25 deg
    const Vec3 eye{cfg.cam_distance * std::sin(az) * std::cos(el),
                   cfg.cam_distance * std::sin(el),
                   -cfg.cam_distance * std::cos(az) * std::cos(el)};
    sc.static_cams.push_back(look_at_camera(eye, Vec3{0, 0, 0}, Vec3{0, 1, 0},
                                            cfg.focal_px, cfg.focal_px,
                                            cfg.image_size, cfg.image_size,
                                            0.01));
  }
  sc.anim_cam = look_at_camera(Vec3{0, 0, -cfg.cam_distance}, Vec3{0, 0, 0},
                               Vec3{0, 1, 0}, cfg.focal_px, cfg.focal_px,
                               cfg.image_size, cfg.image_size, 0.01);

  // audio features aligned with the analytic motion tracks
  AudioSynthConfig acfg;
  acfg.t_frames = cfg.t_frames;
  acfg.f_a = cfg.f_audio;
  acfg.fps = cfg.fps;
  acfg.amplitude = 1.0;
  SynthesizedAudio synth =
      synthesize_benchmark_audio(acfg, seed ^ 0x9e3779b97f4a7c15ULL);
  sc.audio = synth.audio;
  sc.opening = synth.opening;
  sc.sway = synth.sway;

  // analytic animation
  const double extent = set.extent();
  const double a_open = cfg.open_amp_frac * extent * cfg.motion_amplitude;
  const double a_sway = cfg.sway_amp_frac * extent * cfg.motion_amplitude;
  sc.deltas.reserve(size_t(cfg.t_frames));
  sc.lip_frames.reserve(size_t(cfg.t_frames));
  sc.landmarks_px = Mat(cfg.t_frames, int64_t(k) * 2);
  for (int64_t t = 0; t < cfg.t_frames; ++t) {
    const double o = sc.opening[size_t(t)], s = sc.sway[size_t(t)];
    Mat dx(n, 3);
    for (int64_t i = 0; i < n; ++i) {
      const Vec3 p{set.pos(i, 0), set.pos(i, 1), set.pos(i, 2)};
      const Vec3 d = displacement(mf, p, o, s, a_open, a_sway, cfg.mouth_radius);
      dx(i, 0) = d.x;
      dx(i, 1) = d.y;
      dx(i, 2) = d.z;
    }
    Mat lips(cfg.lip_points, 3);
    for (int64_t i = 0; i < cfg.lip_points; ++i) {
      const Vec3 p{sc.lip_template(i, 0), sc.lip_template(i, 1),
                   sc.lip_template(i, 2)};
      const Vec3 d = displacement(mf, p, o, s, a_open, a_sway, cfg.mouth_radius);
      lips(i, 0) = p.x + d.x;
      lips(i, 1) = p.y + d.y;
      lips(i, 2) = p.z + d.z;
    }
    Mat lm = project_markers(set, sc.markers, &dx, sc.anim_cam);
    for (int j = 0; j < k; ++j) {
      sc.landmarks_px(t, 2 * j) = lm(j, 0);
      sc.landmarks_px(t, 2 * j + 1) = lm(j, 1);
    }
    sc.deltas.push_back(std::move(dx));
    sc.lip_frames.push_back(std::move(lips));
  }
  return sc;
}

void write_camera_file(const std::string& path, const std::vector<Camera>& cams) {
  std::ostringstream out;
  out << "camera_record_v1 " << cams.size() << "\n";
  for (const Camera& c : cams) {
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) out << fmt17(c.R.m[size_t(r) * 3 + col]) << " ";
    out << fmt17(c.t.x) << " " << fmt17(c.t.y) << " " << fmt17(c.t.z) << " "
        << fmt17(c.fx) << " " << fmt17(c.fy) << " " << fmt17(c.cx) << " "
        << fmt17(c.cy) << " " << c.width << " " << c.height << " "
        << fmt17(c.near) << "\n";
  }
  write_text_file(path, out.str());
}

std::vector<Camera> read_camera_file(const std::string& path) {
  std::istringstream in(slurp(path));
  std::string tag;
  size_t count = 0;
  if (!(in >> tag >> count) || tag != "camera_record_v1")
    throw ParseError(path + ": not a camera record file");
  std::vector<Camera> cams(count);
  for (Camera& c : cams) {
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col)
        if (!(in >> c.R.m[size_t(r) * 3 + col]))
          throw ParseError(path + ": truncated");
    if (!(in >> c.t.x >> c.t.y >> c.t.z >> c.fx >> c.fy >> c.cx >> c.cy >>
          c.width >> c.height >> c.near))
      throw ParseError(path + ": truncated");
  }
  return cams;
}

void write_scene(const BenchmarkScene& sc, const std::string& dir,
                 const RenderOptions& opt) {
  namespace fs = std::filesystem;
  fs::create_directories(dir + "/static");
  fs::create_directories(dir + "/anim");

  std::vector<std::string> files;
  auto track = [&files](const std::string& p) { files.push_back(p); };

  write_ply(dir + "/head.ply", sc.set);
  track("head.ply");
  write_camera_file(dir + "/cameras_static.txt", sc.static_cams);
  track("cameras_static.txt");
  write_camera_file(dir + "/camera_anim.txt", {sc.anim_cam});
  track("camera_anim.txt");

  for (int i = 0; i < int(sc.static_cams.size()); ++i) {
    FrameBuffer fb = rasterize(sc.set, DeformDelta{}, sc.static_cams[size_t(i)], opt);
    write_png(static_image_path(dir, i, true), fb.color);
    write_image_dump(static_image_path(dir, i, false), fb.color);
    track(static_image_path("", i, true).substr(1));
    track(static_image_path("", i, false).substr(1));
  }
  for (int64_t t = 0; t < sc.cfg.t_frames; ++t) {
    DeformDelta delta;
    delta.dx = &sc.deltas[size_t(t)];
    FrameBuffer fb = rasterize(sc.set, delta, sc.anim_cam, opt);
    write_png(anim_image_path(dir, t, true), fb.color);
    write_image_dump(anim_image_path(dir, t, false), fb.color);
    track(anim_image_path("", t, true).substr(1));
    track(anim_image_path("", t, false).substr(1));
  }

  write_feature_file(dir + "/features.bin", sc.audio);
  track("features.bin");
  write_lip_file(dir + "/lips.bin", sc.lip_frames);
  track("lips.bin");
  write_lip_file(dir + "/template.bin", {sc.lip_template});
  track("template.bin");

  {
    std::ostringstream out;
    for (int64_t i : sc.markers) out << i << "\n";
    write_text_file(dir + "/markers.txt", out.str());
    track("markers.txt");
  }
  {
    std::ostringstream out;
    for (int64_t t = 0; t < sc.landmarks_px.rows; ++t) {
      for (int64_t j = 0; j < sc.landmarks_px.cols; ++j)
        out << (j ? " " : "") << fmt17(sc.landmarks_px(t, j));
      out << "\n";
    }
    write_text_file(dir + "/landmarks.txt", out.str());
    track("landmarks.txt");
  }
  {
    std::ostringstream out;
    for (size_t t = 0; t < sc.opening.size(); ++t)
      out << fmt17(sc.opening[t]) << " " << fmt17(sc.sway[t]) << "\n";
    write_text_file(dir + "/opening.txt", out.str());
    track("opening.txt");
  }
  {
    ByteWriter w;
    w.raw(kAnimMagic, 8);
    w.u32(uint32_t(sc.cfg.t_frames));
    w.u32(uint32_t(sc.set.count()));
    for (const Mat& dx : sc.deltas) w.f64_array(dx.v.data(), size_t(dx.size()));
    write_file_bytes(dir + "/gt_anim.bin", w.bytes);
    track("gt_anim.bin");
  }

  nlohmann::json manifest;
  manifest["format"] = 1;
  manifest["seed"] = sc.seed;
  nlohmann::json jc;
  jc["gaussians"] = sc.cfg.gaussians;
  jc["static_views"] = sc.cfg.static_views;
  jc["image_size"] = sc.cfg.image_size;
  jc["t_frames"] = sc.cfg.t_frames;
  jc["fps"] = sc.cfg.fps;
  jc["f_audio"] = sc.cfg.f_audio;
  jc["blob_radius"] = sc.cfg.blob_radius;
  jc["mouth_radius"] = sc.cfg.mouth_radius;
  jc["open_amp_frac"] = sc.cfg.open_amp_frac;
  jc["sway_amp_frac"] = sc.cfg.sway_amp_frac;
  jc["lip_points"] = sc.cfg.lip_points;
  jc["landmark_count"] = sc.cfg.landmark_count;
  jc["cam_distance"] = sc.cfg.cam_distance;
  jc["focal_px"] = sc.cfg.focal_px;
  jc["motion_amplitude"] = sc.cfg.motion_amplitude;
  manifest["config"] = jc;
  manifest["box_min"] = sc.set.box_min;
  manifest["box_max"] = sc.set.box_max;
  nlohmann::json jfiles = nlohmann::json::array();
  for (const std::string& rel : files) {
    nlohmann::json jf;
    jf["path"] = rel;
    std::vector<uint8_t> bytes = read_file_bytes(dir + "/" + rel);
    jf["fnv1a64"] = fnv1a64_hex(bytes.data(), bytes.size());
    jfiles.push_back(jf);
  }
  manifest["files"] = jfiles;
  write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

BenchmarkScene generate_scene(const BenchmarkConfig& cfg, uint64_t seed,
                              const std::string& dir) {
  BenchmarkScene sc = build_scene(cfg, seed);
  write_scene(sc, dir);
  return sc;
}

BenchmarkScene load_scene(const std::string& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(slurp(dir + "/manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(dir + "/manifest.json: " + e.what());
  }
  if (!manifest.contains("format") || manifest["format"].get<int>() != 1)
    throw ParseError(dir + "/manifest.json: unsupported format");

  BenchmarkScene sc;
  sc.seed = manifest["seed"].get<uint64_t>();
  const auto& jc = manifest["config"];
  sc.cfg.gaussians = jc["gaussians"].get<int64_t>();
  sc.cfg.static_views = jc["static_views"].get<int>();
  sc.cfg.image_size = jc["image_size"].get<int>();
  sc.cfg.t_frames = jc["t_frames"].get<int64_t>();
  sc.cfg.fps = jc["fps"].get<double>();
  sc.cfg.f_audio = jc["f_audio"].get<int>();
  sc.cfg.blob_radius = jc["blob_radius"].get<double>();
  sc.cfg.mouth_radius = jc["mouth_radius"].get<double>();
  sc.cfg.open_amp_frac = jc["open_amp_frac"].get<double>();
  sc.cfg.sway_amp_frac = jc["sway_amp_frac"].get<double>();
  sc.cfg.lip_points = jc["lip_points"].get<int64_t>();
  sc.cfg.landmark_count = jc["landmark_count"].get<int>();
  sc.cfg.cam_distance = jc["cam_distance"].get<double>();
  sc.cfg.focal_px = jc["focal_px"].get<double>();
  sc.cfg.motion_amplitude = jc["motion_amplitude"].get<double>();

  sc.set = read_ply(dir + "/head.ply");
  sc.set.box_min = manifest["box_min"].get<std::array<double, 3>>();
  sc.set.box_max = manifest["box_max"].get<std::array<double, 3>>();
  sc.static_cams = read_camera_file(dir + "/cameras_static.txt");
  std::vector<Camera> anim_cams = read_camera_file(dir + "/camera_anim.txt");
  if (anim_cams.size() != 1)
    throw ParseError(dir + "/camera_anim.txt: expected one camera");
  sc.anim_cam = anim_cams[0];

  sc.audio = read_feature_file(dir + "/features.bin");
  sc.lip_frames = read_lip_file(dir + "/lips.bin");
  std::vector<Mat> tmpl = read_lip_file(dir + "/template.bin");
  if (tmpl.size() != 1) throw ParseError(dir + "/template.bin: expected one frame");
  sc.lip_template = tmpl[0];

  {
    std::istringstream in(slurp(dir + "/markers.txt"));
    int64_t idx;
    while (in >> idx) sc.markers.push_back(idx);
    if (int(sc.markers.size()) != sc.cfg.landmark_count)
      throw ParseError(dir + "/markers.txt: marker count mismatch");
  }
  {
    std::istringstream in(slurp(dir + "/landmarks.txt"));
    sc.landmarks_px = Mat(sc.cfg.t_frames, int64_t(sc.cfg.landmark_count) * 2);
    for (int64_t i = 0; i < sc.landmarks_px.size(); ++i)
      if (!(in >> sc.landmarks_px.v[i]))
        throw ParseError(dir + "/landmarks.txt: truncated");
  }
  {
    std::istringstream in(slurp(dir + "/opening.txt"));
    double o, s;
    while (in >> o >> s) {
      sc.opening.push_back(o);
      sc.sway.push_back(s);
    }
    if (int64_t(sc.opening.size()) != sc.cfg.t_frames)
      throw ParseError(dir + "/opening.txt: track length mismatch");
  }
  {
    std::vector<uint8_t> bytes = read_file_bytes(dir + "/gt_anim.bin");
    ByteReader r(bytes.data(), bytes.size(), dir + "/gt_anim.bin");
    r.expect_magic(kAnimMagic);
    const uint32_t t = r.u32(), n = r.u32();
    if (int64_t(t) != sc.cfg.t_frames || int64_t(n) != sc.set.count())
      throw ParseError(dir + "/gt_anim.bin: header mismatch");
    for (uint32_t i = 0; i < t; ++i) {
      Mat dx(int64_t(n), 3);
      r.f64_array(dx.v.data(), size_t(dx.size()));
      sc.deltas.push_back(std::move(dx));
    }
  }
  if (sc.audio.features.rows != sc.cfg.t_frames ||
      int64_t(sc.lip_frames.size()) != sc.cfg.t_frames)
    throw ParseError(dir + ": conditions do not match t_frames");
  return sc;
}

}  // namespace splat
