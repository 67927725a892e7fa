#pragma once

#include <string>
#include <vector>

#include "splat/conditions.hpp"
#include "splat/gaussians.hpp"
#include "splat/image.hpp"
#include "splat/rasterizer.hpp"

namespace splat {

// Synthetic "talking blob": a Gaussian sphere whose mouth region opens with
// the audio opening track while the whole head sways laterally. Serves as
// the closed-loop ground truth for both training stages.
struct BenchmarkConfig {
  int64_t gaussians = 2000;
  int static_views = 100;
  int image_size = 64;
  int64_t t_frames = 50;
  double fps = 25.0;
  int f_audio = 16;
  double blob_radius = 0.45;
  double mouth_radius = 0.22;     // world distance from mouth center
  double open_amp_frac = 0.006;   // of scene extent
  double sway_amp_frac = 0.0015;  // of scene extent
  int64_t lip_points = 200;
  int landmark_count = 8;
  double cam_distance = 2.1;
  double focal_px = 70.0;
  double motion_amplitude = 1.0;  // 0 freezes the animation
};

struct BenchmarkScene {
  BenchmarkConfig cfg;
  uint64_t seed = 0;
  GaussianSet set;               // canonical head, marker flags set
  std::vector<int64_t> markers;  // K Gaussian indices on the mouth ring
  std::vector<Camera> static_cams;
  Camera anim_cam;
  AudioFeatureSequence audio;
  std::vector<double> opening, sway;  // T each
  Mat lip_template;                   // M x 3
  std::vector<Mat> lip_frames;        // T mats, M x 3
  std::vector<Mat> deltas;            // T mats, N x 3 position offsets
  Mat landmarks_px;                   // T x (K*2), analytic projections
};

// Deterministic in-memory scene (no disk IO, no rendering).
BenchmarkScene build_scene(const BenchmarkConfig& cfg, uint64_t seed);
// Renders all ground-truth frames and writes the dataset directory:
// head.ply, cameras_static.txt, camera_anim.txt, static/ and anim/ frames as
// PNG + f32 dumps, features.bin, lips.bin, template.bin, markers.txt,
// landmarks.txt, opening.txt, gt_anim.bin, manifest.json.
void write_scene(const BenchmarkScene& scene, const std::string& dir,
                 const RenderOptions& opt = {});
BenchmarkScene generate_scene(const BenchmarkConfig& cfg, uint64_t seed,
                              const std::string& dir);
// Reads everything write_scene produced except the frame images.
BenchmarkScene load_scene(const std::string& dir);

std::string static_image_path(const std::string& dir, int i, bool png);
std::string anim_image_path(const std::string& dir, int64_t t, bool png);

// Per-frame pixel positions of the marker Gaussians under a position offset
// (nullptr = static head), row-major K x 2.
Mat project_markers(const GaussianSet& set, const std::vector<int64_t>& markers,
                    const Mat* dx, const Camera& cam);

void write_camera_file(const std::string& path, const std::vector<Camera>& cams);
std::vector<Camera> read_camera_file(const std::string& path);

}  // namespace splat
