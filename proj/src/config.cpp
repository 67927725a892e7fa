#include "splat/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "splat/errors.hpp"

namespace splat {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct Parser {
  std::string origin;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(origin + ": " + msg);
  }

  int64_t to_i64(const std::string& key, const std::string& v) const {
    char* end = nullptr;
    const long long r = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') fail(key + ": not an integer: " + v);
    return r;
  }
  uint64_t to_u64(const std::string& key, const std::string& v) const {
    char* end = nullptr;
    const unsigned long long r = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') fail(key + ": not an integer: " + v);
    return r;
  }
  double to_f64(const std::string& key, const std::string& v) const {
    char* end = nullptr;
    const double r = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') fail(key + ": not a number: " + v);
    return r;
  }
  bool to_bool(const std::string& key, const std::string& v) const {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(key + ": not a boolean: " + v);
  }
  GridEncoder::Kind to_kind(const std::string& key, const std::string& v) const {
    if (v == "hash") return GridEncoder::Kind::Hash3D;
    if (v == "triplane") return GridEncoder::Kind::TriPlane;
    fail(key + ": expected hash or triplane: " + v);
  }
};

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  Parser p{origin};
  RunConfig cfg;
  bool saw_version = false;

  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      p.fail("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      p.fail("line " + std::to_string(lineno) + ": empty key or value");

    if (key == "config_version") {
      if (p.to_i64(key, val) != 1) p.fail("unsupported config_version " + val);
      saw_version = true;
    } else if (key == "bench.gaussians") {
      cfg.bench.gaussians = p.to_i64(key, val);
    } else if (key == "bench.static_views") {
      cfg.bench.static_views = int(p.to_i64(key, val));
    } else if (key == "bench.image_size") {
      cfg.bench.image_size = int(p.to_i64(key, val));
    } else if (key == "bench.t_frames") {
      cfg.bench.t_frames = p.to_i64(key, val);
    } else if (key == "bench.fps") {
      cfg.bench.fps = p.to_f64(key, val);
    } else if (key == "bench.f_audio") {
      cfg.bench.f_audio = int(p.to_i64(key, val));
    } else if (key == "bench.blob_radius") {
      cfg.bench.blob_radius = p.to_f64(key, val);
    } else if (key == "bench.mouth_radius") {
      cfg.bench.mouth_radius = p.to_f64(key, val);
    } else if (key == "bench.open_amp_frac") {
      cfg.bench.open_amp_frac = p.to_f64(key, val);
    } else if (key == "bench.sway_amp_frac") {
      cfg.bench.sway_amp_frac = p.to_f64(key, val);
    } else if (key == "bench.lip_points") {
      cfg.bench.lip_points = p.to_i64(key, val);
    } else if (key == "bench.landmark_count") {
      cfg.bench.landmark_count = int(p.to_i64(key, val));
    } else if (key == "bench.cam_distance") {
      cfg.bench.cam_distance = p.to_f64(key, val);
    } else if (key == "bench.focal_px") {
      cfg.bench.focal_px = p.to_f64(key, val);
    } else if (key == "bench.motion_amplitude") {
      cfg.bench.motion_amplitude = p.to_f64(key, val);
    } else if (key == "pipe.spatial_kind") {
      cfg.pipe.spatial_kind = p.to_kind(key, val);
    } else if (key == "pipe.spatial_levels") {
      cfg.pipe.spatial_levels = int(p.to_i64(key, val));
    } else if (key == "pipe.spatial_feat") {
      cfg.pipe.spatial_feat = int(p.to_i64(key, val));
    } else if (key == "pipe.spatial_n_min") {
      cfg.pipe.spatial_n_min = int(p.to_i64(key, val));
    } else if (key == "pipe.spatial_growth") {
      cfg.pipe.spatial_growth = p.to_f64(key, val);
    } else if (key == "pipe.spatial_log2") {
      cfg.pipe.spatial_log2 = int(p.to_i64(key, val));
    } else if (key == "pipe.point_kind") {
      cfg.pipe.point_kind = p.to_kind(key, val);
    } else if (key == "pipe.point_levels") {
      cfg.pipe.point_levels = int(p.to_i64(key, val));
    } else if (key == "pipe.point_feat") {
      cfg.pipe.point_feat = int(p.to_i64(key, val));
    } else if (key == "pipe.point_n_min") {
      cfg.pipe.point_n_min = int(p.to_i64(key, val));
    } else if (key == "pipe.point_growth") {
      cfg.pipe.point_growth = p.to_f64(key, val);
    } else if (key == "pipe.point_log2") {
      cfg.pipe.point_log2 = int(p.to_i64(key, val));
    } else if (key == "pipe.f_cond") {
      cfg.pipe.f_cond = int(p.to_i64(key, val));
    } else if (key == "pipe.hidden") {
      cfg.pipe.hidden = int(p.to_i64(key, val));
    } else if (key == "pipe.window") {
      cfg.pipe.window = int(p.to_i64(key, val));
    } else if (key == "pipe.tau") {
      cfg.pipe.tau = p.to_f64(key, val);
    } else if (key == "pipe.a2p_tcn_channels") {
      cfg.pipe.a2p.tcn_channels = int(p.to_i64(key, val));
    } else if (key == "pipe.a2p_latent") {
      cfg.pipe.a2p.latent = int(p.to_i64(key, val));
    } else if (key == "pipe.a2p_embed") {
      cfg.pipe.a2p.embed = int(p.to_i64(key, val));
    } else if (key == "pipe.a2p_hidden") {
      cfg.pipe.a2p.hidden = int(p.to_i64(key, val));
    } else if (key == "loss.lambda_dssim") {
      cfg.lambda_dssim = p.to_f64(key, val);
    } else if (key == "loss.lambda_proxy") {
      cfg.lambda_proxy = p.to_f64(key, val);
    } else if (key == "loss.lambda_cl") {
      cfg.lambda_cl = p.to_f64(key, val);
    } else if (key == "loss.patch_count") {
      cfg.patch_count = int(p.to_i64(key, val));
    } else if (key == "loss.patch_size") {
      cfg.patch_size = int(p.to_i64(key, val));
    } else if (key == "train.static_iters") {
      cfg.static_iters = p.to_i64(key, val);
    } else if (key == "train.deform_iters") {
      cfg.deform_iters = p.to_i64(key, val);
    } else if (key == "train.a2p_iters") {
      cfg.a2p_iters = p.to_i64(key, val);
    } else if (key == "train.lr_pos") {
      cfg.lr_pos = p.to_f64(key, val);
    } else if (key == "train.lr_rot") {
      cfg.lr_rot = p.to_f64(key, val);
    } else if (key == "train.lr_scale") {
      cfg.lr_scale = p.to_f64(key, val);
    } else if (key == "train.lr_opacity") {
      cfg.lr_opacity = p.to_f64(key, val);
    } else if (key == "train.lr_color") {
      cfg.lr_color = p.to_f64(key, val);
    } else if (key == "train.lr_tables") {
      cfg.lr_tables = p.to_f64(key, val);
    } else if (key == "train.lr_nets") {
      cfg.lr_nets = p.to_f64(key, val);
    } else if (key == "train.lr_a2p") {
      cfg.lr_a2p = p.to_f64(key, val);
    } else if (key == "train.densify_from") {
      cfg.densify_from = p.to_i64(key, val);
    } else if (key == "train.densify_until") {
      cfg.densify_until = p.to_i64(key, val);
    } else if (key == "train.densify_interval") {
      cfg.densify_interval = p.to_i64(key, val);
    } else if (key == "train.prune_alpha") {
      cfg.prune_alpha = p.to_f64(key, val);
    } else if (key == "train.grad_threshold") {
      cfg.grad_threshold = p.to_f64(key, val);
    } else if (key == "train.holdout_frames") {
      cfg.holdout_frames = p.to_i64(key, val);
    } else if (key == "train.log_interval") {
      cfg.log_interval = p.to_i64(key, val);
    } else if (key == "train.joint_a2p") {
      cfg.joint_a2p = p.to_bool(key, val);
    } else if (key == "train.unfreeze_canonical") {
      cfg.unfreeze_canonical = p.to_bool(key, val);
    } else if (key == "train.seed") {
      cfg.seed = p.to_u64(key, val);
    } else {
      p.fail("unknown key: " + key);
    }
  }
  if (!saw_version) p.fail("missing config_version");
  cfg.pipe.a2p.f_audio = cfg.bench.f_audio;
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open config");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

}  // namespace splat
