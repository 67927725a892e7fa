#pragma once

#include <string>

#include "splat/benchmark.hpp"
#include "splat/pipeline.hpp"

namespace splat {

// Whole-run configuration, parsed from a flat `key = value` text file.
// Unknown keys are rejected; `config_version = 1` is required.
struct RunConfig {
  BenchmarkConfig bench;
  PipelineConfig pipe;

  double lambda_dssim = 0.2;
  double lambda_proxy = 0.1;
  double lambda_cl = 0.01;
  int patch_count = 8;
  int patch_size = 32;

  int64_t static_iters = 5000;
  int64_t deform_iters = 2000;
  int64_t a2p_iters = 400;
  double lr_pos = 1.6e-4;  // multiplied by scene extent in the trainer
  double lr_rot = 1e-3;
  double lr_scale = 5e-3;
  double lr_opacity = 5e-2;
  double lr_color = 2.5e-3;
  double lr_tables = 5e-3;
  double lr_nets = 1e-3;
  double lr_a2p = 1e-3;
  int64_t densify_from = 500;
  int64_t densify_until = 3000;
  int64_t densify_interval = 200;
  double prune_alpha = 0.005;
  double grad_threshold = 2e-4;
  int64_t holdout_frames = 10;
  int64_t log_interval = 50;
  bool joint_a2p = false;
  bool unfreeze_canonical = false;
  uint64_t seed = 1;
};

RunConfig parse_config_text(const std::string& text, const std::string& origin);
RunConfig parse_config(const std::string& path);

}  // namespace splat
