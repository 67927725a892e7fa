#pragma once

#include <functional>
#include <string>
#include <vector>

#include "splat/benchmark.hpp"
#include "splat/checkpoint.hpp"
#include "splat/config.hpp"
#include "splat/losses.hpp"
#include "splat/pipeline.hpp"

namespace splat {

// Scene description plus the decoded raw frame dumps the trainers fit to.
struct TrainDataset {
  BenchmarkScene scene;
  std::vector<Image> static_images;
  std::vector<Image> anim_images;
};
TrainDataset load_dataset(const std::string& dir);

// One metrics-log record. wall_ms is the only wall-clock-dependent field any
// trainer emits; everything else is a pure function of config, seed and
// thread partition.
struct TrainLogRow {
  int64_t iteration = 0;
  double loss = 0, l1 = 0, dssim = 0, proxy = 0, lcl = 0;
  double psnr = 0;
  int64_t gaussians = 0;
  double wall_ms = 0;
};
std::string train_log_header();
std::string format_log_row(const TrainLogRow& row);

struct A2pLogRow {
  int64_t iteration = 0;
  double train_mse = 0, holdout_mse = 0;
  double wall_ms = 0;
};
std::string a2p_log_header();
std::string format_a2p_log_row(const A2pLogRow& row);

struct TrainResult {
  CheckpointState state;
  std::vector<TrainLogRow> log;
  std::vector<A2pLogRow> a2p_log;
  bool aborted = false;
  std::string abort_reason;
};

// `count` axis-aligned square patches, origins uniform over valid positions.
std::vector<Patch> sample_patches(Rng& rng, int width, int height, int count,
                                  int size);

// Stage 1: fits a fresh random Gaussian head (bench.gaussians points in the
// dataset box) to the static views with L1 + lambda_dssim * D-SSIM, Adam,
// and periodic densify/prune. `resume` continues a previous run bitwise.
// `stop_iteration` interrupts early without changing any schedule (the lr
// decay horizon stays cfg.static_iters). A non-finite loss or gradient
// aborts with the last finite state.
TrainResult train_static(const TrainDataset& data, const RunConfig& cfg,
                         const CheckpointState* resume = nullptr,
                         const std::function<void(const TrainLogRow&)>& sink = {},
                         int64_t stop_iteration = -1);

// Rebuilds the deformation model for a head with the given box/extent; the
// lip encoder box is the template bounding box padded by a quarter of its
// diagonal per side. Deterministic, so checkpoints restore into it.
DeformModel build_deform_model(const RunConfig& cfg, const BenchmarkScene& scene,
                               const GaussianSet& head);

// Stage 2: audio-conditioned deformation on top of a static checkpoint.
// The audio-to-point net is fitted to the dataset lip tracks first (frames
// [0, T - holdout_frames) train, tail validates) and stays frozen unless
// joint_a2p; canonical Gaussians stay frozen unless unfreeze_canonical.
// Each iteration renders one training frame and applies Eq-style total loss
// l1 + lambda_dssim*dssim + lambda_proxy*proxy + lambda_cl*lcl, with the
// proxy term over patch_count random patches of patch_size.
TrainResult train_deform(const TrainDataset& data, const RunConfig& cfg,
                         const CheckpointState& static_state,
                         const CheckpointState* resume = nullptr,
                         const std::function<void(const TrainLogRow&)>& sink = {},
                         int64_t stop_iteration = -1);

// Deform checkpoint loaded back into a usable model + head. The config must
// be the one the checkpoint was trained with (shapes are validated on
// restore).
struct RestoredDeform {
  GaussianSet set;
  DeformModel model;
};
RestoredDeform restore_deform(const RunConfig& cfg, const BenchmarkScene& scene,
                              const CheckpointState& state);

// Per-frame evaluation of a deform checkpoint against the dataset. Landmark
// error probes the deformation field at the dataset's marker Gaussians;
// lmd_static is the zero-deformation baseline of the same probes.
struct MetricsRow {
  int64_t frame = 0;
  bool holdout = false;
  double psnr = 0, ssim = 0, lmd = 0, lmd_static = 0;
};
std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);

std::vector<MetricsRow> evaluate_deform(const TrainDataset& data,
                                        const RunConfig& cfg,
                                        const CheckpointState& deform_state);

// Mean over rows (PSNR averaged over finite entries; +inf when all are).
struct MetricsSummary {
  double psnr = 0, ssim = 0, lmd = 0, lmd_static = 0;
  int64_t frames = 0;
};
MetricsSummary summarize_metrics(const std::vector<MetricsRow>& rows,
                                 bool holdout_only);

}  // namespace splat
