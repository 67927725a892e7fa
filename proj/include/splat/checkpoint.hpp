#pragma once

#include <string>
#include <vector>

#include "splat/gaussians.hpp"
#include "splat/nn.hpp"
#include "splat/rng.hpp"

namespace splat {

// Everything needed to continue a training run bitwise: the Gaussian set,
// every optimizer tensor with its Adam state, the RNG, and the densification
// statistics. Serialized as "PTCKPT1\0" + versioned named sections.
struct CheckpointParam {
  std::string name;
  int32_t group = 0;
  Mat value, m, v;
  int64_t step = 0;
};

struct CheckpointState {
  uint32_t stage = 0;  // 0 static, 1 deform
  int64_t iteration = 0;
  uint64_t seed = 0;
  uint64_t rng_state = 0, rng_inc = 0;
  bool rng_has_normal = false;
  double rng_cached_normal = 0.0;
  GaussianSet set;
  DensifyStats densify;
  std::vector<CheckpointParam> params;
};

void save_checkpoint(const std::string& path, const CheckpointState& st);
CheckpointState load_checkpoint(const std::string& path);

void capture_rng(const Rng& rng, CheckpointState& st);
void restore_rng(const CheckpointState& st, Rng& rng);

// Copies every registered tensor (value + Adam state) into st.params in
// registration order.
void capture_params(const ParamStore& ps, CheckpointState& st);
// The store must hold exactly the checkpoint's parameters with matching
// shapes; ParseError names the first mismatch.
void restore_params(const CheckpointState& st, ParamStore& ps);

}  // namespace splat
