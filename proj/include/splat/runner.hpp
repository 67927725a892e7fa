#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace splat {

struct GradCheckRow {
  std::string module;
  double max_rel_err = 0;
  double tolerance = 0;
  int64_t probes = 0;
  std::string worst_param;
  bool pass = false;
};

// Central-difference verification of every differentiable module. All rows
// use the strict tolerance except the full rasterizer chain, whose clamps
// and cutoffs warrant the relaxed one.
std::vector<GradCheckRow> run_gradcheck(uint64_t seed);

// Command-line entry point; never lets an exception escape.
int run_cli(int argc, const char* const* argv);

}  // namespace splat
