#pragma once

#include <stdexcept>
#include <string>

namespace splat {

// File-format problems (magic/version mismatch, truncation, bad header).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/matrix dimension mismatches.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation called in the wrong order (e.g. backward without forward cache).
struct StateError : std::runtime_error {
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SingularCovarianceError : std::runtime_error {
  explicit SingularCovarianceError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// A feature row with zero norm where a cosine similarity is required.
struct DegenerateFeatureError : std::runtime_error {
  explicit DegenerateFeatureError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Training aborted (non-finite loss/gradient); message names the culprit.
struct TrainAbortError : std::runtime_error {
  explicit TrainAbortError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace splat
