#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "splat/errors.hpp"
#include "splat/mat.hpp"
#include "splat/rng.hpp"

namespace splat {

enum class Act { Identity, ReLU, Sigmoid, Tanh, Exp };

double act_apply(Act a, double z);
// derivative expressed from pre-activation z and activation value y
double act_deriv(Act a, double z, double y);

struct DenseCache {
  bool valid = false;
  Mat input;
  std::vector<Mat> z;  // pre-activations per layer
  std::vector<Mat> y;  // activations per layer
};

struct DenseGrads {
  std::vector<Mat> dW;
  std::vector<Mat> db;

  void accumulate(const DenseGrads& o);
};

// Plain MLP: y = act(x W + b) per layer. W is in x out, bias is 1 x out.
class DenseNet {
 public:
  DenseNet() = default;
  DenseNet(std::vector<int64_t> widths, std::vector<Act> acts);

  void init_glorot(Rng& rng);
  // Zero weights and biases of the final layer (quiescent-at-init decoders).
  void zero_last_layer();

  int64_t in_dim() const { return widths_.front(); }
  int64_t out_dim() const { return widths_.back(); }
  int layer_count() const { return static_cast<int>(acts_.size()); }

  Mat forward(const Mat& x) const;
  Mat forward_cached(const Mat& x, DenseCache& cache) const;
  // Returns dL/dx; parameter gradients accumulate into g (allocated on first use).
  Mat backward(const DenseCache& cache, const Mat& d_out, DenseGrads& g) const;

  DenseGrads make_grads() const;

  std::vector<Mat>& weights() { return W_; }
  std::vector<Mat>& biases() { return b_; }
  const std::vector<Mat>& weights() const { return W_; }
  const std::vector<Mat>& biases() const { return b_; }
  const std::vector<Act>& acts() const { return acts_; }

 private:
  std::vector<int64_t> widths_;
  std::vector<Act> acts_;
  std::vector<Mat> W_;
  std::vector<Mat> b_;
};

// Named parameter registry with per-entry Adam state and per-group learning
// rates. Gradients accumulate in store-owned buffers between zero_grads() and
// adam_step().
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Mat* p = nullptr;
    Mat grad;
    Mat m, v;
    int64_t step = 0;
    int group = 0;
  };

  int add_group(const std::string& name, double base_lr);
  int group_id(const std::string& name) const;
  double group_lr(int group) const;
  void set_group_lr_mult(int group, double mult);

  void reg(const std::string& name, Mat* p, int group);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Mat& grad(const std::string& name);
  Entry& entry(const std::string& name);
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  void zero_grads();
  // Adam with beta1=0.9, beta2=0.999, eps=1e-15 and bias correction, applied
  // to every registered tensor in registration order. Throws TrainAbortError
  // naming the parameter on a non-finite gradient.
  void adam_step();

  // After a row-structured parameter changed height: new row i of the moment
  // buffers copies old row row_map[i] (or zeros when row_map[i] < 0). The
  // parameter matrix itself must already hold its new contents.
  void rebind_rows(const std::string& name, const std::vector<int64_t>& row_map);

  // Convenience: register every layer of a net under "<prefix>.w<i>"/"<prefix>.b<i>".
  void reg_dense(const std::string& prefix, DenseNet& net, int group);
  // Accumulate DenseGrads into the matching store buffers.
  void add_dense_grads(const std::string& prefix, const DenseNet& net,
                       const DenseGrads& g);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
  std::vector<std::string> group_names_;
  std::vector<double> group_lr_;
  std::vector<double> group_mult_;
};

struct GradCheckReport {
  double max_rel_err = 0;
  std::string worst_param;
  int64_t worst_index = -1;
  double analytic = 0, numeric = 0;
  int64_t probes = 0;
};

struct GradCheckTarget {
  std::string name;
  Mat* param = nullptr;
  const Mat* analytic = nullptr;
};

// Central-difference check of analytic gradients for a deterministic scalar
// loss. Probes up to max_probes_per_tensor elements per target (evenly
// strided); rel. err. uses max(|a|,|n|,1) in the denominator.
GradCheckReport gradcheck(const std::function<double()>& loss,
                          const std::vector<GradCheckTarget>& targets,
                          double h = 1e-5, int64_t max_probes_per_tensor = 64);

}  // namespace splat
