#include "splat/nn.hpp"

#include <cmath>

namespace splat {

double act_apply(Act a, double z) {
  switch (a) {
    case Act::Identity: return z;
    case Act::ReLU: return z > 0 ? z : 0.0;
    case Act::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case Act::Tanh: return std::tanh(z);
    case Act::Exp: return std::exp(z);
  }
  return z;
}

double act_deriv(Act a, double z, double y) {
  switch (a) {
    case Act::Identity: return 1.0;
    case Act::ReLU: return z > 0 ? 1.0 : 0.0;
    case Act::Sigmoid: return y * (1.0 - y);
    case Act::Tanh: return 1.0 - y * y;
    case Act::Exp: return y;
  }
  return 1.0;
}

void DenseGrads::accumulate(const DenseGrads& o) {
  if (dW.empty()) {
    dW = o.dW;
    db = o.db;
    return;
  }
  for (size_t i = 0; i < dW.size(); ++i) {
    add_inplace(dW[i], o.dW[i]);
    add_inplace(db[i], o.db[i]);
  }
}

DenseNet::DenseNet(std::vector<int64_t> widths, std::vector<Act> acts)
    : widths_(std::move(widths)), acts_(std::move(acts)) {
  if (widths_.size() < 2 || acts_.size() != widths_.size() - 1)
    throw ShapeError("DenseNet: need n widths and n-1 activations");
  for (size_t l = 0; l + 1 < widths_.size(); ++l) {
    W_.emplace_back(widths_[l], widths_[l + 1]);
    b_.emplace_back(1, widths_[l + 1]);
  }
}

void DenseNet::init_glorot(Rng& rng) {
  for (auto& w : W_) {
    double bound = std::sqrt(6.0 / double(w.rows + w.cols));
    for (auto& x : w.v) x = rng.uniform(-bound, bound);
  }
  for (auto& b : b_) b.fill(0.0);
}

void DenseNet::zero_last_layer() {
  W_.back().fill(0.0);
  b_.back().fill(0.0);
}

Mat DenseNet::forward(const Mat& x) const {
  DenseCache scratch;
  return forward_cached(x, scratch);
}

Mat DenseNet::forward_cached(const Mat& x, DenseCache& cache) const {
  if (x.cols != widths_.front())
    throw ShapeError("DenseNet: input width " + std::to_string(x.cols) +
                     " != " + std::to_string(widths_.front()));
  cache.input = x;
  cache.z.clear();
  cache.y.clear();
  Mat cur = x;
  for (size_t l = 0; l < W_.size(); ++l) {
    Mat z = matmul(cur, W_[l]);
    add_row_inplace(z, b_[l].v);
    Mat y(z.rows, z.cols);
    for (int64_t i = 0; i < z.size(); ++i) y.v[i] = act_apply(acts_[l], z.v[i]);
    cache.z.push_back(z);
    cache.y.push_back(y);
    cur = y;
  }
  cache.valid = true;
  return cur;
}

Mat DenseNet::backward(const DenseCache& cache, const Mat& d_out,
                       DenseGrads& g) const {
  if (!cache.valid) throw StateError("DenseNet::backward: no forward cache");
  if (d_out.rows != cache.y.back().rows || d_out.cols != cache.y.back().cols)
    throw ShapeError("DenseNet::backward: upstream shape mismatch");
  if (g.dW.empty()) {
    for (size_t l = 0; l < W_.size(); ++l) {
      g.dW.emplace_back(W_[l].rows, W_[l].cols);
      g.db.emplace_back(1, b_[l].cols);
    }
  }
  Mat d = d_out;
  for (int l = layer_count() - 1; l >= 0; --l) {
    const Mat& z = cache.z[l];
    const Mat& y = cache.y[l];
    Mat dz(z.rows, z.cols);
    for (int64_t i = 0; i < z.size(); ++i)
      dz.v[i] = d.v[i] * act_deriv(acts_[l], z.v[i], y.v[i]);
    const Mat& prev = l == 0 ? cache.input : cache.y[l - 1];
    add_inplace(g.dW[l], matmul_tn(prev, dz));
    auto cs = col_sum(dz);
    for (int64_t j = 0; j < g.db[l].cols; ++j) g.db[l].v[j] += cs[j];
    d = matmul_nt(dz, W_[l]);
  }
  return d;
}

DenseGrads DenseNet::make_grads() const {
  DenseGrads g;
  for (size_t l = 0; l < W_.size(); ++l) {
    g.dW.emplace_back(W_[l].rows, W_[l].cols);
    g.db.emplace_back(1, b_[l].cols);
  }
  return g;
}

int ParamStore::add_group(const std::string& name, double base_lr) {
  group_names_.push_back(name);
  group_lr_.push_back(base_lr);
  group_mult_.push_back(1.0);
  return static_cast<int>(group_names_.size()) - 1;
}

int ParamStore::group_id(const std::string& name) const {
  for (size_t i = 0; i < group_names_.size(); ++i)
    if (group_names_[i] == name) return static_cast<int>(i);
  throw StateError("ParamStore: unknown group '" + name + "'");
}

double ParamStore::group_lr(int group) const {
  return group_lr_.at(group) * group_mult_.at(group);
}

void ParamStore::set_group_lr_mult(int group, double mult) {
  group_mult_.at(group) = mult;
}

void ParamStore::reg(const std::string& name, Mat* p, int group) {
  if (index_.count(name)) throw StateError("ParamStore: duplicate parameter '" + name + "'");
  if (group < 0 || group >= static_cast<int>(group_lr_.size()))
    throw StateError("ParamStore: bad group for '" + name + "'");
  Entry e;
  e.name = name;
  e.p = p;
  e.grad = Mat(p->rows, p->cols);
  e.m = Mat(p->rows, p->cols);
  e.v = Mat(p->rows, p->cols);
  e.group = group;
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
}

Mat& ParamStore::grad(const std::string& name) { return entry(name).grad; }

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw StateError("ParamStore: unknown parameter '" + name + "'");
  return entries_[it->second];
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

void ParamStore::adam_step() {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-15;
  for (auto& e : entries_) {
    for (int64_t i = 0; i < e.grad.size(); ++i)
      if (!std::isfinite(e.grad.v[i]))
        throw TrainAbortError("adam_step: non-finite gradient in parameter '" +
                              e.name + "' at element " + std::to_string(i));
    e.step += 1;
    double lr = group_lr(e.group);
    double c1 = 1.0 - std::pow(b1, double(e.step));
    double c2 = 1.0 - std::pow(b2, double(e.step));
    for (int64_t i = 0; i < e.grad.size(); ++i) {
      double g = e.grad.v[i];
      e.m.v[i] = b1 * e.m.v[i] + (1 - b1) * g;
      e.v.v[i] = b2 * e.v.v[i] + (1 - b2) * g * g;
      double mh = e.m.v[i] / c1;
      double vh = e.v.v[i] / c2;
      e.p->v[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
}

void ParamStore::rebind_rows(const std::string& name,
                             const std::vector<int64_t>& row_map) {
  Entry& e = entry(name);
  int64_t new_rows = static_cast<int64_t>(row_map.size());
  if (e.p->rows != new_rows)
    throw ShapeError("rebind_rows: parameter '" + name + "' has " +
                     std::to_string(e.p->rows) + " rows, map has " +
                     std::to_string(new_rows));
  int64_t cols = e.p->cols;
  Mat m(new_rows, cols), v(new_rows, cols);
  for (int64_t r = 0; r < new_rows; ++r) {
    int64_t src = row_map[r];
    if (src < 0) continue;
    for (int64_t c = 0; c < cols; ++c) {
      m(r, c) = e.m(src, c);
      v(r, c) = e.v(src, c);
    }
  }
  e.m = std::move(m);
  e.v = std::move(v);
  e.grad = Mat(new_rows, cols);
}

void ParamStore::reg_dense(const std::string& prefix, DenseNet& net, int group) {
  for (int l = 0; l < net.layer_count(); ++l) {
    reg(prefix + ".w" + std::to_string(l), &net.weights()[l], group);
    reg(prefix + ".b" + std::to_string(l), &net.biases()[l], group);
  }
}

void ParamStore::add_dense_grads(const std::string& prefix, const DenseNet& net,
                                 const DenseGrads& g) {
  for (int l = 0; l < net.layer_count(); ++l) {
    add_inplace(grad(prefix + ".w" + std::to_string(l)), g.dW[l]);
    add_inplace(grad(prefix + ".b" + std::to_string(l)), g.db[l]);
  }
}

GradCheckReport gradcheck(const std::function<double()>& loss,
                          const std::vector<GradCheckTarget>& targets, double h,
                          int64_t max_probes_per_tensor) {
  GradCheckReport rep;
  for (const auto& t : targets) {
    int64_t n = t.param->size();
    if (t.analytic->size() != n)
      throw ShapeError("gradcheck: gradient shape mismatch for '" + t.name + "'");
    int64_t stride = n <= max_probes_per_tensor ? 1 : n / max_probes_per_tensor;
    for (int64_t i = 0; i < n; i += stride) {
      double save = t.param->v[i];
      t.param->v[i] = save + h;
      double hi = loss();
      t.param->v[i] = save - h;
      double lo = loss();
      t.param->v[i] = save;
      double num = (hi - lo) / (2 * h);
      double ana = t.analytic->v[i];
      double err = std::abs(ana - num) /
                   std::max({std::abs(ana), std::abs(num), 1.0});
      ++rep.probes;
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.worst_param = t.name;
        rep.worst_index = i;
        rep.analytic = ana;
        rep.numeric = num;
      }
    }
  }
  return rep;
}

}  // namespace splat
