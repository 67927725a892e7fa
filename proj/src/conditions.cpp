#include "splat/conditions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "splat/serial.hpp"

namespace splat {

static const char kFeatMagic[8] = {'P', 'T', 'F', 'E', 'A', 'T', '1', '\0'};
static const char kLipMagic[8] = {'P', 'T', 'L', 'I', 'P', '1', '\0', '\0'};

void write_feature_file(const std::string& path, const AudioFeatureSequence& seq) {
  ByteWriter w;
  w.raw(kFeatMagic, 8);
  w.u32(static_cast<uint32_t>(seq.features.rows));
  w.u32(static_cast<uint32_t>(seq.features.cols));
  w.f32(static_cast<float>(seq.fps));
  w.f32_array_from_f64(seq.features.data(), static_cast<size_t>(seq.features.size()));
  write_file_bytes(path, w.bytes);
}

AudioFeatureSequence read_feature_file(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  ByteReader r(bytes.data(), bytes.size(), path);
  r.expect_magic(kFeatMagic);
  const uint32_t t = r.u32();
  const uint32_t f = r.u32();
  AudioFeatureSequence seq;
  seq.fps = r.f32();
  if (t < 2 || f == 0)
    throw ParseError(path + ": feature file needs T >= 2 and F >= 1, got T=" +
                     std::to_string(t) + " F=" + std::to_string(f));
  seq.features = Mat(t, f);
  r.f64_array_from_f32(seq.features.data(), static_cast<size_t>(t) * f);
  for (int64_t i = 0; i < seq.features.size(); ++i)
    if (!std::isfinite(seq.features.v[i]))
      throw ParseError(path + ": non-finite feature value at index " + std::to_string(i));
  return seq;
}

void write_lip_file(const std::string& path, const std::vector<Mat>& frames) {
  if (frames.empty()) throw std::invalid_argument("write_lip_file: no frames");
  const int64_t n = frames[0].rows;
  ByteWriter w;
  w.raw(kLipMagic, 8);
  w.u32(static_cast<uint32_t>(frames.size()));
  w.u32(static_cast<uint32_t>(n));
  for (const Mat& fr : frames) {
    require_shape(fr, n, 3, "lip frame");
    w.f32_array_from_f64(fr.data(), static_cast<size_t>(fr.size()));
  }
  write_file_bytes(path, w.bytes);
}

std::vector<Mat> read_lip_file(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  ByteReader r(bytes.data(), bytes.size(), path);
  r.expect_magic(kLipMagic);
  const uint32_t t = r.u32();
  const uint32_t n = r.u32();
  if (t == 0 || n < 3)
    throw ParseError(path + ": lip file needs T >= 1 and N >= 3, got T=" +
                     std::to_string(t) + " N=" + std::to_string(n));
  std::vector<Mat> frames(t, Mat(n, 3));
  for (Mat& fr : frames) r.f64_array_from_f32(fr.data(), static_cast<size_t>(n) * 3);
  return frames;
}

Tcn::Tcn(int c_in, int c_out, std::vector<int> dilations)
    : c_in_(c_in), c_out_(c_out), dil_(std::move(dilations)) {
  if (dil_.empty()) throw std::invalid_argument("Tcn: no layers");
  for (size_t l = 0; l < dil_.size(); ++l) {
    const int ci = l == 0 ? c_in_ : c_out_;
    w_.emplace_back(3 * ci, c_out_);
    b_.emplace_back(1, c_out_);
  }
}

void Tcn::init_glorot(Rng& rng) {
  for (Mat& w : w_) {
    const double s = std::sqrt(6.0 / double(w.rows + w.cols));
    for (int64_t i = 0; i < w.size(); ++i) w.v[i] = rng.uniform(-s, s);
  }
  for (Mat& b : b_) b.fill(0.0);
}

int Tcn::receptive_field() const {
  int rf = 1;
  for (int d : dil_) rf += 2 * d;
  return rf;
}

Mat Tcn::forward(const Mat& x, Cache* cache) const {
  if (x.cols != c_in_)
    throw ShapeError("Tcn: input width " + std::to_string(x.cols) +
                     ", expected " + std::to_string(c_in_));
  if (cache) {
    cache->valid = true;
    cache->x.clear();
    cache->z.clear();
  }
  Mat cur = x;
  for (size_t l = 0; l < dil_.size(); ++l) {
    const int d = dil_[l];
    const int ci = static_cast<int>(cur.cols);
    const Mat& w = w_[l];
    Mat z(cur.rows, c_out_);
    for (int64_t t = 0; t < cur.rows; ++t) {
      double* zr = z.row(t);
      for (int c = 0; c < c_out_; ++c) zr[c] = b_[l](0, c);
      for (int k = 0; k < 3; ++k) {
        const int64_t src = t - int64_t(2 - k) * d;
        if (src < 0) continue;
        const double* xr = cur.row(src);
        const double* wk = w.data() + size_t(k) * ci * c_out_;
        for (int i = 0; i < ci; ++i) {
          const double xv = xr[i];
          if (xv == 0.0) continue;
          const double* wr = wk + size_t(i) * c_out_;
          for (int c = 0; c < c_out_; ++c) zr[c] += xv * wr[c];
        }
      }
    }
    if (cache) {
      cache->x.push_back(cur);
      cache->z.push_back(z);
    }
    const bool last = l + 1 == dil_.size();
    if (!last)
      for (int64_t i = 0; i < z.size(); ++i)
        if (z.v[i] < 0) z.v[i] = 0;
    cur = std::move(z);
  }
  return cur;
}

Mat Tcn::backward(const Cache& cache, const Mat& d_out, std::vector<Mat>& dw,
                  std::vector<Mat>& db) const {
  if (!cache.valid) throw StateError("Tcn::backward without a forward cache");
  Mat d = d_out;
  for (int l = layer_count() - 1; l >= 0; --l) {
    const int dd = dil_[l];
    const Mat& x = cache.x[l];
    const Mat& z = cache.z[l];
    const int ci = static_cast<int>(x.cols);
    const bool last = l + 1 == layer_count();
    if (!last)
      for (int64_t i = 0; i < d.size(); ++i)
        if (z.v[i] < 0) d.v[i] = 0;
    Mat dx(x.rows, ci);
    for (int64_t t = 0; t < x.rows; ++t) {
      const double* dr = d.row(t);
      for (int c = 0; c < c_out_; ++c) db[l](0, c) += dr[c];
      for (int k = 0; k < 3; ++k) {
        const int64_t src = t - int64_t(2 - k) * dd;
        if (src < 0) continue;
        const double* xr = x.row(src);
        double* dxr = dx.row(src);
        double* dwk = dw[l].data() + size_t(k) * ci * c_out_;
        const double* wk = w_[l].data() + size_t(k) * ci * c_out_;
        for (int i = 0; i < ci; ++i) {
          const double xv = xr[i];
          double acc = 0;
          double* dwr = dwk + size_t(i) * c_out_;
          const double* wr = wk + size_t(i) * c_out_;
          for (int c = 0; c < c_out_; ++c) {
            dwr[c] += xv * dr[c];
            acc += wr[c] * dr[c];
          }
          dxr[i] += acc;
        }
      }
    }
    d = std::move(dx);
  }
  return d;
}

Audio2PointNet::Audio2PointNet(const Audio2PointConfig& cfg,
                               const Mat& template_points,
                               std::vector<int64_t> lip_index)
    : cfg_(cfg), template_(template_points), lip_index_(std::move(lip_index)) {
  require_shape(template_, template_.rows, 3, "audio2point template");
  if (template_.rows < 3 || lip_index_.size() < 3)
    throw std::invalid_argument("Audio2PointNet: need at least 3 template points");
  for (int64_t i : lip_index_)
    if (i < 0 || i >= template_.rows)
      throw std::invalid_argument("Audio2PointNet: lip index out of range");
  tcn_ = Tcn(cfg_.f_audio, cfg_.tcn_channels, cfg_.dilations);
  enc_ = DenseNet({cfg_.tcn_channels, cfg_.hidden, cfg_.latent}, {Act::ReLU, Act::Identity});
  dec_ = DenseNet({cfg_.latent + cfg_.embed, cfg_.hidden, template_.rows * 3},
                  {Act::ReLU, Act::Identity});
  embed_ = Mat(1, cfg_.embed);
}

void Audio2PointNet::init(Rng& rng) {
  tcn_.init_glorot(rng);
  enc_.init_glorot(rng);
  dec_.init_glorot(rng);
  dec_.zero_last_layer();
  for (int64_t i = 0; i < embed_.size(); ++i) embed_.v[i] = 0.1 * rng.normal();
}

Mat Audio2PointNet::offsets(const Mat& audio, Cache* cache) const {
  if (audio.cols != cfg_.f_audio)
    throw ShapeError("audio2point: feature width " + std::to_string(audio.cols) +
                     ", net expects " + std::to_string(cfg_.f_audio));
  Cache local;
  Cache& c = cache ? *cache : local;
  c.valid = true;
  c.t = audio.rows;
  Mat h = tcn_.forward(audio, &c.tcn);
  Mat z = enc_.forward_cached(h, c.enc);
  c.dec_in = Mat(audio.rows, cfg_.latent + cfg_.embed);
  for (int64_t t = 0; t < audio.rows; ++t) {
    double* r = c.dec_in.row(t);
    const double* zr = z.row(t);
    for (int i = 0; i < cfg_.latent; ++i) r[i] = zr[i];
    for (int i = 0; i < cfg_.embed; ++i) r[cfg_.latent + i] = embed_(0, i);
  }
  return dec_.forward_cached(c.dec_in, c.dec);
}

std::vector<Mat> Audio2PointNet::forward(const Mat& audio, Cache* cache) const {
  Mat off = offsets(audio, cache);
  std::vector<Mat> out;
  out.reserve(static_cast<size_t>(audio.rows));
  for (int64_t t = 0; t < audio.rows; ++t) {
    Mat fr(point_count(), 3);
    const double* o = off.row(t);
    for (int64_t j = 0; j < point_count(); ++j) {
      const int64_t src = lip_index_[static_cast<size_t>(j)];
      for (int k = 0; k < 3; ++k)
        fr(j, k) = template_(src, k) + o[src * 3 + k];
    }
    out.push_back(std::move(fr));
  }
  return out;
}

Audio2PointNet::Grads Audio2PointNet::make_grads() const {
  Grads g;
  for (const Mat& w : tcn_.weights()) g.tcn_w.emplace_back(w.rows, w.cols);
  for (const Mat& b : tcn_.biases()) g.tcn_b.emplace_back(b.rows, b.cols);
  g.enc = enc_.make_grads();
  g.dec = dec_.make_grads();
  g.embed = Mat(1, cfg_.embed);
  return g;
}

void Audio2PointNet::backward_offsets(const Cache& cache, const Mat& d_offsets,
                                      Grads& g) const {
  if (!cache.valid) throw StateError("audio2point backward without forward cache");
  Mat d_dec_in = dec_.backward(cache.dec, d_offsets, g.dec);
  Mat dz(cache.t, cfg_.latent);
  for (int64_t t = 0; t < cache.t; ++t) {
    const double* r = d_dec_in.row(t);
    for (int i = 0; i < cfg_.latent; ++i) dz(t, i) = r[i];
    for (int i = 0; i < cfg_.embed; ++i) g.embed(0, i) += r[cfg_.latent + i];
  }
  Mat dh = enc_.backward(cache.enc, dz, g.enc);
  tcn_.backward(cache.tcn, dh, g.tcn_w, g.tcn_b);
}

void Audio2PointNet::backward(const Cache& cache, const std::vector<Mat>& d_frames,
                              Grads& g) const {
  Mat d_off(cache.t, template_.rows * 3);
  for (int64_t t = 0; t < cache.t; ++t) {
    double* o = d_off.row(t);
    const Mat& df = d_frames[static_cast<size_t>(t)];
    for (int64_t j = 0; j < point_count(); ++j) {
      const int64_t src = lip_index_[static_cast<size_t>(j)];
      for (int k = 0; k < 3; ++k) o[src * 3 + k] += df(j, k);
    }
  }
  backward_offsets(cache, d_off, g);
}

Mat frame_point_feature(const GridEncoder& grid, const DenseNet& proj,
                        const Mat& points, PointFeatureCache* cache) {
  require_shape(points, points.rows, 3, "frame_point_feature points");
  if (points.rows == 0)
    throw std::invalid_argument("frame_point_feature: empty point cloud");
  const int d = grid.out_dim();
  PointFeatureCache local;
  PointFeatureCache& c = cache ? *cache : local;
  c.valid = true;
  c.n = points.rows;
  c.enc = Mat(points.rows, d);
  for (int64_t i = 0; i < points.rows; ++i) grid.encode(points.row(i), c.enc.row(i));
  c.pooled = Mat(1, 2 * d);
  c.argmax.assign(static_cast<size_t>(d), 0);
  // mean accumulates in sorted value order so that the pooled feature is a
  // function of the value multiset alone (exact permutation invariance)
  std::vector<double> col(static_cast<size_t>(points.rows));
  for (int j = 0; j < d; ++j) {
    for (int64_t i = 0; i < points.rows; ++i)
      col[static_cast<size_t>(i)] = c.enc(i, j);
    std::sort(col.begin(), col.end());
    double mean = 0;
    for (double v : col) mean += v;
    const double best = col.back();
    int64_t arg = 0;
    for (int64_t i = 0; i < points.rows; ++i)
      if (c.enc(i, j) == best) {
        arg = i;
        break;
      }
    c.pooled(0, j) = mean / double(points.rows);
    c.pooled(0, d + j) = best;
    c.argmax[static_cast<size_t>(j)] = arg;
  }
  return proj.forward_cached(c.pooled, c.proj);
}

void frame_point_feature_backward(const GridEncoder& grid, const DenseNet& proj,
                                  const Mat& points, const PointFeatureCache& cache,
                                  const Mat& d_row, std::vector<Mat>& d_tables,
                                  DenseGrads& d_proj, Mat* d_points) {
  if (!cache.valid) throw StateError("frame_point_feature backward without cache");
  const int d = grid.out_dim();
  Mat d_pooled = proj.backward(cache.proj, d_row, d_proj);
  Mat d_enc(cache.n, d);
  for (int j = 0; j < d; ++j) {
    const double gm = d_pooled(0, j) / double(cache.n);
    for (int64_t i = 0; i < cache.n; ++i) d_enc(i, j) += gm;
    d_enc(cache.argmax[static_cast<size_t>(j)], j) += d_pooled(0, d + j);
  }
  for (int64_t i = 0; i < cache.n; ++i)
    grid.encode_backward(points.row(i), d_enc.row(i), d_tables.data(),
                         d_points ? d_points->row(i) : nullptr);
}

Mat point_feature_rows(const GridEncoder& grid, const DenseNet& proj,
                       const std::vector<Mat>& frames,
                       std::vector<PointFeatureCache>* caches) {
  if (frames.empty()) throw std::invalid_argument("point_feature_rows: no frames");
  const int64_t t = static_cast<int64_t>(frames.size());
  Mat rows(t, proj.out_dim());
  if (caches) caches->assign(static_cast<size_t>(t), PointFeatureCache{});
  for (int64_t i = 0; i < t; ++i) {
    Mat r = frame_point_feature(grid, proj, frames[static_cast<size_t>(i)],
                                caches ? &(*caches)[static_cast<size_t>(i)] : nullptr);
    for (int64_t j = 0; j < rows.cols; ++j) rows(i, j) = r(0, j);
  }
  return rows;
}

Mat difference_encode(const DenseNet& mlp, const Mat& rows, DenseCache* cache,
                      Mat* pre_mlp) {
  if (rows.rows < 2)
    throw std::invalid_argument("difference_encode: need at least 2 frames, got " +
                                std::to_string(rows.rows));
  Mat diffs(rows.rows - 1, rows.cols);
  for (int64_t t = 0; t + 1 < rows.rows; ++t)
    for (int64_t j = 0; j < rows.cols; ++j) diffs(t, j) = rows(t + 1, j) - rows(t, j);
  if (pre_mlp) *pre_mlp = diffs;
  if (cache) return mlp.forward_cached(diffs, *cache);
  return mlp.forward(diffs);
}

Mat difference_encode_backward(const DenseNet& mlp, const DenseCache& cache,
                               const Mat& d_out, DenseGrads& d_mlp) {
  Mat d_diffs = mlp.backward(cache, d_out, d_mlp);
  Mat d_rows(d_diffs.rows + 1, d_diffs.cols);
  for (int64_t t = 0; t < d_diffs.rows; ++t)
    for (int64_t j = 0; j < d_diffs.cols; ++j) {
      d_rows(t + 1, j) += d_diffs(t, j);
      d_rows(t, j) -= d_diffs(t, j);
    }
  return d_rows;
}

Mat dynamic_difference_encode(const GridEncoder& grid, const DenseNet& proj,
                              const DenseNet& mlp, const std::vector<Mat>& frames,
                              Mat* pre_mlp) {
  if (frames.size() < 2)
    throw std::invalid_argument("dynamic_difference_encode: need T >= 2, got T=" +
                                std::to_string(frames.size()));
  Mat rows = point_feature_rows(grid, proj, frames);
  return difference_encode(mlp, rows, nullptr, pre_mlp);
}

SynthesizedAudio synthesize_benchmark_audio(const AudioSynthConfig& cfg,
                                            uint64_t seed) {
  if (cfg.t_frames < 2 || cfg.f_a < 8)
    throw std::invalid_argument("synthesize_benchmark_audio: need T >= 2 and F >= 8");
  const double tau = 6.283185307179586476925286766559;
  SynthesizedAudio out;
  out.audio.fps = cfg.fps;
  out.audio.features = Mat(cfg.t_frames, cfg.f_a);
  out.opening.resize(static_cast<size_t>(cfg.t_frames));
  out.sway.resize(static_cast<size_t>(cfg.t_frames));
  Rng rng(seed);
  std::vector<double> df(static_cast<size_t>(cfg.f_a), 0.0);
  std::vector<double> dp(static_cast<size_t>(cfg.f_a), 0.0);
  for (int c = 8; c < cfg.f_a; ++c) {
    df[static_cast<size_t>(c)] = rng.uniform(0.2, 1.8);
    dp[static_cast<size_t>(c)] = rng.uniform(0.0, tau);
  }
  for (int64_t t = 0; t < cfg.t_frames; ++t) {
    const double ph = double(t) / cfg.fps;
    const double o = 0.5 * (1.0 - std::cos(tau * 1.1 * ph)) *
                     (0.75 + 0.25 * std::sin(tau * 0.35 * ph));
    const double s = std::sin(tau * 0.43 * ph + 0.7);
    out.opening[static_cast<size_t>(t)] = cfg.amplitude * o;
    out.sway[static_cast<size_t>(t)] = cfg.amplitude * s;
    double* row = out.audio.features.row(t);
    for (int j = 0; j < 4; ++j)
      row[j] = cfg.amplitude * (2.0 * o - 1.0) * (1.0 - 0.15 * j);
    for (int j = 0; j < 4; ++j)
      row[4 + j] = cfg.amplitude * s * (1.0 - 0.15 * j);
    for (int c = 8; c < cfg.f_a; ++c)
      row[c] = cfg.amplitude * 0.6 *
               std::sin(tau * df[static_cast<size_t>(c)] * ph + dp[static_cast<size_t>(c)]);
  }
  return out;
}

}  // namespace splat
