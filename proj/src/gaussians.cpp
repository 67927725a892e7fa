#include "splat/gaussians.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "splat/serial.hpp"

namespace splat {

double GaussianSet::extent() const {
  double s = 0;
  for (int a = 0; a < 3; ++a) {
    double d = box_max[a] - box_min[a];
    s += d * d;
  }
  return std::sqrt(s);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

std::vector<double> knn_mean_dist(const Mat& pos, int k) {
  int64_t n = pos.rows;
  std::vector<double> out(n, 0.0);
  std::vector<double> d2(n);
  for (int64_t i = 0; i < n; ++i) {
    int64_t m = 0;
    for (int64_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double dx = pos(i, 0) - pos(j, 0);
      double dy = pos(i, 1) - pos(j, 1);
      double dz = pos(i, 2) - pos(j, 2);
      d2[m++] = dx * dx + dy * dy + dz * dz;
    }
    int64_t kk = std::min<int64_t>(k, m);
    if (kk == 0) continue;
    std::partial_sort(d2.begin(), d2.begin() + kk, d2.begin() + m);
    double s = 0;
    for (int64_t t = 0; t < kk; ++t) s += std::sqrt(d2[t]);
    out[i] = s / double(kk);
  }
  return out;
}

GaussianSet init_random(int64_t count, const std::array<double, 3>& box_min,
                        const std::array<double, 3>& box_max, uint64_t seed) {
  if (count < 1) throw std::invalid_argument("init_random: count must be >= 1");
  for (int a = 0; a < 3; ++a)
    if (!(box_max[a] > box_min[a]))
      throw std::invalid_argument("init_random: degenerate bounding box");
  GaussianSet set;
  set.box_min = box_min;
  set.box_max = box_max;
  set.pos = Mat(count, 3);
  set.rot = Mat(count, 4);
  set.log_scale = Mat(count, 3);
  set.opacity_raw = Mat(count, 1);
  set.color = Mat(count, 3);
  set.landmark.assign(count, 0);
  Rng rng(seed, 0x67617573);  // "gaus" stream
  for (int64_t i = 0; i < count; ++i)
    for (int a = 0; a < 3; ++a)
      set.pos(i, a) = rng.uniform(box_min[a], box_max[a]);
  for (int64_t i = 0; i < count; ++i) set.rot(i, 0) = 1.0;
  auto nn = knn_mean_dist(set.pos, 3);
  double fallback = 0.1 * set.extent();
  double a01 = logit(0.1);
  for (int64_t i = 0; i < count; ++i) {
    double s = nn[i] > 0 ? nn[i] : fallback;
    for (int a = 0; a < 3; ++a) set.log_scale(i, a) = std::log(s);
    set.opacity_raw(i, 0) = a01;
    for (int a = 0; a < 3; ++a) set.color(i, a) = 0.5;
  }
  return set;
}

namespace {

void append_row(Mat& dst, const Mat& src, int64_t row) {
  for (int64_t c = 0; c < src.cols; ++c) dst.v.push_back(src(row, c));
  dst.rows += 1;
}

}  // namespace

DensifyResult densify_and_prune(GaussianSet& set, const DensifyStats& stats,
                                const DensifyOptions& opt) {
  int64_t n = set.count();
  if (static_cast<int64_t>(stats.grad_ema.size()) != n ||
      stats.world_grad_sum.rows != n)
    throw ShapeError("densify_and_prune: stats size mismatch");
  double split_size = opt.split_size_frac * set.extent();

  GaussianSet out;
  out.box_min = set.box_min;
  out.box_max = set.box_max;
  out.pos = Mat(0, 3);
  out.rot = Mat(0, 4);
  out.log_scale = Mat(0, 3);
  out.opacity_raw = Mat(0, 1);
  out.color = Mat(0, 3);
  DensifyResult res;

  auto copy_gaussian = [&](int64_t i, int64_t src_row) {
    append_row(out.pos, set.pos, i);
    append_row(out.rot, set.rot, i);
    append_row(out.log_scale, set.log_scale, i);
    append_row(out.opacity_raw, set.opacity_raw, i);
    append_row(out.color, set.color, i);
    out.landmark.push_back(set.landmark[i]);
    res.row_map.push_back(src_row);
  };

  for (int64_t i = 0; i < n; ++i) {
    double alpha = sigmoid(set.opacity_raw(i, 0));
    bool marker = set.landmark[i] != 0;
    if (alpha < opt.prune_alpha && !marker) {
      ++res.pruned;
      continue;
    }
    double s[3] = {std::exp(set.log_scale(i, 0)), std::exp(set.log_scale(i, 1)),
                   std::exp(set.log_scale(i, 2))};
    double smax = std::max({s[0], s[1], s[2]});
    double smean = (s[0] + s[1] + s[2]) / 3.0;
    bool hot = stats.grad_ema[i] > opt.grad_threshold && !marker;
    if (!hot) {
      copy_gaussian(i, i);
      continue;
    }
    if (smax <= split_size) {
      // clone: keep the original, add a copy offset along the accumulated
      // descent direction
      copy_gaussian(i, i);
      double g[3] = {stats.world_grad_sum(i, 0), stats.world_grad_sum(i, 1),
                     stats.world_grad_sum(i, 2)};
      double gn = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
      copy_gaussian(i, -1);
      if (gn > 0) {
        int64_t last = out.pos.rows - 1;
        for (int a = 0; a < 3; ++a)
          out.pos(last, a) -= g[a] / gn * (opt.clone_offset_frac * smean);
      }
      ++res.cloned;
    } else {
      // split: two children along the major principal axis, scales reduced
      int axis = 0;
      if (s[1] > s[axis]) axis = 1;
      if (s[2] > s[axis]) axis = 2;
      // rotate the major axis into world space with the unit quaternion
      double qn = 0;
      for (int c = 0; c < 4; ++c) qn += set.rot(i, c) * set.rot(i, c);
      qn = std::sqrt(qn);
      double w = set.rot(i, 0) / qn, x = set.rot(i, 1) / qn,
             y = set.rot(i, 2) / qn, z = set.rot(i, 3) / qn;
      double col[3];
      if (axis == 0) {
        col[0] = 1 - 2 * (y * y + z * z);
        col[1] = 2 * (x * y + w * z);
        col[2] = 2 * (x * z - w * y);
      } else if (axis == 1) {
        col[0] = 2 * (x * y - w * z);
        col[1] = 1 - 2 * (x * x + z * z);
        col[2] = 2 * (y * z + w * x);
      } else {
        col[0] = 2 * (x * z + w * y);
        col[1] = 2 * (y * z - w * x);
        col[2] = 1 - 2 * (x * x + y * y);
      }
      double shrink = std::log(opt.split_scale_div);
      for (int child = 0; child < 2; ++child) {
        copy_gaussian(i, -1);
        int64_t last = out.pos.rows - 1;
        double sgn = child == 0 ? 1.0 : -1.0;
        for (int a = 0; a < 3; ++a) {
          out.pos(last, a) += sgn * col[a] * s[axis];
          out.log_scale(last, a) -= shrink;
        }
      }
      ++res.split;
    }
  }
  if (out.pos.rows == 0)
    throw StateError("densify_and_prune: all gaussians pruned");
  set = std::move(out);
  return res;
}

namespace {

constexpr const char* kRequired[] = {"x",       "y",       "z",     "opacity",
                                     "scale_0", "scale_1", "scale_2", "rot_0",
                                     "rot_1",   "rot_2",   "rot_3",   "f_dc_0",
                                     "f_dc_1",  "f_dc_2"};

struct PlyProp {
  std::string type;
  std::string name;
};

size_t prop_size(const std::string& t) {
  if (t == "double" || t == "float64") return 8;
  if (t == "float" || t == "float32") return 4;
  if (t == "uchar" || t == "uint8") return 1;
  if (t == "char" || t == "int8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32") return 4;
  throw ParseError("ply: unsupported property type '" + t + "'");
}

}  // namespace

void write_ply(const std::string& path, const GaussianSet& set) {
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n"
         << "element vertex " << set.count() << "\n";
  for (const char* name : kRequired) header << "property double " << name << "\n";
  header << "property uchar landmark\nend_header\n";
  ByteWriter w;
  std::string h = header.str();
  w.raw(h.data(), h.size());
  for (int64_t i = 0; i < set.count(); ++i) {
    w.f64(set.pos(i, 0));
    w.f64(set.pos(i, 1));
    w.f64(set.pos(i, 2));
    w.f64(set.opacity_raw(i, 0));
    for (int c = 0; c < 3; ++c) w.f64(set.log_scale(i, c));
    for (int c = 0; c < 4; ++c) w.f64(set.rot(i, c));
    for (int c = 0; c < 3; ++c) w.f64(set.color(i, c));
    w.u8(set.landmark[i]);
  }
  write_file_bytes(path, w.bytes);
}

GaussianSet read_ply(const std::string& path) {
  auto bytes = read_file_bytes(path);
  // header is ASCII lines terminated by end_header
  size_t pos = 0;
  auto next_line = [&]() -> std::string {
    if (pos >= bytes.size()) throw ParseError(path + ": truncated header");
    size_t e = pos;
    while (e < bytes.size() && bytes[e] != '\n') ++e;
    std::string line(reinterpret_cast<const char*>(bytes.data() + pos), e - pos);
    pos = e + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  int line_no = 1;
  if (next_line() != "ply") throw ParseError(path + ": line 1: not a PLY file");
  int64_t count = -1;
  std::vector<PlyProp> props;
  bool binary_le = false;
  for (;;) {
    ++line_no;
    std::string line = next_line();
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "end_header") break;
    if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      binary_le = fmt == "binary_little_endian";
      if (!binary_le)
        throw ParseError(path + ": line " + std::to_string(line_no) +
                         ": only binary_little_endian is supported");
    } else if (tok == "element") {
      std::string what;
      ss >> what >> count;
      if (what != "vertex")
        throw ParseError(path + ": line " + std::to_string(line_no) +
                         ": unsupported element '" + what + "'");
    } else if (tok == "property") {
      PlyProp p;
      ss >> p.type >> p.name;
      if (p.type == "list")
        throw ParseError(path + ": line " + std::to_string(line_no) +
                         ": list properties unsupported");
      props.push_back(p);
    } else if (tok == "comment" || tok.empty()) {
      continue;
    } else {
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": unknown header token '" + tok + "'");
    }
  }
  if (count < 0) throw ParseError(path + ": missing element vertex line");
  if (count < 1) throw ParseError(path + ": vertex count must be >= 1");
  // map property name -> column
  std::vector<int> col_of(props.size(), -1);
  auto find_prop = [&](const std::string& name) {
    for (size_t i = 0; i < props.size(); ++i)
      if (props[i].name == name) return static_cast<int>(i);
    return -1;
  };
  for (const char* req : kRequired)
    if (find_prop(req) < 0)
      throw ParseError(path + ": missing required property '" + std::string(req) + "'");

  GaussianSet set;
  set.pos = Mat(count, 3);
  set.rot = Mat(count, 4);
  set.log_scale = Mat(count, 3);
  set.opacity_raw = Mat(count, 1);
  set.color = Mat(count, 3);
  set.landmark.assign(count, 0);

  ByteReader r(bytes.data() + pos, bytes.size() - pos, path);
  std::vector<double> row(props.size());
  int lm = find_prop("landmark");
  for (int64_t i = 0; i < count; ++i) {
    for (size_t p = 0; p < props.size(); ++p) {
      const std::string& t = props[p].type;
      if (t == "double" || t == "float64") row[p] = r.f64();
      else if (t == "float" || t == "float32") row[p] = r.f32();
      else if (t == "uchar" || t == "uint8") row[p] = r.u8();
      else {
        r.need(prop_size(t));
        r.pos += prop_size(t);
        row[p] = 0;
      }
    }
    set.pos(i, 0) = row[find_prop("x")];
    set.pos(i, 1) = row[find_prop("y")];
    set.pos(i, 2) = row[find_prop("z")];
    set.opacity_raw(i, 0) = row[find_prop("opacity")];
    for (int c = 0; c < 3; ++c)
      set.log_scale(i, c) = row[find_prop("scale_" + std::to_string(c))];
    for (int c = 0; c < 4; ++c)
      set.rot(i, c) = row[find_prop("rot_" + std::to_string(c))];
    set.color(i, 0) = row[find_prop("f_dc_0")];
    set.color(i, 1) = row[find_prop("f_dc_1")];
    set.color(i, 2) = row[find_prop("f_dc_2")];
    if (lm >= 0) set.landmark[i] = row[lm] != 0 ? 1 : 0;
  }
  // recover a bounding box from the data for downstream consumers
  for (int a = 0; a < 3; ++a) {
    double lo = set.pos(0, a), hi = set.pos(0, a);
    for (int64_t i = 1; i < count; ++i) {
      lo = std::min(lo, set.pos(i, a));
      hi = std::max(hi, set.pos(i, a));
    }
    double pad = 1e-6 + 0.05 * (hi - lo);
    set.box_min[a] = lo - pad;
    set.box_max[a] = hi + pad;
  }
  return set;
}

}  // namespace splat
