#include "splat/checkpoint.hpp"

#include <map>

#include "splat/serial.hpp"

namespace splat {

namespace {

constexpr char kMagic[8] = {'P', 'T', 'C', 'K', 'P', 'T', '1', '\0'};
constexpr uint32_t kVersion = 1;

void write_mat(ByteWriter& w, const Mat& m) {
  w.i64(m.rows);
  w.i64(m.cols);
  w.f64_array(m.v.data(), size_t(m.size()));
}

Mat read_mat(ByteReader& r) {
  const int64_t rows = r.i64(), cols = r.i64();
  if (rows < 0 || cols < 0 || rows * cols > (1ll << 32))
    throw ParseError(r.origin + ": implausible tensor shape");
  Mat m(rows, cols);
  r.f64_array(m.v.data(), size_t(m.size()));
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointState& st) {
  std::vector<std::pair<std::string, ByteWriter>> sections;

  {
    ByteWriter w;
    w.u32(st.stage);
    w.i64(st.iteration);
    w.u64(st.seed);
    sections.emplace_back("meta", std::move(w));
  }
  {
    ByteWriter w;
    w.u64(st.rng_state);
    w.u64(st.rng_inc);
    w.u8(st.rng_has_normal ? 1 : 0);
    w.f64(st.rng_cached_normal);
    sections.emplace_back("rng", std::move(w));
  }
  {
    ByteWriter w;
    const GaussianSet& s = st.set;
    w.i64(s.count());
    for (int a = 0; a < 3; ++a) w.f64(s.box_min[size_t(a)]);
    for (int a = 0; a < 3; ++a) w.f64(s.box_max[size_t(a)]);
    write_mat(w, s.pos);
    write_mat(w, s.rot);
    write_mat(w, s.log_scale);
    write_mat(w, s.opacity_raw);
    write_mat(w, s.color);
    for (int64_t i = 0; i < s.count(); ++i) w.u8(s.landmark[size_t(i)]);
    sections.emplace_back("gaussians", std::move(w));
  }
  {
    ByteWriter w;
    w.i64(int64_t(st.densify.grad_ema.size()));
    w.f64_array(st.densify.grad_ema.data(), st.densify.grad_ema.size());
    write_mat(w, st.densify.world_grad_sum);
    w.i64(st.densify.updates);
    sections.emplace_back("densify", std::move(w));
  }
  {
    ByteWriter w;
    w.u32(uint32_t(st.params.size()));
    for (const CheckpointParam& p : st.params) {
      w.str(p.name);
      w.u32(uint32_t(p.group));
      write_mat(w, p.value);
      write_mat(w, p.m);
      write_mat(w, p.v);
      w.i64(p.step);
    }
    sections.emplace_back("params", std::move(w));
  }

  ByteWriter out;
  out.raw(kMagic, 8);
  out.u32(kVersion);
  out.u32(uint32_t(sections.size()));
  for (auto& [name, w] : sections) {
    out.str(name);
    out.u64(w.bytes.size());
    out.raw(w.bytes.data(), w.bytes.size());
  }
  write_file_bytes(path, out.bytes);
}

CheckpointState load_checkpoint(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  ByteReader r(bytes.data(), bytes.size(), path);
  r.expect_magic(kMagic);
  if (r.u32() != kVersion) throw ParseError(path + ": unsupported version");
  const uint32_t n_sections = r.u32();

  std::map<std::string, std::pair<size_t, size_t>> index;  // name -> (pos, len)
  for (uint32_t i = 0; i < n_sections; ++i) {
    const std::string name = r.str();
    const uint64_t len = r.u64();
    r.need(size_t(len));
    index[name] = {r.pos, size_t(len)};
    r.pos += size_t(len);
  }
  auto section = [&](const char* name) {
    auto it = index.find(name);
    if (it == index.end())
      throw ParseError(path + ": missing section '" + name + "'");
    return ByteReader(bytes.data() + it->second.first, it->second.second,
                      path + ":" + name);
  };

  CheckpointState st;
  {
    ByteReader s = section("meta");
    st.stage = s.u32();
    st.iteration = s.i64();
    st.seed = s.u64();
  }
  {
    ByteReader s = section("rng");
    st.rng_state = s.u64();
    st.rng_inc = s.u64();
    st.rng_has_normal = s.u8() != 0;
    st.rng_cached_normal = s.f64();
  }
  {
    ByteReader s = section("gaussians");
    const int64_t n = s.i64();
    for (int a = 0; a < 3; ++a) st.set.box_min[size_t(a)] = s.f64();
    for (int a = 0; a < 3; ++a) st.set.box_max[size_t(a)] = s.f64();
    st.set.pos = read_mat(s);
    st.set.rot = read_mat(s);
    st.set.log_scale = read_mat(s);
    st.set.opacity_raw = read_mat(s);
    st.set.color = read_mat(s);
    if (st.set.pos.rows != n)
      throw ParseError(path + ": gaussian count mismatch");
    st.set.landmark.resize(size_t(n));
    for (int64_t i = 0; i < n; ++i) st.set.landmark[size_t(i)] = s.u8();
  }
  {
    ByteReader s = section("densify");
    const int64_t n = s.i64();
    st.densify.grad_ema.resize(size_t(n));
    s.f64_array(st.densify.grad_ema.data(), size_t(n));
    st.densify.world_grad_sum = read_mat(s);
    st.densify.updates = s.i64();
  }
  {
    ByteReader s = section("params");
    const uint32_t count = s.u32();
    st.params.resize(count);
    for (uint32_t i = 0; i < count; ++i) {
      CheckpointParam& p = st.params[i];
      p.name = s.str();
      p.group = int32_t(s.u32());
      p.value = read_mat(s);
      p.m = read_mat(s);
      p.v = read_mat(s);
      p.step = s.i64();
    }
  }
  return st;
}

void capture_rng(const Rng& rng, CheckpointState& st) {
  st.rng_state = rng.state();
  st.rng_inc = rng.inc();
  st.rng_has_normal = rng.has_cached_normal();
  st.rng_cached_normal = rng.cached_normal_value();
}

void restore_rng(const CheckpointState& st, Rng& rng) {
  rng.restore(st.rng_state, st.rng_inc, st.rng_has_normal,
              st.rng_cached_normal);
}

void capture_params(const ParamStore& ps, CheckpointState& st) {
  st.params.clear();
  for (const ParamStore::Entry& e : ps.entries()) {
    CheckpointParam p;
    p.name = e.name;
    p.group = e.group;
    p.value = *e.p;
    p.m = e.m;
    p.v = e.v;
    p.step = e.step;
    st.params.push_back(std::move(p));
  }
}

void restore_params(const CheckpointState& st, ParamStore& ps) {
  if (st.params.size() != ps.entries().size())
    throw ParseError("checkpoint holds " + std::to_string(st.params.size()) +
                     " parameters, the run registers " +
                     std::to_string(ps.entries().size()));
  for (const CheckpointParam& p : st.params) {
    if (!ps.has(p.name))
      throw ParseError("checkpoint parameter '" + p.name +
                       "' is not registered in this run");
    ParamStore::Entry& e = ps.entry(p.name);
    if (e.p->rows != p.value.rows || e.p->cols != p.value.cols)
      throw ParseError("checkpoint parameter '" + p.name + "' has shape " +
                       std::to_string(p.value.rows) + "x" +
                       std::to_string(p.value.cols) + ", expected " +
                       std::to_string(e.p->rows) + "x" +
                       std::to_string(e.p->cols));
    *e.p = p.value;
    e.m = p.m;
    e.v = p.v;
    e.step = p.step;
  }
}

}  // namespace splat
