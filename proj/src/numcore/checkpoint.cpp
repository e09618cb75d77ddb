#include "evhier/numcore/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace evhier::numcore {

namespace {

constexpr std::array<char, 8> kMagic = {'E', 'V', 'H', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void i64(std::int64_t v) { le(static_cast<std::uint64_t>(v)); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void raw(const char* p, std::size_t n) { os_.write(p, static_cast<std::streamsize>(n)); }

 private:
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) os_.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le<std::uint8_t>()); }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  std::int64_t i64() { return static_cast<std::int64_t>(le<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 24)) throw InputError("checkpoint: implausible string length");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void read(char* p, std::size_t n) {
    is_.read(p, static_cast<std::streamsize>(n));
    if (!is_) throw InputError("checkpoint: truncated file");
  }

 private:
  template <typename T>
  T le() {
    std::array<unsigned char, sizeof(T)> b{};
    read(reinterpret_cast<char*>(b.data()), b.size());
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b[i]) << (8 * i));
    return v;
  }
  std::istream& is_;
};

void write_matrix_row_major(Writer& w, const Matrix& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
}

Matrix read_matrix_row_major(Reader& r, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = r.f64();
  return m;
}

std::pair<Index, Index> matrix_dims(const std::vector<std::uint64_t>& shape) {
  if (shape.size() == 1) return {static_cast<Index>(shape[0]), 1};
  if (shape.size() == 2) return {static_cast<Index>(shape[0]), static_cast<Index>(shape[1])};
  throw InputError("checkpoint: only rank-1 and rank-2 tensors are supported");
}

}  // namespace

TensorRecord to_record(const ParamTensor& p) {
  TensorRecord rec;
  rec.name = p.name;
  for (Index d : p.shape()) rec.shape.push_back(static_cast<std::uint64_t>(d));
  rec.values.reserve(static_cast<std::size_t>(p.size()));
  for (Index r = 0; r < p.value.rows(); ++r)
    for (Index c = 0; c < p.value.cols(); ++c) rec.values.push_back(p.value(r, c));
  return rec;
}

Checkpoint make_checkpoint(const std::string& metadata, const ParamRefs& params, const Adam* optimizer) {
  Checkpoint ckpt;
  ckpt.metadata = metadata;
  for (const auto* p : params) ckpt.tensors.push_back(to_record(*p));
  if (optimizer != nullptr) {
    OptimizerRecord rec;
    rec.config = optimizer->config();
    rec.step_count = optimizer->step_count();
    rec.moments = optimizer->moments();
    ckpt.optimizer = std::move(rec);
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open checkpoint for writing: " + path.string());
  Writer w(os);
  w.raw(kMagic.data(), kMagic.size());
  w.u32(ckpt.version);
  w.str(ckpt.metadata);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u64(d);
    for (double v : t.values) w.f64(v);
  }
  w.u8(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    const auto& o = *ckpt.optimizer;
    w.f64(o.config.lr);
    w.f64(o.config.beta1);
    w.f64(o.config.beta2);
    w.f64(o.config.eps);
    w.f64(o.config.clip_norm);
    w.i64(o.step_count);
    w.u32(static_cast<std::uint32_t>(o.moments.size()));
    for (const auto& m : o.moments) {
      w.str(m.name);
      w.u32(static_cast<std::uint32_t>(m.first.rows()));
      w.u32(static_cast<std::uint32_t>(m.first.cols()));
      write_matrix_row_major(w, m.first);
      write_matrix_row_major(w, m.second);
    }
  }
  if (!os) throw InputError("failed writing checkpoint: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint: " + path.string());
  Reader r(is);
  std::array<char, 8> magic{};
  r.read(magic.data(), magic.size());
  if (magic != kMagic) throw InputError("not a checkpoint file: " + path.string());
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kCheckpointVersion) {
    throw InputError("unsupported checkpoint version " + std::to_string(ckpt.version));
  }
  ckpt.metadata = r.str();
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    TensorRecord t;
    t.name = r.str();
    const std::uint32_t ndim = r.u32();
    if (ndim == 0 || ndim > 2) throw InputError("checkpoint: unsupported rank for '" + t.name + "'");
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.shape.push_back(r.u64());
      count *= t.shape.back();
    }
    if (count > (1ull << 32)) throw InputError("checkpoint: implausible tensor size");
    t.values.resize(count);
    for (auto& v : t.values) v = r.f64();
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.u8() != 0) {
    OptimizerRecord o;
    o.config.lr = r.f64();
    o.config.beta1 = r.f64();
    o.config.beta2 = r.f64();
    o.config.eps = r.f64();
    o.config.clip_norm = r.f64();
    o.step_count = r.i64();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      Adam::Moment m;
      m.name = r.str();
      const Index rows = r.u32();
      const Index cols = r.u32();
      m.first = read_matrix_row_major(r, rows, cols);
      m.second = read_matrix_row_major(r, rows, cols);
      o.moments.push_back(std::move(m));
    }
    ckpt.optimizer = std::move(o);
  }
  return ckpt;
}

void load_parameters(const Checkpoint& ckpt, const ParamRefs& params) {
  std::unordered_map<std::string, const TensorRecord*> by_name;
  for (const auto& t : ckpt.tensors) by_name.emplace(t.name, &t);
  for (auto* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw InputError("checkpoint lacks parameter '" + p->name + "'");
    const auto [rows, cols] = matrix_dims(it->second->shape);
    if (rows != p->value.rows() || cols != p->value.cols()) {
      throw ConfigError("checkpoint shape mismatch for '" + p->name + "'");
    }
    std::size_t k = 0;
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) p->value(i, j) = it->second->values[k++];
  }
}

bool load_optimizer(const Checkpoint& ckpt, Adam& optimizer) {
  if (!ckpt.optimizer) return false;
  optimizer = Adam(ckpt.optimizer->config);
  optimizer.restore(ckpt.optimizer->step_count, ckpt.optimizer->moments);
  return true;
}

}  // namespace evhier::numcore
