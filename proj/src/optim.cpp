#include "mcc/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace mcc::nn {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (index_.count(name))
    throw invalid_argument("parameter name not unique: " + name);
  t.set_requires_grad(true);
  index_[name] = items_.size();
  items_.emplace_back(name, std::move(t));
  return items_.back().second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw invalid_argument("no such parameter: " + name);
  return items_[it->second].second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw invalid_argument("no such parameter: " + name);
  return items_[it->second].second;
}

int64_t ParamStore::total_values() const {
  int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : items_) t.zero_grad();
}

void AdamState::init_like(const ParamStore& ps) {
  step = 0;
  m.clear();
  v.clear();
  for (size_t i = 0; i < ps.size(); ++i) {
    const size_t n = ps.item(i).second.values().size();
    m.emplace_back(n, 0.0);
    v.emplace_back(n, 0.0);
  }
}

namespace {
inline double to_f32(double x) {
  return static_cast<double>(static_cast<float>(x));
}
}  // namespace

void adam_step(ParamStore& params, AdamState& state, double lr,
               const AdamHyper& hp) {
  if (!state.initialized()) state.init_like(params);
  if (state.m.size() != params.size())
    throw invalid_argument("adam_step: state does not match parameter store");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  const bool check = finite_checks_enabled();
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params.item(pi).second;
    const std::vector<double>& g = p.grad();
    std::vector<double>& val = p.raw_values();
    std::vector<double>& m = state.m[pi];
    std::vector<double>& v = state.v[pi];
    if (g.empty()) continue;  // never touched by backward: zero gradient
    if (g.size() != val.size() || m.size() != val.size())
      throw invalid_argument("adam_step: gradient shape mismatch for " +
                             params.item(pi).first);
    if (check) {
      for (double gi : g)
        if (!std::isfinite(gi))
          throw numeric_error("adam_step: non-finite gradient in " +
                              params.item(pi).first);
    }
    const int64_t n = static_cast<int64_t>(val.size());
#pragma omp parallel for schedule(static) if (n > 4096)
    for (int64_t i = 0; i < n; ++i) {
      if (g[i] == 0.0 && m[i] == 0.0 && v[i] == 0.0) continue;
      m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
      v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] = to_f32(val[i] - lr * mhat / (std::sqrt(vhat) + hp.eps));
      m[i] = to_f32(m[i]);
      v[i] = to_f32(v[i]);
    }
  }
}

double cosine_lr(int64_t step, int64_t total, double warmup_frac, double base) {
  if (step < 0 || step > total)
    throw invalid_argument("cosine_lr: step outside [0, total]");
  if (!(warmup_frac >= 0.0 && warmup_frac < 1.0))
    throw invalid_argument("cosine_lr: warmup_frac outside [0,1)");
  const double w = warmup_frac * static_cast<double>(total);
  if (static_cast<double>(step) < w) return base * static_cast<double>(step) / w;
  if (total == 0) return base;
  const double p = (static_cast<double>(step) - w) /
                   (static_cast<double>(total) - w);
  return base * 0.5 * (1.0 + std::cos(kPi * p));
}

// ---------------------------------------------------------------------------
// Checkpoint format (documented in the README):
//   magic "MCCK1"
//   u32   number of parameter records
//   per record: u32 name length, name bytes, u32 rank, u64 dims[rank],
//               f32 values[numel]   (all little-endian)
//   u64   step counter
//   u32   number of optimizer-state records ("m.<name>" and "v.<name>"),
//         in the same record layout.

namespace {

constexpr char kMagic[5] = {'M', 'C', 'C', 'K', '1'};

void put_u32(std::FILE* f, uint32_t v) { std::fwrite(&v, 4, 1, f); }
void put_u64(std::FILE* f, uint64_t v) { std::fwrite(&v, 8, 1, f); }

uint32_t get_u32(std::FILE* f, const std::string& path) {
  uint32_t v;
  if (std::fread(&v, 4, 1, f) != 1)
    throw parse_error("truncated checkpoint: " + path);
  return v;
}
uint64_t get_u64(std::FILE* f, const std::string& path) {
  uint64_t v;
  if (std::fread(&v, 8, 1, f) != 1)
    throw parse_error("truncated checkpoint: " + path);
  return v;
}

void write_record(std::FILE* f, const std::string& name, const Shape& shape,
                  std::span<const double> values) {
  put_u32(f, static_cast<uint32_t>(name.size()));
  std::fwrite(name.data(), 1, name.size(), f);
  put_u32(f, static_cast<uint32_t>(shape.size()));
  for (int64_t d : shape) put_u64(f, static_cast<uint64_t>(d));
  std::vector<float> buf(values.size());
  for (size_t i = 0; i < values.size(); ++i)
    buf[i] = static_cast<float>(values[i]);
  std::fwrite(buf.data(), 4, buf.size(), f);
}

struct Record {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

Record read_record(std::FILE* f, const std::string& path) {
  Record r;
  const uint32_t len = get_u32(f, path);
  if (len > 4096) throw parse_error("implausible name length in " + path);
  r.name.resize(len);
  if (len && std::fread(r.name.data(), 1, len, f) != len)
    throw parse_error("truncated checkpoint: " + path);
  const uint32_t rank = get_u32(f, path);
  if (rank > 8) throw parse_error("implausible rank in " + path);
  int64_t numel = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    const int64_t d = static_cast<int64_t>(get_u64(f, path));
    if (d <= 0 || d > (1 << 28))
      throw parse_error("implausible dimension in " + path);
    r.shape.push_back(d);
    numel *= d;
  }
  std::vector<float> buf(static_cast<size_t>(numel));
  if (std::fread(buf.data(), 4, buf.size(), f) != buf.size())
    throw parse_error("truncated checkpoint: " + path);
  r.values.assign(buf.begin(), buf.end());
  return r;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const AdamState& opt) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw io_error("cannot open for writing: " + path);
  std::fwrite(kMagic, 1, 5, f);
  put_u32(f, static_cast<uint32_t>(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = params.item(i);
    write_record(f, name, t.shape(), t.values());
  }
  put_u64(f, static_cast<uint64_t>(opt.step));
  const bool have_opt = opt.m.size() == params.size();
  put_u32(f, have_opt ? static_cast<uint32_t>(2 * params.size()) : 0u);
  if (have_opt) {
    for (size_t i = 0; i < params.size(); ++i) {
      const auto& [name, t] = params.item(i);
      write_record(f, "m." + name, t.shape(), opt.m[i]);
      write_record(f, "v." + name, t.shape(), opt.v[i]);
    }
  }
  if (std::fclose(f) != 0) throw io_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw io_error("cannot open: " + path);
  struct Closer {
    std::FILE* f;
    ~Closer() { std::fclose(f); }
  } closer{f};
  char magic[5];
  if (std::fread(magic, 1, 5, f) != 5 || std::memcmp(magic, kMagic, 5) != 0)
    throw parse_error("bad checkpoint magic in " + path);
  Checkpoint ck;
  const uint32_t np = get_u32(f, path);
  for (uint32_t i = 0; i < np; ++i) {
    Record r = read_record(f, path);
    ck.params.add(r.name, Tensor::from(r.shape, std::move(r.values)));
  }
  ck.opt.step = static_cast<int64_t>(get_u64(f, path));
  const uint32_t ns = get_u32(f, path);
  if (ns != 0 && ns != 2 * np)
    throw parse_error("unexpected optimizer record count in " + path);
  if (ns > 0) {
    ck.opt.m.resize(np);
    ck.opt.v.resize(np);
    for (uint32_t i = 0; i < ns; ++i) {
      Record r = read_record(f, path);
      const bool is_m = r.name.rfind("m.", 0) == 0;
      const bool is_v = r.name.rfind("v.", 0) == 0;
      if (!is_m && !is_v)
        throw parse_error("unexpected state record '" + r.name + "' in " + path);
      const std::string pname = r.name.substr(2);
      if (!ck.params.has(pname))
        throw parse_error("optimizer state for unknown parameter '" + pname +
                          "' in " + path);
      // records are written in item order: m then v per parameter
      const size_t idx = i / 2;
      if (ck.params.item(idx).first != pname)
        throw parse_error("optimizer state out of order in " + path);
      (is_m ? ck.opt.m : ck.opt.v)[idx] = std::move(r.values);
    }
  }
  return ck;
}

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn,
                           std::span<Tensor* const> inputs, double h,
                           int64_t max_probes_per_input, uint64_t seed) {
  // Analytic pass.
  for (Tensor* t : inputs) t->zero_grad();
  Tensor loss = loss_fn();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (Tensor* t : inputs) {
    if (t->grad().empty())
      analytic.emplace_back(t->numel(), 0.0);
    else
      analytic.push_back(t->grad());
  }

  GradCheckResult res;
  Rng rng(seed);
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = *inputs[ti];
    const int64_t n = t.numel();
    std::vector<int64_t> probes;
    if (max_probes_per_input < 0 || n <= max_probes_per_input) {
      probes.resize(n);
      for (int64_t i = 0; i < n; ++i) probes[i] = i;
    } else {
      for (int64_t k = 0; k < max_probes_per_input; ++k)
        probes.push_back(rng.uniform_int(n));
    }
    for (int64_t idx : probes) {
      double& x = t.raw_values()[idx];
      const double saved = x;
      const double a = analytic[ti][idx];
      auto central = [&](double step) {
        NoGradGuard ng;
        x = saved + step;
        const double fp = loss_fn().item();
        x = saved - step;
        const double fm = loss_fn().item();
        x = saved;
        return (fp - fm) / (2.0 * step);
      };
      auto rel_err = [&](double numeric) {
        return std::abs(a - numeric) /
               std::max({std::abs(a), std::abs(numeric), 1e-8});
      };
      double rel = rel_err(central(h));
      // The single-step estimate can be noise-limited (tiny gradients) or
      // truncation-limited (strong curvature); a 10x step separates the two.
      // A genuine gradient bug shows up at both steps.
      if (rel > 1e-6) rel = std::min(rel, rel_err(central(10.0 * h)));
      res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.probes;
    }
  }
  return res;
}

}  // namespace mcc::nn
