#include "mcc/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ostream>

#include "mcc/train.hpp"

namespace mcc::selftest {

using geom::PointCloud;
using model::MccModel;
using model::ModelConfig;
using nn::Tensor;

geom::LabelResult brute_label(std::span<const Vec3> queries,
                              const PointCloud& gt, double tau) {
  if (!(tau > 0)) throw invalid_argument("brute_label: tau must be > 0");
  if (gt.positions.empty()) throw invalid_argument("brute_label: empty gt");
  geom::LabelResult out;
  out.occupied.assign(queries.size(), 0);
  out.color_bins.assign(queries.size(), {0, 0, 0});
  for (size_t i = 0; i < queries.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    size_t best_j = 0;
    for (size_t j = 0; j < gt.positions.size(); ++j) {
      const double d2 = dist2(queries[i], gt.positions[j]);
      if (d2 < best) {
        best = d2;
        best_j = j;
      }
    }
    if (best <= tau * tau) {
      out.occupied[i] = 1;
      if (gt.has_colors()) {
        const Vec3& c = gt.colors[best_j];
        out.color_bins[i] = {geom::color_bin(c.x), geom::color_bin(c.y),
                             geom::color_bin(c.z)};
      }
    }
  }
  return out;
}

double brute_accuracy(const PointCloud& pred, const PointCloud& gt,
                      double rho) {
  if (pred.positions.empty()) return 0.0;
  int64_t hits = 0;
  for (const Vec3& p : pred.positions) {
    bool near = false;
    for (const Vec3& g : gt.positions)
      if (dist2(p, g) <= rho * rho) {
        near = true;
        break;
      }
    if (near) ++hits;
  }
  return 100.0 * static_cast<double>(hits) /
         static_cast<double>(pred.positions.size());
}

double brute_chamfer(const PointCloud& a, const PointCloud& b) {
  auto side = [](const PointCloud& x, const PointCloud& y) {
    double total = 0;
    for (const Vec3& p : x.positions) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : y.positions) best = std::min(best, dist2(p, q));
      total += std::sqrt(best);
    }
    return total / static_cast<double>(x.positions.size());
  };
  return 0.5 * (side(a, b) + side(b, a));
}

nn::AttnMask reference_decoder_mask(int64_t n_enc, int64_t n_q) {
  const int64_t t = 1 + n_enc + n_q;
  nn::AttnMask m{t, t, std::vector<uint8_t>(static_cast<size_t>(t * t), 0)};
  for (int64_t i = 0; i < t; ++i) {
    m.set(i, 0, true);                                   // global column
    for (int64_t j = 1; j <= n_enc; ++j) m.set(i, j, true);  // encoder columns
  }
  for (int64_t j = n_enc + 1; j < t; ++j) m.set(j, j, true);  // query self
  return m;
}

namespace {

bool bits_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool row_equal(const Tensor& a, int64_t ia, const Tensor& b, int64_t ib,
               int64_t width) {
  return std::memcmp(a.values().data() + ia * width,
                     b.values().data() + ib * width,
                     width * sizeof(double)) == 0;
}

}  // namespace

bool decode_independence_trial(const MccModel& m, Rng& rng, std::string* why) {
  nn::NoGradGuard ng;
  const int64_t C = m.config().enc_dim;
  const int64_t n_enc = 3 + rng.uniform_int(5);
  const int64_t n_q = 2 + rng.uniform_int(7);
  Tensor R = Tensor::zeros({n_enc, C});
  for (double& v : R.raw_values()) v = rng.normal();
  std::vector<Vec3> queries(n_q);
  for (auto& q : queries)
    q = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};

  model::EncoderOutput enc{R};
  model::DecoderOutput full = m.decode(enc, queries);
  const int64_t cw = 3 * ModelConfig::color_bins;

  auto check_rows = [&](const model::DecoderOutput& got, int64_t got_i,
                        int64_t full_i, const char* what) {
    if (got.occupancy_logits.values()[got_i] !=
            full.occupancy_logits.values()[full_i] ||
        !row_equal(got.color_logits, got_i, full.color_logits, full_i, cw)) {
      if (why) *why = what;
      return false;
    }
    return true;
  };

  // Single-query slices reproduce the batch rows.
  for (int64_t i = 0; i < n_q; ++i) {
    model::DecoderOutput one = m.decode(enc, {&queries[i], 1});
    if (!check_rows(one, 0, i, "single-query slice")) return false;
  }
  // Perturbing one query leaves the others untouched.
  const int64_t victim = rng.uniform_int(n_q);
  std::vector<Vec3> perturbed = queries;
  perturbed[victim] += Vec3{rng.normal(), rng.normal(), rng.normal()};
  model::DecoderOutput pert = m.decode(enc, perturbed);
  for (int64_t i = 0; i < n_q; ++i) {
    if (i == victim) continue;
    if (!check_rows(pert, i, i, "perturbation leak")) return false;
  }
  // Reordering permutes outputs.
  std::vector<int64_t> order(n_q);
  for (int64_t i = 0; i < n_q; ++i) order[i] = i;
  for (int64_t i = n_q - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(i + 1)]);
  std::vector<Vec3> shuffled(n_q);
  for (int64_t i = 0; i < n_q; ++i) shuffled[i] = queries[order[i]];
  model::DecoderOutput shuf = m.decode(enc, shuffled);
  for (int64_t i = 0; i < n_q; ++i)
    if (!check_rows(shuf, i, order[i], "reorder mismatch")) return false;
  // Chunked decode equals whole-batch decode.
  const int64_t chunk = 1 + rng.uniform_int(n_q);
  for (int64_t begin = 0; begin < n_q; begin += chunk) {
    const int64_t end = std::min(n_q, begin + chunk);
    model::DecoderOutput part =
        m.decode(enc, {queries.data() + begin, static_cast<size_t>(end - begin)});
    for (int64_t i = begin; i < end; ++i)
      if (!check_rows(part, i - begin, i, "chunking mismatch")) return false;
  }
  return true;
}

namespace {

struct Harness {
  std::ostream& out;
  CheckResult result;

  void check(const std::string& name, bool ok, const std::string& detail = "") {
    ++result.checks;
    out << (ok ? "[ok]   " : "[FAIL] ") << name;
    if (!ok && !detail.empty()) out << " (" << detail << ")";
    out << "\n";
    if (!ok) result.failures.push_back(name);
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.image_size = 16;
  c.patch_size = 8;
  c.enc_dim = 16;
  c.enc_layers = 1;
  c.enc_heads = 2;
  c.dec_dim = 16;
  c.dec_layers = 1;
  c.dec_heads = 2;
  c.n_queries_train = 8;
  return c;
}

model::FrameInput random_input(const ModelConfig& cfg, Rng& rng) {
  model::FrameInput in;
  in.image_size = cfg.image_size;
  const size_t n = static_cast<size_t>(cfg.image_size) * cfg.image_size;
  in.image.resize(n * 3);
  for (double& v : in.image) v = rng.uniform();
  in.points.resize(n);
  in.valid.resize(n);
  for (size_t i = 0; i < n; ++i) {
    in.valid[i] = rng.uniform() < 0.8 ? 1 : 0;
    in.points[i] = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
  }
  return in;
}

void run_gradient_checks(Harness& h) {
  Rng rng(0xf00d);
  auto randt = [&](nn::Shape s) {
    Tensor t = Tensor::zeros(std::move(s));
    for (double& v : t.raw_values()) v = rng.normal();
    t.set_requires_grad(true);
    return t;
  };

  {
    Tensor x = randt({4, 4}), W = randt({4, 3}), b = randt({3});
    Tensor* in[] = {&x, &W, &b};
    auto r = nn::grad_check(
        [&] { return nn::sum(nn::linear(x, W, b)); }, in);
    h.check("grad linear", r.max_rel_err <= 1e-6, fmt(r.max_rel_err));
  }
  {
    Tensor x = randt({3, 6}), g = randt({6}), b = randt({6});
    Tensor* in[] = {&x, &g, &b};
    auto r = nn::grad_check(
        [&] { return nn::sum(nn::layer_norm(x, g, b)); }, in);
    h.check("grad layer_norm", r.max_rel_err <= 1e-5, fmt(r.max_rel_err));
  }
  {
    Tensor x = randt({4, 5});
    Tensor* in[] = {&x};
    auto r = nn::grad_check([&] { return nn::sum(nn::gelu(x)); }, in);
    h.check("grad gelu", r.max_rel_err <= 1e-5, fmt(r.max_rel_err));
  }
  {
    Tensor x = randt({4, 5});
    Tensor w = randt({4, 5});
    Tensor* in[] = {&x};
    auto r = nn::grad_check(
        [&] { return nn::sum(nn::mul(nn::softmax(x, 1), w)); }, in);
    h.check("grad softmax", r.max_rel_err <= 1e-5, fmt(r.max_rel_err));
  }
  {
    Tensor a = randt({3, 4}), b = randt({4, 5});
    Tensor* in[] = {&a, &b};
    auto r = nn::grad_check([&] { return nn::sum(nn::matmul(a, b)); }, in);
    h.check("grad matmul", r.max_rel_err <= 1e-6, fmt(r.max_rel_err));
  }
  {
    Tensor q = randt({3, 8}), k = randt({5, 8}), v = randt({5, 8});
    Tensor w = randt({3, 8});
    nn::AttnMask mask = nn::AttnMask::all_true(3, 5);
    mask.set(0, 1, false);
    mask.set(0, 3, false);
    mask.set(1, 0, false);
    mask.set(2, 4, false);
    Tensor* in[] = {&q, &k, &v};
    auto r = nn::grad_check(
        [&] {
          return nn::sum(nn::mul(nn::masked_attention(q, k, v, &mask, 2), w));
        },
        in);
    h.check("grad masked_attention", r.max_rel_err <= 1e-5,
            fmt(r.max_rel_err));
  }
  {
    Tensor z = randt({6});
    const std::vector<double> t = {0, 1, 1, 0, 1, 0};
    Tensor* in[] = {&z};
    auto r = nn::grad_check([&] { return nn::bce_with_logits(z, t); }, in);
    h.check("grad bce_with_logits", r.max_rel_err <= 1e-5,
            fmt(r.max_rel_err));
  }
  {
    Tensor z = randt({4, 9});
    const std::vector<int> cls = {0, 5, 8, 2};
    Tensor* in[] = {&z};
    auto r =
        nn::grad_check([&] { return nn::softmax_cross_entropy(z, cls); }, in);
    h.check("grad softmax_cross_entropy", r.max_rel_err <= 1e-5,
            fmt(r.max_rel_err));
  }

  // Gradient of a masked-out V row is exactly zero.
  {
    Tensor q = randt({2, 4}), k = randt({3, 4}), v = randt({3, 4});
    nn::AttnMask mask = nn::AttnMask::all_true(2, 3);
    mask.set(0, 2, false);
    mask.set(1, 2, false);
    Tensor out = nn::masked_attention(q, k, v, &mask, 2);
    nn::sum(out).backward();
    bool zero = true;
    for (int c = 0; c < 4; ++c) zero = zero && v.grad()[2 * 4 + c] == 0.0;
    h.check("masked V row gets exactly zero gradient", zero);
  }

  // Full tiny model + loss.
  {
    const ModelConfig cfg = tiny_config();
    MccModel m = MccModel::init(cfg, 7);
    Rng drng(0xdeed);
    model::FrameInput in = random_input(cfg, drng);
    std::vector<Vec3> queries(6);
    for (auto& q : queries)
      q = {drng.uniform(-3, 3), drng.uniform(-3, 3), drng.uniform(-3, 3)};
    geom::QueryBatch labels;
    labels.points = queries;
    labels.occupied = {1, 0, 1, 0, 0, 1};
    labels.color_bins.assign(6, {10, 200, 77});
    auto loss_fn = [&] {
      model::DecoderOutput dec = m.decode(m.encode(in), queries);
      return train::compute_loss(dec, labels, 0.5).total;
    };
    std::vector<Tensor*> params;
    for (size_t i = 0; i < m.params().size(); ++i)
      params.push_back(&m.params().item(i).second);
    auto r = nn::grad_check(loss_fn, params, 1e-5, 2, 0x5eed);
    h.check("grad full model + loss", r.max_rel_err <= 1e-4,
            fmt(r.max_rel_err));
  }
}

void run_mask_checks(Harness& h) {
  bool table_ok = true;
  for (int64_t ne = 1; ne <= 8 && table_ok; ++ne)
    for (int64_t nq = 1; nq <= 8 && table_ok; ++nq) {
      const nn::AttnMask a = model::build_decoder_mask(ne, nq);
      const nn::AttnMask b = reference_decoder_mask(ne, nq);
      table_ok = a.allow == b.allow && a.n == b.n && a.m == b.m;
    }
  h.check("decoder mask matches reference rule (1..8 x 1..8)", table_ok);

  {
    Rng rng(0xbead);
    ModelConfig cfg = tiny_config();
    MccModel m = MccModel::init(cfg, 11);
    bool ok = true;
    std::string why;
    for (int t = 0; t < 20 && ok; ++t)
      ok = decode_independence_trial(m, rng, &why);
    h.check("decode query independence (bitwise)", ok, why);
  }

  // All-true mask reproduces unmasked attention bitwise.
  {
    Rng rng(0xcafe);
    Tensor q = Tensor::zeros({4, 8}), k = Tensor::zeros({6, 8}),
           v = Tensor::zeros({6, 8});
    for (Tensor* t : {&q, &k, &v})
      for (double& x : t->raw_values()) x = rng.normal();
    nn::AttnMask full = nn::AttnMask::all_true(4, 6);
    Tensor a = nn::masked_attention(q, k, v, &full, 2);
    Tensor b = nn::masked_attention(q, k, v, nullptr, 2);
    h.check("all-true mask equals unmasked attention bitwise",
            bits_equal(a.values(), b.values()));
  }

  // Softmax rows sum to 1 within 1e-12.
  {
    Rng rng(0xfeed);
    Tensor x = Tensor::zeros({8, 13});
    for (double& v : x.raw_values()) v = rng.normal() * 3;
    Tensor y = nn::softmax(x, 1);
    double worst = 0;
    for (int i = 0; i < 8; ++i) {
      double s = 0;
      for (int j = 0; j < 13; ++j) s += y.values()[i * 13 + j];
      worst = std::max(worst, std::abs(s - 1.0));
    }
    h.check("softmax rows sum to 1 (1e-12)", worst <= 1e-12, fmt(worst));
  }
}

void run_oracle_checks(Harness& h) {
  Rng rng(0x0b0e);
  // Labeling equals brute force exactly.
  bool label_ok = true;
  for (int t = 0; t < 25 && label_ok; ++t) {
    const int nq = 20 + static_cast<int>(rng.uniform_int(180));
    const int ng = 20 + static_cast<int>(rng.uniform_int(180));
    PointCloud gt;
    for (int i = 0; i < ng; ++i) {
      gt.positions.push_back(
          {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)});
      gt.colors.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    }
    std::vector<Vec3> queries(nq);
    for (auto& q : queries)
      q = {rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5),
           rng.uniform(-2.5, 2.5)};
    const double tau = rng.uniform(0.1, 0.6);
    const auto fast = geom::label_queries(queries, gt, tau);
    const auto ref = brute_label(queries, gt, tau);
    label_ok = fast.occupied == ref.occupied && fast.color_bins == ref.color_bins;
  }
  h.check("labeling equals brute force exactly", label_ok);

  // Rotation-consistent labeling.
  {
    PointCloud gt;
    for (int i = 0; i < 120; ++i)
      gt.positions.push_back(
          {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)});
    std::vector<Vec3> queries(200);
    for (auto& q : queries)
      q = {rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5),
           rng.uniform(-2.5, 2.5)};
    const Mat3 rot = geom::random_rotation(rng);
    PointCloud gt_r;
    for (const Vec3& p : gt.positions) gt_r.positions.push_back(rot * p);
    std::vector<Vec3> queries_r(queries.size());
    for (size_t i = 0; i < queries.size(); ++i) queries_r[i] = rot * queries[i];
    const auto a = geom::label_queries(queries, gt, 0.35);
    const auto b = geom::label_queries(queries_r, gt_r, 0.35);
    h.check("labels invariant under joint rotation", a.occupied == b.occupied);
  }

  // Metrics equal brute force.
  bool metric_ok = true;
  double worst = 0;
  for (int t = 0; t < 25 && metric_ok; ++t) {
    PointCloud a, b;
    const int na = 10 + static_cast<int>(rng.uniform_int(120));
    const int nb = 10 + static_cast<int>(rng.uniform_int(120));
    for (int i = 0; i < na; ++i)
      a.positions.push_back(
          {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)});
    for (int i = 0; i < nb; ++i)
      b.positions.push_back(
          {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)});
    const double rho = rng.uniform(0.1, 0.8);
    const double d1 = std::abs(metrics::accuracy(a, b, rho) -
                               brute_accuracy(a, b, rho));
    const double d2 = std::abs(metrics::completeness(a, b, rho) -
                               brute_accuracy(b, a, rho));
    const double d3 = std::abs(metrics::chamfer(a, b) - brute_chamfer(a, b));
    worst = std::max({worst, d1, d2, d3});
    metric_ok = worst <= 1e-12;
  }
  h.check("metrics equal brute force (1e-12)", metric_ok, fmt(worst));

  // Worked example: one of two gt points matched.
  {
    PointCloud pred, gt;
    pred.positions = {{0, 0, 0}};
    gt.positions = {{0, 0, 0}, {1, 0, 0}};
    const double acc = metrics::accuracy(pred, gt, 0.1);
    const double cmp = metrics::completeness(pred, gt, 0.1);
    const double f = metrics::f1(acc, cmp);
    h.check("metric worked example (100/50/66.67)",
            acc == 100.0 && cmp == 50.0 && std::abs(f - 200.0 / 3.0) < 1e-9);
  }

  // Color bin round trip.
  {
    bool ok = geom::color_bin(0.0) == 0 && geom::color_bin(1.0) == 255 &&
              geom::color_bin(0.5) == 128;
    double worst_rt = 0;
    for (int i = 0; i < 10000; ++i) {
      const double c = rng.uniform();
      worst_rt = std::max(worst_rt,
                          std::abs(geom::bin_color(geom::color_bin(c)) - c));
    }
    h.check("color quantization round trip (<= 1/510)",
            ok && worst_rt <= 1.0 / 510.0 + 1e-15, fmt(worst_rt));
  }
}

}  // namespace

CheckResult run_selftest(std::ostream& out) {
  const bool prev = nn::finite_checks_enabled();
  nn::set_finite_checks(true);
  Harness h{out, {}};
  run_gradient_checks(h);
  run_mask_checks(h);
  run_oracle_checks(h);
  nn::set_finite_checks(prev);
  out << (h.result.ok() ? "selftest passed" : "selftest FAILED") << " ("
      << h.result.checks << " checks";
  if (!h.result.ok()) {
    out << "; failed:";
    for (const auto& f : h.result.failures) out << " [" << f << "]";
  }
  out << ")\n";
  return h.result;
}

}  // namespace mcc::selftest
