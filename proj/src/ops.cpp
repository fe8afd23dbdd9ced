#include "mcc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace mcc::nn {

namespace {

constexpr int64_t kParallelWork = 1 << 15;

void require(bool cond, const std::string& msg) {
  if (!cond) throw invalid_argument(msg);
}

bool recording(std::initializer_list<const Tensor*> ts) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : ts)
    if (t->requires_grad()) return true;
  return false;
}

// Sum of g over leading rows into acc[m] (fixed order).
void col_sum_acc(const double* g, int64_t rows, int64_t m, double* acc) {
  for (int64_t i = 0; i < rows; ++i) {
    const double* row = g + i * m;
    for (int64_t j = 0; j < m; ++j) acc[j] += row[j];
  }
}

}  // namespace

void mm_acc(const double* A, const double* B, double* C, int64_t n, int64_t k,
            int64_t m) {
  const bool par = n * k * m > kParallelWork && n > 1;
#pragma omp parallel for schedule(static) if (par)
  for (int64_t i = 0; i < n; ++i) {
    const double* arow = A + i * k;
    double* crow = C + i * m;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double a = arow[kk];
      const double* brow = B + kk * m;
      for (int64_t j = 0; j < m; ++j) crow[j] += a * brow[j];
    }
  }
}

void mm_acc_nt(const double* G, const double* B, double* C, int64_t n,
               int64_t m, int64_t k) {
  // C[n,k] += G[n,m] * B[k,m]^T, via an explicit transpose so the inner
  // loop stays contiguous.
  std::vector<double> bt(static_cast<size_t>(m) * k);
  for (int64_t kk = 0; kk < k; ++kk)
    for (int64_t j = 0; j < m; ++j) bt[j * k + kk] = B[kk * m + j];
  const bool par = n * k * m > kParallelWork && n > 1;
#pragma omp parallel for schedule(static) if (par)
  for (int64_t i = 0; i < n; ++i) {
    const double* grow = G + i * m;
    double* crow = C + i * k;
    for (int64_t j = 0; j < m; ++j) {
      const double g = grow[j];
      const double* btrow = bt.data() + j * k;
      for (int64_t kk = 0; kk < k; ++kk) crow[kk] += g * btrow[kk];
    }
  }
}

void mm_acc_tn(const double* A, const double* G, double* C, int64_t n,
               int64_t k, int64_t m) {
  const bool par = n * k * m > kParallelWork && k > 1;
#pragma omp parallel for schedule(static) if (par)
  for (int64_t kk = 0; kk < k; ++kk) {
    double* crow = C + kk * m;
    for (int64_t i = 0; i < n; ++i) {
      const double a = A[i * k + kk];
      const double* grow = G + i * m;
      for (int64_t j = 0; j < m; ++j) crow[j] += a * grow[j];
    }
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  std::vector<double> v(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] += bv[i];
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_op(
      a.shape(), std::move(v), {a, b},
      [pa, pb](Node& out) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (size_t i = 0; i < out.grad.size(); ++i)
            pa->grad[i] += out.grad[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (size_t i = 0; i < out.grad.size(); ++i)
            pb->grad[i] += out.grad[i];
        }
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  std::vector<double> v(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] -= bv[i];
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_op(
      a.shape(), std::move(v), {a, b},
      [pa, pb](Node& out) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (size_t i = 0; i < out.grad.size(); ++i)
            pa->grad[i] += out.grad[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (size_t i = 0; i < out.grad.size(); ++i)
            pb->grad[i] -= out.grad[i];
        }
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  std::vector<double> v(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] *= bv[i];
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_op(
      a.shape(), std::move(v), {a, b},
      [pa, pb](Node& out) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (size_t i = 0; i < out.grad.size(); ++i)
            pa->grad[i] += out.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (size_t i = 0; i < out.grad.size(); ++i)
            pb->grad[i] += out.grad[i] * pa->value[i];
        }
      },
      "mul");
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> v(a.values());
  for (double& x : v) x *= s;
  Node* pa = a.node().get();
  return make_op(
      a.shape(), std::move(v), {a},
      [pa, s](Node& out) {
        pa->ensure_grad();
        for (size_t i = 0; i < out.grad.size(); ++i)
          pa->grad[i] += s * out.grad[i];
      },
      "scale");
}

Tensor sum(const Tensor& a) {
  double s = 0;
  for (double x : a.values()) s += x;
  Node* pa = a.node().get();
  return make_op(
      {1}, {s}, {a},
      [pa](Node& out) {
        pa->ensure_grad();
        const double g = out.grad[0];
        for (double& gx : pa->grad) gx += g;
      },
      "sum");
}

Tensor reshape(const Tensor& a, Shape s) {
  require(shape_numel(s) == a.numel(),
          "reshape: cannot view " + shape_str(a.shape()) + " as " +
              shape_str(s));
  std::vector<double> v(a.values());
  Node* pa = a.node().get();
  return make_op(
      std::move(s), std::move(v), {a},
      [pa](Node& out) {
        pa->ensure_grad();
        for (size_t i = 0; i < out.grad.size(); ++i)
          pa->grad[i] += out.grad[i];
      },
      "reshape");
}

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  require(W.rank() == 2, "linear: weight must be rank 2, got " +
                             shape_str(W.shape()));
  const int64_t in = W.dim(0), out_dim = W.dim(1);
  require(x.rank() >= 1 && x.shape().back() == in,
          "linear: input " + shape_str(x.shape()) + " incompatible with weight " +
              shape_str(W.shape()));
  require(b.rank() == 1 && b.dim(0) == out_dim,
          "linear: bias " + shape_str(b.shape()) + " incompatible with weight " +
              shape_str(W.shape()));
  const int64_t rows = x.numel() / in;
  std::vector<double> y(static_cast<size_t>(rows) * out_dim);
  for (int64_t i = 0; i < rows; ++i)
    std::memcpy(y.data() + i * out_dim, b.values().data(),
                sizeof(double) * out_dim);
  mm_acc(x.values().data(), W.values().data(), y.data(), rows, in, out_dim);
  Shape os(x.shape());
  os.back() = out_dim;

  Node* px = x.node().get();
  Node* pw = W.node().get();
  Node* pb = b.node().get();
  std::function<void(Node&)> bf;
  if (recording({&x, &W, &b})) {
    bf = [px, pw, pb, rows, in, out_dim](Node& out) {
      const double* g = out.grad.data();
      if (px->requires_grad) {
        px->ensure_grad();
        mm_acc_nt(g, pw->value.data(), px->grad.data(), rows, out_dim, in);
      }
      if (pw->requires_grad) {
        pw->ensure_grad();
        mm_acc_tn(px->value.data(), g, pw->grad.data(), rows, in, out_dim);
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        col_sum_acc(g, rows, out_dim, pb->grad.data());
      }
    };
  }
  return make_op(std::move(os), std::move(y), {x, W, b}, std::move(bf),
                 "linear");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const bool batched = a.rank() == 3;
  require((a.rank() == 2 && b.rank() == 2) || (a.rank() == 3 && b.rank() == 3),
          "matmul: unsupported ranks " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()));
  const int64_t B = batched ? a.dim(0) : 1;
  const int64_t n = a.dim(batched ? 1 : 0), k = a.dim(batched ? 2 : 1);
  const int64_t k2 = b.dim(batched ? 1 : 0), m = b.dim(batched ? 2 : 1);
  require(k == k2 && (!batched || b.dim(0) == B),
          "matmul: shape mismatch " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()));
  std::vector<double> y(static_cast<size_t>(B) * n * m, 0.0);
  for (int64_t bb = 0; bb < B; ++bb)
    mm_acc(a.values().data() + bb * n * k, b.values().data() + bb * k * m,
           y.data() + bb * n * m, n, k, m);
  Shape os = batched ? Shape{B, n, m} : Shape{n, m};
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  std::function<void(Node&)> bf;
  if (recording({&a, &b})) {
    bf = [pa, pb, B, n, k, m](Node& out) {
      for (int64_t bb = 0; bb < B; ++bb) {
        const double* g = out.grad.data() + bb * n * m;
        if (pa->requires_grad) {
          pa->ensure_grad();
          mm_acc_nt(g, pb->value.data() + bb * k * m,
                    pa->grad.data() + bb * n * k, n, m, k);
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          mm_acc_tn(pa->value.data() + bb * n * k, g,
                    pb->grad.data() + bb * k * m, n, k, m);
        }
      }
    };
  }
  return make_op(std::move(os), std::move(y), {a, b}, std::move(bf), "matmul");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const int64_t d = x.shape().back();
  require(gain.rank() == 1 && gain.dim(0) == d && bias.rank() == 1 &&
              bias.dim(0) == d,
          "layer_norm: affine shape " + shape_str(gain.shape()) +
              " incompatible with input " + shape_str(x.shape()));
  const int64_t rows = x.numel() / d;
  std::vector<double> y(x.numel());
  auto stats = std::make_shared<std::vector<double>>(rows * 2);
  const double* xv = x.values().data();
  for (int64_t i = 0; i < rows; ++i) {
    const double* xr = xv + i * d;
    double mu = 0;
    for (int64_t j = 0; j < d; ++j) mu += xr[j];
    mu /= d;
    double var = 0;
    for (int64_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= d;
    const double rstd = 1.0 / std::sqrt(var + eps);
    (*stats)[2 * i] = mu;
    (*stats)[2 * i + 1] = rstd;
    double* yr = y.data() + i * d;
    const double* gv = gain.values().data();
    const double* bv = bias.values().data();
    for (int64_t j = 0; j < d; ++j)
      yr[j] = (xr[j] - mu) * rstd * gv[j] + bv[j];
  }
  Node* px = x.node().get();
  Node* pg = gain.node().get();
  Node* pb = bias.node().get();
  std::function<void(Node&)> bf;
  if (recording({&x, &gain, &bias})) {
    bf = [px, pg, pb, stats, rows, d](Node& out) {
      const double* g = out.grad.data();
      std::vector<double> dxhat(d);
      for (int64_t i = 0; i < rows; ++i) {
        const double mu = (*stats)[2 * i], rstd = (*stats)[2 * i + 1];
        const double* gr = g + i * d;
        const double* xr = px->value.data() + i * d;
        if (pg->requires_grad) {
          pg->ensure_grad();
          for (int64_t j = 0; j < d; ++j)
            pg->grad[j] += gr[j] * (xr[j] - mu) * rstd;
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (int64_t j = 0; j < d; ++j) pb->grad[j] += gr[j];
        }
        if (px->requires_grad) {
          px->ensure_grad();
          double m1 = 0, m2 = 0;
          for (int64_t j = 0; j < d; ++j) {
            dxhat[j] = gr[j] * pg->value[j];
            const double xh = (xr[j] - mu) * rstd;
            m1 += dxhat[j];
            m2 += dxhat[j] * xh;
          }
          m1 /= d;
          m2 /= d;
          double* gx = px->grad.data() + i * d;
          for (int64_t j = 0; j < d; ++j) {
            const double xh = (xr[j] - mu) * rstd;
            gx[j] += rstd * (dxhat[j] - m1 - xh * m2);
          }
        }
      }
    };
  }
  return make_op(x.shape(), std::move(y), {x, gain, bias}, std::move(bf),
                 "layer_norm");
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  std::vector<double> y(x.numel());
  const double* xv = x.values().data();
  for (size_t i = 0; i < y.size(); ++i)
    y[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * inv_sqrt2));
  Node* px = x.node().get();
  return make_op(
      x.shape(), std::move(y), {x},
      [px](Node& out) {
        constexpr double inv_sqrt2pi = 0.39894228040143267794;
        px->ensure_grad();
        for (size_t i = 0; i < out.grad.size(); ++i) {
          const double v = px->value[i];
          const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
          const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
          px->grad[i] += out.grad[i] * (cdf + v * pdf);
        }
      },
      "gelu");
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> y(x.numel());
  const double* xv = x.values().data();
  for (size_t i = 0; i < y.size(); ++i) {
    const double v = xv[i];
    y[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                  : std::exp(v) / (1.0 + std::exp(v));
  }
  Node* px = x.node().get();
  return make_op(
      x.shape(), std::move(y), {x},
      [px](Node& out) {
        px->ensure_grad();
        for (size_t i = 0; i < out.grad.size(); ++i) {
          const double s = out.value[i];
          px->grad[i] += out.grad[i] * s * (1.0 - s);
        }
      },
      "sigmoid");
}

Tensor softmax(const Tensor& x, int axis) {
  require(axis >= 0 && axis < x.rank(), "softmax: axis out of range");
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const int64_t n = x.dim(axis);
  std::vector<double> y(x.numel());
  const double* xv = x.values().data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t r = 0; r < inner; ++r) {
      const int64_t base = o * n * inner + r;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t i = 0; i < n; ++i)
        mx = std::max(mx, xv[base + i * inner]);
      double s = 0;
      for (int64_t i = 0; i < n; ++i) {
        const double e = std::exp(xv[base + i * inner] - mx);
        y[base + i * inner] = e;
        s += e;
      }
      for (int64_t i = 0; i < n; ++i) y[base + i * inner] /= s;
    }
  }
  Node* px = x.node().get();
  return make_op(
      x.shape(), std::move(y), {x},
      [px, outer, inner, n](Node& out) {
        px->ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
          for (int64_t r = 0; r < inner; ++r) {
            const int64_t base = o * n * inner + r;
            double dot = 0;
            for (int64_t i = 0; i < n; ++i)
              dot += out.grad[base + i * inner] * out.value[base + i * inner];
            for (int64_t i = 0; i < n; ++i) {
              const int64_t k = base + i * inner;
              px->grad[k] += out.value[k] * (out.grad[k] - dot);
            }
          }
        }
      },
      "softmax");
}

Tensor masked_attention(const Tensor& Q, const Tensor& K, const Tensor& V,
                        const AttnMask* mask, int heads) {
  const bool batched = Q.rank() == 3;
  require((Q.rank() == 2 || Q.rank() == 3) && K.rank() == Q.rank() &&
              V.rank() == Q.rank(),
          "masked_attention: rank mismatch " + shape_str(Q.shape()) + " / " +
              shape_str(K.shape()) + " / " + shape_str(V.shape()));
  const int64_t B = batched ? Q.dim(0) : 1;
  const int64_t n = Q.dim(batched ? 1 : 0), d = Q.dim(batched ? 2 : 1);
  const int64_t m = K.dim(batched ? 1 : 0);
  require(K.dim(batched ? 2 : 1) == d && V.dim(batched ? 2 : 1) == d &&
              V.dim(batched ? 1 : 0) == m &&
              (!batched || (K.dim(0) == B && V.dim(0) == B)),
          "masked_attention: shape mismatch " + shape_str(Q.shape()) + " vs " +
              shape_str(K.shape()) + " vs " + shape_str(V.shape()));
  require(heads > 0 && d % heads == 0,
          "masked_attention: width " + std::to_string(d) +
              " not divisible by " + std::to_string(heads) + " heads");
  if (mask) {
    require(mask->n == n && mask->m == m,
            "masked_attention: mask is " + std::to_string(mask->n) + "x" +
                std::to_string(mask->m) + ", expected " + std::to_string(n) +
                "x" + std::to_string(m));
    for (int64_t i = 0; i < n; ++i) {
      bool any = false;
      for (int64_t j = 0; j < m && !any; ++j) any = mask->at(i, j);
      require(any, "masked_attention: mask row " + std::to_string(i) +
                       " allows no keys");
    }
  }
  const int64_t dh = d / heads;
  const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool rec = recording({&Q, &K, &V});

  std::vector<double> y(static_cast<size_t>(B) * n * d, 0.0);
  auto weights = std::make_shared<std::vector<double>>();
  if (rec) weights->assign(static_cast<size_t>(B) * heads * n * m, 0.0);

  const double* qv = Q.values().data();
  const double* kv = K.values().data();
  const double* vv = V.values().data();
  const int64_t bh = B * heads;
#pragma omp parallel for schedule(static) if (bh * n * m * dh > kParallelWork)
  for (int64_t bhidx = 0; bhidx < bh; ++bhidx) {
    const int64_t b = bhidx / heads, h = bhidx % heads;
    const int64_t off = h * dh;
    std::vector<double> w(m);
    for (int64_t i = 0; i < n; ++i) {
      const double* q = qv + (b * n + i) * d + off;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t j = 0; j < m; ++j) {
        if (mask && !mask->at(i, j)) {
          w[j] = 0;
          continue;
        }
        const double* k = kv + (b * m + j) * d + off;
        double s = 0;
        for (int64_t c = 0; c < dh; ++c) s += q[c] * k[c];
        w[j] = s * scl;
        mx = std::max(mx, w[j]);
      }
      double denom = 0;
      for (int64_t j = 0; j < m; ++j) {
        if (mask && !mask->at(i, j)) continue;
        w[j] = std::exp(w[j] - mx);
        denom += w[j];
      }
      double* yrow = y.data() + (b * n + i) * d + off;
      for (int64_t j = 0; j < m; ++j) {
        if (mask && !mask->at(i, j)) continue;
        const double wij = w[j] / denom;
        if (rec) (*weights)[((b * heads + h) * n + i) * m + j] = wij;
        const double* vrow = vv + (b * m + j) * d + off;
        for (int64_t c = 0; c < dh; ++c) yrow[c] += wij * vrow[c];
      }
    }
  }

  Shape os = batched ? Shape{B, n, d} : Shape{n, d};
  Node* pq = Q.node().get();
  Node* pk = K.node().get();
  Node* pv = V.node().get();
  std::function<void(Node&)> bf;
  if (rec) {
    bf = [pq, pk, pv, weights, B, n, m, d, heads, dh, scl](Node& out) {
      // Entries with weight exactly zero (masked) contribute nothing and
      // receive exactly zero gradient.
      pq->ensure_grad();
      pk->ensure_grad();
      pv->ensure_grad();
      std::vector<double> dw(m);
      for (int64_t b = 0; b < B; ++b) {
        for (int64_t h = 0; h < heads; ++h) {
          const int64_t off = h * dh;
          for (int64_t i = 0; i < n; ++i) {
            const double* g = out.grad.data() + (b * n + i) * d + off;
            const double* wrow =
                weights->data() + ((b * heads + h) * n + i) * m;
            double s = 0;
            for (int64_t j = 0; j < m; ++j) {
              if (wrow[j] == 0.0) {
                dw[j] = 0;
                continue;
              }
              const double* vrow = pv->value.data() + (b * m + j) * d + off;
              double t = 0;
              for (int64_t c = 0; c < dh; ++c) t += g[c] * vrow[c];
              dw[j] = t;
              s += wrow[j] * t;
              if (pv->requires_grad) {
                double* gv = pv->grad.data() + (b * m + j) * d + off;
                for (int64_t c = 0; c < dh; ++c) gv[c] += wrow[j] * g[c];
              }
            }
            const double* q = pq->value.data() + (b * n + i) * d + off;
            double* gq = pq->grad.data() + (b * n + i) * d + off;
            for (int64_t j = 0; j < m; ++j) {
              if (wrow[j] == 0.0) continue;
              const double dl = wrow[j] * (dw[j] - s) * scl;
              const double* k = pk->value.data() + (b * m + j) * d + off;
              if (pq->requires_grad)
                for (int64_t c = 0; c < dh; ++c) gq[c] += dl * k[c];
              if (pk->requires_grad) {
                double* gk = pk->grad.data() + (b * m + j) * d + off;
                for (int64_t c = 0; c < dh; ++c) gk[c] += dl * q[c];
              }
            }
          }
        }
      }
    };
  }
  return make_op(std::move(os), std::move(y), {Q, K, V}, std::move(bf),
                 "masked_attention");
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  const int rank = parts[0].rank();
  require(axis >= 0 && axis < rank, "concat: axis out of range");
  Shape os = parts[0].shape();
  int64_t total_axis = 0;
  for (const Tensor& p : parts) {
    require(p.rank() == rank, "concat: rank mismatch");
    for (int i = 0; i < rank; ++i)
      require(i == axis || p.dim(i) == os[i],
              "concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                  shape_str(os));
    total_axis += p.dim(axis);
  }
  os[axis] = total_axis;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= os[i];
  for (int i = axis + 1; i < rank; ++i) inner *= os[i];

  std::vector<double> y(shape_numel(os));
  int64_t offset = 0;
  for (const Tensor& p : parts) {
    const int64_t pa = p.dim(axis);
    const double* pv = p.values().data();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(y.data() + (o * total_axis + offset) * inner,
                  pv + o * pa * inner, sizeof(double) * pa * inner);
    offset += pa;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  std::vector<Node*> pnodes;
  std::vector<int64_t> adims;
  for (const Tensor& p : parts) {
    pnodes.push_back(p.node().get());
    adims.push_back(p.dim(axis));
  }
  return make_op(
      std::move(os), std::move(y), std::move(inputs),
      [pnodes, adims, outer, inner, total_axis](Node& out) {
        int64_t offset = 0;
        for (size_t pi = 0; pi < pnodes.size(); ++pi) {
          Node* p = pnodes[pi];
          const int64_t pa = adims[pi];
          if (p->requires_grad) {
            p->ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
              const double* g =
                  out.grad.data() + (o * total_axis + offset) * inner;
              double* gp = p->grad.data() + o * pa * inner;
              for (int64_t t = 0; t < pa * inner; ++t) gp[t] += g[t];
            }
          }
          offset += pa;
        }
      },
      "concat");
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  const Tensor parts[] = {a, b};
  return concat(std::span<const Tensor>(parts, 2), axis);
}

Tensor select_rows(const Tensor& x, std::span<const int64_t> idx) {
  require(x.rank() >= 2, "select_rows: input must have rank >= 2");
  const int64_t n = x.dim(0);
  const int64_t inner = x.numel() / n;
  Shape os = x.shape();
  os[0] = static_cast<int64_t>(idx.size());
  std::vector<double> y(static_cast<size_t>(idx.size()) * inner);
  for (size_t t = 0; t < idx.size(); ++t) {
    require(idx[t] >= 0 && idx[t] < n, "select_rows: index out of range");
    std::memcpy(y.data() + t * inner, x.values().data() + idx[t] * inner,
                sizeof(double) * inner);
  }
  Node* px = x.node().get();
  std::vector<int64_t> idx_copy(idx.begin(), idx.end());
  return make_op(
      std::move(os), std::move(y), {x},
      [px, idx_copy, inner](Node& out) {
        px->ensure_grad();
        for (size_t t = 0; t < idx_copy.size(); ++t) {
          const double* g = out.grad.data() + t * inner;
          double* gp = px->grad.data() + idx_copy[t] * inner;
          for (int64_t c = 0; c < inner; ++c) gp[c] += g[c];
        }
      },
      "select_rows");
}

Tensor take_token(const Tensor& x, int64_t t) {
  require(x.rank() == 3, "take_token: input must be rank 3");
  const int64_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
  require(t >= 0 && t < T, "take_token: index out of range");
  std::vector<double> y(static_cast<size_t>(B) * C);
  for (int64_t b = 0; b < B; ++b)
    std::memcpy(y.data() + b * C, x.values().data() + (b * T + t) * C,
                sizeof(double) * C);
  Node* px = x.node().get();
  return make_op(
      {B, C}, std::move(y), {x},
      [px, T, C, t](Node& out) {
        px->ensure_grad();
        const int64_t B = out.shape[0];
        for (int64_t b = 0; b < B; ++b) {
          const double* g = out.grad.data() + b * C;
          double* gp = px->grad.data() + (b * T + t) * C;
          for (int64_t c = 0; c < C; ++c) gp[c] += g[c];
        }
      },
      "take_token");
}

Tensor tile_token(const Tensor& v, int64_t count) {
  require(v.rank() == 1, "tile_token: input must be rank 1");
  const int64_t C = v.dim(0);
  std::vector<double> y(static_cast<size_t>(count) * C);
  for (int64_t b = 0; b < count; ++b)
    std::memcpy(y.data() + b * C, v.values().data(), sizeof(double) * C);
  Node* pv = v.node().get();
  return make_op(
      {count, 1, C}, std::move(y), {v},
      [pv, C, count](Node& out) {
        pv->ensure_grad();
        for (int64_t b = 0; b < count; ++b) {
          const double* g = out.grad.data() + b * C;
          for (int64_t c = 0; c < C; ++c) pv->grad[c] += g[c];
        }
      },
      "tile_token");
}

Tensor mean_rows(const Tensor& x) {
  require(x.rank() == 2, "mean_rows: input must be rank 2");
  const int64_t n = x.dim(0), d = x.dim(1);
  std::vector<double> y(d, 0.0);
  col_sum_acc(x.values().data(), n, d, y.data());
  for (double& t : y) t /= static_cast<double>(n);
  Node* px = x.node().get();
  return make_op(
      {1, d}, std::move(y), {x},
      [px, n, d](Node& out) {
        px->ensure_grad();
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < d; ++j)
            px->grad[i * d + j] += out.grad[j] / static_cast<double>(n);
      },
      "mean_rows");
}

Tensor where_rows(std::span<const uint8_t> valid, const Tensor& x,
                  const Tensor& fallback) {
  require(x.rank() == 2, "where_rows: input must be rank 2");
  const int64_t n = x.dim(0), d = x.dim(1);
  require(static_cast<int64_t>(valid.size()) == n,
          "where_rows: validity length mismatch");
  require(fallback.rank() == 1 && fallback.dim(0) == d,
          "where_rows: fallback shape " + shape_str(fallback.shape()) +
              " incompatible with input " + shape_str(x.shape()));
  std::vector<double> y(x.numel());
  for (int64_t i = 0; i < n; ++i)
    std::memcpy(y.data() + i * d,
                valid[i] ? x.values().data() + i * d
                         : fallback.values().data(),
                sizeof(double) * d);
  Node* px = x.node().get();
  Node* pf = fallback.node().get();
  std::vector<uint8_t> vcopy(valid.begin(), valid.end());
  return make_op(
      x.shape(), std::move(y), {x, fallback},
      [px, pf, vcopy, n, d](Node& out) {
        for (int64_t i = 0; i < n; ++i) {
          const double* g = out.grad.data() + i * d;
          if (vcopy[i]) {
            if (px->requires_grad) {
              px->ensure_grad();
              double* gp = px->grad.data() + i * d;
              for (int64_t c = 0; c < d; ++c) gp[c] += g[c];
            }
          } else if (pf->requires_grad) {
            pf->ensure_grad();
            for (int64_t c = 0; c < d; ++c) pf->grad[c] += g[c];
          }
        }
      },
      "where_rows");
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets) {
  const int64_t n = logits.numel();
  require(static_cast<int64_t>(targets.size()) == n,
          "bce_with_logits: " + std::to_string(targets.size()) +
              " targets for " + std::to_string(n) + " logits");
  for (double t : targets)
    require(t == 0.0 || t == 1.0, "bce_with_logits: target not in {0,1}");
  const double* z = logits.values().data();
  double loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    // max(z,0) - z*y + log(1 + exp(-|z|))
    loss += std::max(z[i], 0.0) - z[i] * targets[i] +
            std::log1p(std::exp(-std::abs(z[i])));
  }
  loss /= static_cast<double>(n);
  Node* px = logits.node().get();
  std::vector<double> tcopy(targets.begin(), targets.end());
  return make_op(
      {1}, {loss}, {logits},
      [px, tcopy, n](Node& out) {
        px->ensure_grad();
        const double g = out.grad[0] / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
          const double z = px->value[i];
          const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                                  : std::exp(z) / (1.0 + std::exp(z));
          px->grad[i] += g * (s - tcopy[i]);
        }
      },
      "bce_with_logits");
}

Tensor softmax_cross_entropy(const Tensor& logits,
                             std::span<const int> classes) {
  require(logits.rank() == 2, "softmax_cross_entropy: logits must be [n,k]");
  const int64_t n = logits.dim(0), k = logits.dim(1);
  require(static_cast<int64_t>(classes.size()) == n,
          "softmax_cross_entropy: " + std::to_string(classes.size()) +
              " classes for " + std::to_string(n) + " rows");
  for (int c : classes)
    require(c >= 0 && c < k, "softmax_cross_entropy: class " +
                                 std::to_string(c) + " out of range [0," +
                                 std::to_string(k) + ")");
  const double* z = logits.values().data();
  double loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double* row = z + i * k;
    double mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double s = 0;
    for (int64_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    loss += mx + std::log(s) - row[classes[i]];
  }
  loss /= static_cast<double>(n);
  Node* px = logits.node().get();
  std::vector<int> ccopy(classes.begin(), classes.end());
  return make_op(
      {1}, {loss}, {logits},
      [px, ccopy, n, k](Node& out) {
        px->ensure_grad();
        const double g = out.grad[0] / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
          const double* row = px->value.data() + i * k;
          double mx = row[0];
          for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
          double s = 0;
          for (int64_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
          double* gx = px->grad.data() + i * k;
          for (int64_t j = 0; j < k; ++j) {
            const double p = std::exp(row[j] - mx) / s;
            gx[j] += g * (p - (j == ccopy[i] ? 1.0 : 0.0));
          }
        }
      },
      "softmax_cross_entropy");
}

}  // namespace mcc::nn
