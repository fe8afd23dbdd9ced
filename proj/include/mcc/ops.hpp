#pragma once

#include <span>

#include "mcc/tensor.hpp"

namespace mcc::nn {

// Attention mask over [n rows (attenders), m cols (attendees)]; true = allowed.
struct AttnMask {
  int64_t n = 0, m = 0;
  std::vector<uint8_t> allow;

  static AttnMask all_true(int64_t n, int64_t m) {
    return {n, m, std::vector<uint8_t>(static_cast<size_t>(n * m), 1)};
  }
  bool at(int64_t i, int64_t j) const { return allow[i * m + j] != 0; }
  void set(int64_t i, int64_t j, bool v) { allow[i * m + j] = v ? 1 : 0; }
};

// Elementwise / basic ops
Tensor add(const Tensor& a, const Tensor& b);       // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor sum(const Tensor& a);                        // scalar
Tensor reshape(const Tensor& a, Shape s);

// x: [..., in], W: [in, out], b: [out]
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);
// x: [n, k] @ [k, m], or batched [B, n, k] @ [B, k, m]
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-6);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);

// Scaled dot-product attention with per-row masking. Q [n,d] (or [B,n,d]),
// K/V [m,d] (or [B,m,d]); d divisible by heads; every mask row needs at
// least one allowed entry. Masked entries get exactly zero weight and zero
// gradient. mask == nullptr means unmasked.
Tensor masked_attention(const Tensor& Q, const Tensor& K, const Tensor& V,
                        const AttnMask* mask, int heads);

// Structure ops
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor select_rows(const Tensor& x, std::span<const int64_t> idx);  // axis 0
Tensor take_token(const Tensor& x, int64_t t);      // [B,T,C] -> [B,C]
Tensor tile_token(const Tensor& v, int64_t count);  // [C] -> [count,1,C]
Tensor mean_rows(const Tensor& x);                  // [n,d] -> [1,d]
// out[i] = x[i] where valid[i], else the shared fallback row. x [n,d], fb [d].
Tensor where_rows(std::span<const uint8_t> valid, const Tensor& x,
                  const Tensor& fallback);

// Losses (mean-reduced)
Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets);
Tensor softmax_cross_entropy(const Tensor& logits,
                             std::span<const int> classes);  // logits [n,k]

// Deterministic row-parallel GEMM: C[n,m] += A[n,k] * B[k,m]. Accumulation
// order per output element is fixed regardless of thread count.
void mm_acc(const double* A, const double* B, double* C, int64_t n, int64_t k,
            int64_t m);
// C[n,k] += G[n,m] * B[k,m]^T
void mm_acc_nt(const double* G, const double* B, double* C, int64_t n,
               int64_t m, int64_t k);
// C[k,m] += A[n,k]^T * G[n,m]
void mm_acc_tn(const double* A, const double* G, double* C, int64_t n,
               int64_t k, int64_t m);

}  // namespace mcc::nn
