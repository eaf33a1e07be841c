// SPDX-License-Identifier: Apache-2.0
//
// AArch64 NEON variants. NEON is architecturally guaranteed on AArch64, so
// this table is always usable when compiled in.
#include <arm_neon.h>

#include "plbert/kernels.hpp"

namespace plbert::kernels {
namespace {

inline void widen4(const float* p, float64x2_t& lo, float64x2_t& hi) {
  float32x4_t v = vld1q_f32(p);
  lo = vcvt_f64_f32(vget_low_f32(v));
  hi = vcvt_high_f64_f32(v);
}

double dot_ff(const float* a, const float* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float64x2_t alo, ahi, blo, bhi;
    widen4(a + i, alo, ahi);
    widen4(b + i, blo, bhi);
    acc0 = vfmaq_f64(acc0, alo, blo);
    acc1 = vfmaq_f64(acc1, ahi, bhi);
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

double dot_dd(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) {
    acc += a[i] * b[i];
  }
  return acc;
}

double dot_df(const double* a, const float* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float64x2_t blo, bhi;
    widen4(b + i, blo, bhi);
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), blo);
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), bhi);
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) {
    acc += a[i] * static_cast<double>(b[i]);
  }
  return acc;
}

void axpy_f(double alpha, const float* x, double* y, std::size_t n) {
  const float64x2_t a = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float64x2_t xlo, xhi;
    widen4(x + i, xlo, xhi);
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), a, xlo));
    vst1q_f64(y + i + 2, vfmaq_f64(vld1q_f64(y + i + 2), a, xhi));
  }
  for (; i < n; ++i) {
    y[i] += alpha * static_cast<double>(x[i]);
  }
}

void axpy_d(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t a = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), a, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) {
    y[i] += alpha * x[i];
  }
}

}  // namespace

const Table* neon_table() {
  static const Table table{Isa::neon, dot_ff, dot_dd, dot_df, axpy_f, axpy_d};
  return &table;
}

}  // namespace plbert::kernels
