// SPDX-License-Identifier: Apache-2.0
#include "plbert/kernels.hpp"

namespace plbert::kernels {
namespace {

template <class A, class B>
double dot_ref(const A* a, const B* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

template <class X>
void axpy_ref(double alpha, const X* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] += alpha * static_cast<double>(x[i]);
  }
}

double dot_ff(const float* a, const float* b, std::size_t n) { return dot_ref(a, b, n); }
double dot_dd(const double* a, const double* b, std::size_t n) { return dot_ref(a, b, n); }
double dot_df(const double* a, const float* b, std::size_t n) { return dot_ref(a, b, n); }
void axpy_f(double alpha, const float* x, double* y, std::size_t n) { axpy_ref(alpha, x, y, n); }
void axpy_d(double alpha, const double* x, double* y, std::size_t n) { axpy_ref(alpha, x, y, n); }

}  // namespace

const Table& scalar_table() {
  static const Table table{Isa::scalar, dot_ff, dot_dd, dot_df, axpy_f, axpy_d};
  return table;
}

}  // namespace plbert::kernels
