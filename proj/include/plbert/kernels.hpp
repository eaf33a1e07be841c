// SPDX-License-Identifier: Apache-2.0
//
// Inner-loop arithmetic used by the encoder. Every kernel has a scalar
// reference implementation; SIMD variants are compiled in separate
// translation units and picked at runtime from the CPU feature set.
//
// All reductions accumulate in double regardless of the storage type.
// Different ISAs round differently, so bit-exact reproducibility holds for a
// fixed ISA only. Set PLBERT_ISA=scalar|avx2|neon to pin one.
#pragma once

#include <atomic>
#include <cstddef>
#include <string_view>

namespace plbert::kernels {

enum class Isa { scalar, avx2, neon };

struct Table {
  Isa isa;
  double (*dot_ff)(const float* a, const float* b, std::size_t n);
  double (*dot_dd)(const double* a, const double* b, std::size_t n);
  double (*dot_df)(const double* a, const float* b, std::size_t n);
  // y += alpha * x
  void (*axpy_f)(double alpha, const float* x, double* y, std::size_t n);
  void (*axpy_d)(double alpha, const double* x, double* y, std::size_t n);
};

const Table& scalar_table();
// nullptr when the variant was not compiled for this target.
const Table* avx2_table();
const Table* neon_table();

bool compiled(Isa isa);
bool cpu_supports(Isa isa);

/// Best ISA supported by both the build and the running CPU.
Isa best_isa();

namespace detail {
extern std::atomic<const Table*> current;
const Table& init_active();
}  // namespace detail

/// Currently selected table; initialised from PLBERT_ISA or best_isa() on
/// first use.
inline const Table& active() {
  const Table* t = detail::current.load(std::memory_order_relaxed);
  return t != nullptr ? *t : detail::init_active();
}

/// Select an ISA for subsequent calls. Throws UsageError if unavailable.
void select(Isa isa);

std::string_view isa_name(Isa isa);
Isa parse_isa(std::string_view name);

// Typed front-ends over the active table.

inline double dot(const float* a, const float* b, std::size_t n) { return active().dot_ff(a, b, n); }
inline double dot(const double* a, const double* b, std::size_t n) { return active().dot_dd(a, b, n); }
inline double dot(const double* a, const float* b, std::size_t n) { return active().dot_df(a, b, n); }
inline void axpy(double alpha, const float* x, double* y, std::size_t n) { active().axpy_f(alpha, x, y, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy_d(alpha, x, y, n); }

}  // namespace plbert::kernels
