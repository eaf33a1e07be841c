// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "plbert/errors.hpp"
#include "plbert/kernels.hpp"

namespace plbert::kernels {

#if !defined(PLBERT_HAVE_AVX2)
const Table* avx2_table() { return nullptr; }
#endif
#if !defined(PLBERT_HAVE_NEON)
const Table* neon_table() { return nullptr; }
#endif

namespace {

const Table* table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return &scalar_table();
    case Isa::avx2:
      return avx2_table();
    case Isa::neon:
      return neon_table();
  }
  return nullptr;
}

const Table* initial_table() {
  if (const char* env = std::getenv("PLBERT_ISA"); env != nullptr && *env != '\0') {
    std::string_view requested(env);
    if (requested != "auto") {
      Isa isa = parse_isa(requested);
      if (!compiled(isa) || !cpu_supports(isa)) {
        throw UsageError("PLBERT_ISA=" + std::string(requested) + " is not available on this build/CPU");
      }
      return table_for(isa);
    }
  }
  return table_for(best_isa());
}

}  // namespace

namespace detail {

std::atomic<const Table*> current{nullptr};

const Table& init_active() {
  static const Table* initial = initial_table();
  const Table* expected = nullptr;
  current.compare_exchange_strong(expected, initial, std::memory_order_relaxed);
  return *current.load(std::memory_order_relaxed);
}

}  // namespace detail

bool compiled(Isa isa) { return table_for(isa) != nullptr; }

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(__i386__)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa best_isa() {
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (compiled(isa) && cpu_supports(isa)) {
      return isa;
    }
  }
  return Isa::scalar;
}

void select(Isa isa) {
  if (!compiled(isa) || !cpu_supports(isa)) {
    throw UsageError("kernel ISA '" + std::string(isa_name(isa)) + "' is not available on this build/CPU");
  }
  detail::current.store(table_for(isa), std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  if (name == "neon") return Isa::neon;
  throw UsageError("unknown kernel ISA '" + std::string(name) + "' (expected scalar, avx2 or neon)");
}

}  // namespace plbert::kernels
