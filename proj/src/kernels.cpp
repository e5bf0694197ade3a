#include "imex/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace imex::kern {

const Table<float>& scalar_table_f32();
const Table<double>& scalar_table_f64();
#ifdef IMEX_HAVE_AVX2
const Table<float>& avx2_table_f32();
const Table<double>& avx2_table_f64();
#endif

bool cpu_has_avx2() {
#ifdef IMEX_HAVE_AVX2
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

Isa resolve_initial() {
  if (const char* env = std::getenv("IMEX_ISA")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!cpu_has_avx2()) throw ValueError("IMEX_ISA=avx2 but the CPU lacks AVX2+FMA");
      return Isa::avx2;
    }
    throw ValueError(std::string("unknown IMEX_ISA value: ") + env);
  }
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<int>& isa_slot() {
  static std::atomic<int> slot{-1};
  return slot;
}

}  // namespace

Isa active() {
  auto& slot = isa_slot();
  int v = slot.load(std::memory_order_acquire);
  if (v < 0) {
    v = static_cast<int>(resolve_initial());
    slot.store(v, std::memory_order_release);
  }
  return static_cast<Isa>(v);
}

void select(Isa isa) {
  if (isa == Isa::avx2 && !cpu_has_avx2())
    throw ValueError("kern::select: CPU lacks AVX2+FMA");
  isa_slot().store(static_cast<int>(isa), std::memory_order_release);
}

template <>
const Table<float>& table<float>(Isa isa) {
#ifdef IMEX_HAVE_AVX2
  if (isa == Isa::avx2) return avx2_table_f32();
#else
  if (isa == Isa::avx2) throw ValueError("AVX2 kernels not built on this platform");
#endif
  return scalar_table_f32();
}

template <>
const Table<double>& table<double>(Isa isa) {
#ifdef IMEX_HAVE_AVX2
  if (isa == Isa::avx2) return avx2_table_f64();
#else
  if (isa == Isa::avx2) throw ValueError("AVX2 kernels not built on this platform");
#endif
  return scalar_table_f64();
}

}  // namespace imex::kern
