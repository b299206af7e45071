#include <atomic>
#include <cstdlib>
#include <string>

#include "wattnet/errors.hpp"
#include "wattnet/simd/kernels.hpp"

namespace wattnet::simd {

#ifdef WATTNET_HAVE_AVX2
extern const Kernels kAvx2Kernels;
#endif

const Kernels* avx2_kernels() {
#ifdef WATTNET_HAVE_AVX2
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &kAvx2Kernels : nullptr;
#else
  return nullptr;
#endif
}

std::optional<Isa> parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  return std::nullopt;
}

namespace {

const Kernels* initial() {
  if (const char* env = std::getenv("WATTNET_ISA")) {
    const auto isa = parse_isa(env);
    if (isa == Isa::scalar) return &scalar_kernels();
    if (isa == Isa::avx2 && avx2_kernels()) return avx2_kernels();
  }
  if (const Kernels* k = avx2_kernels()) return k;
  return &scalar_kernels();
}

std::atomic<const Kernels*>& slot() {
  static std::atomic<const Kernels*> current{initial()};
  return current;
}

}  // namespace

const Kernels& active() { return *slot().load(std::memory_order_acquire); }

void select(Isa isa) {
  if (isa == Isa::scalar) {
    slot().store(&scalar_kernels(), std::memory_order_release);
    return;
  }
  const Kernels* k = avx2_kernels();
  if (!k) throw ConfigError("AVX2 kernels are not available on this build or CPU");
  slot().store(k, std::memory_order_release);
}

}  // namespace wattnet::simd
