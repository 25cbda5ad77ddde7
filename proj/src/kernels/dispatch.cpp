#include <atomic>
#include <cstdlib>
#include <string>

#include "rfusion/error.hpp"
#include "rfusion/kernels.hpp"

namespace rfusion::kernels {

#if defined(RFUSION_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(RFUSION_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  Isa isa = best_available_isa();
  if (const char* env = std::getenv("RFUSION_ISA")) {
    const std::string v(env);
    if (v == "scalar") {
      isa = Isa::scalar;
    } else if (v == "avx2" && isa_available(Isa::avx2)) {
      isa = Isa::avx2;
    }
  }
  return &table(isa);
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> s{initial_table()};
  return s;
}

}  // namespace

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2: {
      static const bool ok = cpu_has_avx2();
      return ok;
    }
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!isa_available(isa)) {
    throw ContractError("kernel ISA '" + std::string(isa_name(isa)) + "' is not available");
  }
#if defined(RFUSION_HAVE_AVX2)
  if (isa == Isa::avx2) return avx2_table();
#endif
  return scalar_table();
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void select_isa(Isa isa) { slot().store(&table(isa), std::memory_order_release); }

Isa best_available_isa() { return isa_available(Isa::avx2) ? Isa::avx2 : Isa::scalar; }

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

IsaScope::IsaScope(Isa isa) : previous_(active().isa) { select_isa(isa); }

IsaScope::~IsaScope() { select_isa(previous_); }

}  // namespace rfusion::kernels
