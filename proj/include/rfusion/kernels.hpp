#pragma once

// Dense float64 inner loops used by the tensor engine and the clustering code.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2/FMA variant. The variant is chosen once at startup from CPUID and can
// be overridden with RFUSION_ISA=scalar|avx2 or select_isa(). Variants agree to
// rounding (FMA and lane-wise accumulation reorder additions), not bit-for-bit.

#include <cstddef>
#include <string_view>

namespace rfusion::kernels {

enum class Isa { scalar, avx2 };

/// Function table for one instruction set. All matrices are row-major and
/// dense; `n` counts elements. Output buffers may not alias inputs unless noted.
struct KernelTable {
  Isa isa;
  const char* name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  double (*sqdist)(const double* a, const double* b, std::size_t n);
  // y += alpha * x  (y may alias nothing else)
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = a op b, elementwise; out may alias a or b
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out = alpha * a; out may alias a
  void (*scale)(double alpha, const double* a, double* out, std::size_t n);
  // out = max(a, 0)
  void (*relu)(const double* a, double* out, std::size_t n);
  // g_in += g_out * [x > 0]
  void (*relu_backward)(const double* x, const double* g_out, double* g_in, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // C[m x n] += A^T * B with A stored [k x m], B [k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // C[m x n] += A * B^T with A [m x k], B stored [n x k]
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
};

const KernelTable& scalar_table();

/// True when this build carries the variant and the running CPU supports it.
bool isa_available(Isa isa);

/// Table for a specific ISA; throws ContractError when unavailable.
const KernelTable& table(Isa isa);

/// Currently active table (thread-safe to call concurrently).
const KernelTable& active();

/// Switch the active table process-wide. Not meant to be toggled while other
/// threads are computing.
void select_isa(Isa isa);

Isa best_available_isa();

std::string_view isa_name(Isa isa);

/// Scoped ISA override, restores the previous selection on exit.
class IsaScope {
 public:
  explicit IsaScope(Isa isa);
  ~IsaScope();
  IsaScope(const IsaScope&) = delete;
  IsaScope& operator=(const IsaScope&) = delete;

 private:
  Isa previous_;
};

}  // namespace rfusion::kernels
