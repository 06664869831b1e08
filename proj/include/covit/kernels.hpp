#pragma once

// Dense double-precision inner loops used by the tensor ops.
//
// Every routine has a scalar reference implementation and, where the
// target supports it, an AVX2+FMA variant. The variant is chosen once at
// first use from the CPU feature flags and may be overridden with the
// COVIT_SIMD environment variable (`scalar` or `avx2`) or force_isa().
// Within one variant results are bitwise reproducible; across variants
// they agree to rounding (the SIMD path changes summation order).

#include <cstddef>
#include <string_view>

namespace covit::kernels {

enum class Isa { scalar, avx2 };

// Row-major C[m x n] = op(A) * op(B) (+ C if accumulate).
// op(A) is m x k; A is stored k x m when trans_a is set.
// op(B) is k x n; B is stored n x k when trans_b is set.
struct GemmArgs {
    const double* a;
    const double* b;
    double* c;
    std::size_t m, k, n;
    bool trans_a = false;
    bool trans_b = false;
    bool accumulate = false;
};

struct KernelTable {
    Isa isa;
    std::string_view name;
    double (*dot)(const double* x, const double* y, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // y += x
    void (*add)(const double* x, double* y, std::size_t n);
    // y *= alpha
    void (*scale)(double alpha, double* y, std::size_t n);
    void (*gemm)(const GemmArgs& args);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);

// The table all ops dispatch through.
const KernelTable& active();

// Throws covit::Error if the requested variant is unavailable on this CPU.
void force_isa(Isa isa);

Isa parse_isa(std::string_view name);

}  // namespace covit::kernels
