#pragma once

// Shared loop structure for the kernel variants. Each variant's translation
// unit supplies a policy type with dot/axpy/add/scale and instantiates
// run_gemm with it, so the policy inlines into the gemm loops.

#include "covit/kernels.hpp"

#include <algorithm>

namespace covit::kernels::detail {

template <class V>
void run_gemm(const GemmArgs& g) {
    const std::size_t m = g.m, k = g.k, n = g.n;
    if (!g.accumulate) std::fill(g.c, g.c + m * n, 0.0);
    if (!g.trans_a && !g.trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = g.c + i * n;
            const double* arow = g.a + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = arow[p];
                if (av != 0.0) V::axpy(av, g.b + p * n, crow, n);
            }
        }
    } else if (!g.trans_a && g.trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            const double* arow = g.a + i * k;
            double* crow = g.c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += V::dot(arow, g.b + j * k, k);
        }
    } else if (g.trans_a && !g.trans_b) {
        // A stored k x m
        for (std::size_t p = 0; p < k; ++p) {
            const double* arow = g.a + p * m;
            const double* brow = g.b + p * n;
            for (std::size_t i = 0; i < m; ++i) {
                const double av = arow[i];
                if (av != 0.0) V::axpy(av, brow, g.c + i * n, n);
            }
        }
    } else {
        // A stored k x m, B stored n x k
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = g.c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) s += g.a[p * m + i] * g.b[j * k + p];
                crow[j] += s;
            }
        }
    }
}

template <class V>
KernelTable make_table(Isa isa, std::string_view name) {
    return KernelTable{isa, name, &V::dot, &V::axpy, &V::add, &V::scale, &run_gemm<V>};
}

}  // namespace covit::kernels::detail
