// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "kernels_impl.hpp"

#include <immintrin.h>

namespace covit::kernels {
namespace {

struct Avx2Ops {
    static double dot(const double* x, const double* y, std::size_t n) {
        __m256d acc0 = _mm256_setzero_pd();
        __m256d acc1 = _mm256_setzero_pd();
        std::size_t i = 0;
        for (; i + 8 <= n; i += 8) {
            acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
            acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
        }
        for (; i + 4 <= n; i += 4)
            acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc0 = _mm256_add_pd(acc0, acc1);
        const __m128d lo = _mm256_castpd256_pd128(acc0);
        const __m128d hi = _mm256_extractf128_pd(acc0, 1);
        const __m128d pair = _mm_add_pd(lo, hi);
        double s = _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
        for (; i < n; ++i) s += x[i] * y[i];
        return s;
    }
    static void axpy(double alpha, const double* x, double* y, std::size_t n) {
        const __m256d a = _mm256_set1_pd(alpha);
        std::size_t i = 0;
        for (; i + 4 <= n; i += 4)
            _mm256_storeu_pd(y + i, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
        for (; i < n; ++i) y[i] += alpha * x[i];
    }
    static void add(const double* x, double* y, std::size_t n) {
        std::size_t i = 0;
        for (; i + 4 <= n; i += 4)
            _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
        for (; i < n; ++i) y[i] += x[i];
    }
    static void scale(double alpha, double* y, std::size_t n) {
        const __m256d a = _mm256_set1_pd(alpha);
        std::size_t i = 0;
        for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_mul_pd(a, _mm256_loadu_pd(y + i)));
        for (; i < n; ++i) y[i] *= alpha;
    }
};

}  // namespace

const KernelTable* avx2_table() {
    static const KernelTable table = detail::make_table<Avx2Ops>(Isa::avx2, "avx2");
    return &table;
}

}  // namespace covit::kernels
