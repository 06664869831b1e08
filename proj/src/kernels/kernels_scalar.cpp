#include "kernels_impl.hpp"

namespace covit::kernels {
namespace {

struct ScalarOps {
    static double dot(const double* x, const double* y, std::size_t n) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
        return s;
    }
    static void axpy(double alpha, const double* x, double* y, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
    }
    static void add(const double* x, double* y, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
    }
    static void scale(double alpha, double* y, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) y[i] *= alpha;
    }
};

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table = detail::make_table<ScalarOps>(Isa::scalar, "scalar");
    return table;
}

}  // namespace covit::kernels
