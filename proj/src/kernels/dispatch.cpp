#include "covit/error.hpp"
#include "covit/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace covit::kernels {

#ifndef COVIT_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

namespace {

const KernelTable* detect() {
    if (const char* env = std::getenv("COVIT_SIMD"); env != nullptr && *env != '\0') {
        const Isa wanted = parse_isa(env);
        if (!cpu_supports(wanted))
            throw Error("COVIT_SIMD=" + std::string(env) + " is not supported on this CPU");
        return wanted == Isa::avx2 ? avx2_table() : &scalar_table();
    }
    if (cpu_supports(Isa::avx2)) return avx2_table();
    return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> current{detect()};
    return current;
}

}  // namespace

bool cpu_supports(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
#if defined(COVIT_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
    }
    return false;
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void force_isa(Isa isa) {
    if (!cpu_supports(isa)) throw Error("requested SIMD variant is not supported on this CPU");
    slot().store(isa == Isa::avx2 ? avx2_table() : &scalar_table(), std::memory_order_release);
}

Isa parse_isa(std::string_view name) {
    if (name == "scalar") return Isa::scalar;
    if (name == "avx2") return Isa::avx2;
    throw Error("unknown SIMD variant '" + std::string(name) + "' (expected scalar or avx2)");
}

}  // namespace covit::kernels
