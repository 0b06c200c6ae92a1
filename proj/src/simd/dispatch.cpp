#include <atomic>
#include <cstdlib>
#include <cstring>
#include <string>

#include "senseflow/error.hpp"
#include "variants.hpp"

namespace senseflow::simd {

namespace {

bool cpu_has_avx2()
{
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

// -1: not forced
std::atomic<int> g_forced{-1};

Isa default_isa()
{
    const char* env = std::getenv("SENSEFLOW_ISA");
    if (env != nullptr && std::strcmp(env, "scalar") == 0) return Isa::Scalar;
    return isa_supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

} // namespace

const char* isa_name(Isa isa)
{
    switch (isa) {
    case Isa::Scalar:
        return "scalar";
    case Isa::Avx2:
        return "avx2";
    }
    return "unknown";
}

bool isa_supported(Isa isa)
{
    switch (isa) {
    case Isa::Scalar:
        return true;
    case Isa::Avx2: {
        static const bool ok = detail::avx2_table() != nullptr && cpu_has_avx2();
        return ok;
    }
    }
    return false;
}

Isa active_isa()
{
    const int forced = g_forced.load();
    if (forced >= 0) return static_cast<Isa>(forced);
    static const Isa chosen = default_isa();
    return chosen;
}

void set_isa(Isa isa)
{
    if (!isa_supported(isa)) throw Error(std::string("ISA not supported here: ") + isa_name(isa));
    g_forced.store(static_cast<int>(isa));
}

void reset_isa() { g_forced.store(-1); }

const KernelTable* avx2_kernels() { return isa_supported(Isa::Avx2) ? detail::avx2_table() : nullptr; }

const KernelTable& kernels()
{
    if (active_isa() == Isa::Avx2) return *detail::avx2_table();
    return scalar_kernels();
}

} // namespace senseflow::simd
