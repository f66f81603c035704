#include "pgd/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace pgd::kernels {
namespace {

struct Selection {
    const Ops* table;
    const char* name;
};

Selection select() {
    const char* force = std::getenv("PGD_KERNELS");
    if (force && std::strcmp(force, "scalar") == 0) return {&scalar_ops(), "scalar"};
#ifdef PGD_HAVE_AVX2_KERNELS
    const bool want_avx2 = !force || std::strcmp(force, "avx2") == 0;
    if (want_avx2 && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return {&avx2_ops(), "avx2"};
#endif
    return {&scalar_ops(), "scalar"};
}

const Selection& selection() {
    static const Selection s = select();
    return s;
}

} // namespace

const Ops& ops() { return *selection().table; }

const char* active_isa() { return selection().name; }

} // namespace pgd::kernels
