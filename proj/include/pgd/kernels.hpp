#pragma once

#include <cstddef>

namespace pgd::kernels {

// Flat-array kernels behind the tensor and functional arithmetic. Each entry has a
// scalar reference implementation and may have SIMD variants; the active table is
// chosen once at startup from CPU features (override with PGD_KERNELS=scalar|avx2).
//
// Reductions may reassociate, so SIMD results can differ from scalar ones by
// rounding; the equivalence tests bound that difference's relative size.
struct Ops {
    // sum a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // sum a[i] * b[i] * w[i]
    double (*dot3)(const double* a, const double* b, const double* w, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // x[i] *= alpha
    void (*scale)(double alpha, double* x, std::size_t n);
    // sum w[i] * |v[i]|^p, p >= 1 (fast paths for p = 1, 2, 3, 4)
    double (*wpow_sum)(const double* v, const double* w, double p, std::size_t n);
    // out[i] = |v[i]|^(p-2) * v[i], p >= 2
    void (*signed_pow)(const double* v, double p, double* out, std::size_t n);
    // sum w[i] * max(0, g[i] - v[i])^2
    double (*neg_part_wsq)(const double* v, const double* g, const double* w, std::size_t n);
    // sum w[i] * max(0, g[i] - v[i]) * x[i]
    double (*neg_part_wdot)(const double* v, const double* g, const double* w, const double* x,
                            std::size_t n);
};

const Ops& scalar_ops();

#if defined(__x86_64__) || defined(_M_X64)
#define PGD_HAVE_AVX2_KERNELS 1
const Ops& avx2_ops();
#endif

// Runtime-selected table. Safe to call from static initializers.
const Ops& ops();

// Name of the active variant: "scalar" or "avx2".
const char* active_isa();

} // namespace pgd::kernels
