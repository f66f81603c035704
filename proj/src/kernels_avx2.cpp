// AVX2+FMA kernel variants. This file is compiled with -mavx2 -mfma; nothing here
// runs unless the dispatcher saw those CPU features at startup.

#include "pgd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <cmath>
#include <immintrin.h>

namespace pgd::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_pd(lo, _mm_unpackhi_pd(lo, lo)));
}

inline __m256d abs_pd(__m256d v) {
    const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    return _mm256_and_pd(v, mask);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double dot3_avx2(const double* a, const double* b, const double* w, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d ab = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc = _mm256_fmadd_pd(ab, _mm256_loadu_pd(w + i), acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[i] * w[i];
    return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    // mul + add, not fmadd: elementwise kernels stay bitwise equal to the scalar
    // reference (FMA would round once where the scalar path rounds twice)
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d r = _mm256_add_pd(_mm256_mul_pd(va, _mm256_loadu_pd(x + i)),
                                        _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, r);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(double alpha, double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

double wpow_sum_avx2(const double* v, const double* w, double p, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    if (p == 1.0) {
        for (; i + 4 <= n; i += 4)
            acc = _mm256_fmadd_pd(abs_pd(_mm256_loadu_pd(v + i)), _mm256_loadu_pd(w + i), acc);
        double s = hsum(acc);
        for (; i < n; ++i) s += w[i] * std::fabs(v[i]);
        return s;
    }
    if (p == 2.0) {
        for (; i + 4 <= n; i += 4) {
            const __m256d x = _mm256_loadu_pd(v + i);
            acc = _mm256_fmadd_pd(_mm256_mul_pd(x, x), _mm256_loadu_pd(w + i), acc);
        }
        double s = hsum(acc);
        for (; i < n; ++i) s += w[i] * v[i] * v[i];
        return s;
    }
    if (p == 3.0) {
        for (; i + 4 <= n; i += 4) {
            const __m256d x = _mm256_loadu_pd(v + i);
            const __m256d x3 = _mm256_mul_pd(_mm256_mul_pd(x, x), abs_pd(x));
            acc = _mm256_fmadd_pd(x3, _mm256_loadu_pd(w + i), acc);
        }
        double s = hsum(acc);
        for (; i < n; ++i) s += w[i] * v[i] * v[i] * std::fabs(v[i]);
        return s;
    }
    if (p == 4.0) {
        for (; i + 4 <= n; i += 4) {
            const __m256d x = _mm256_loadu_pd(v + i);
            const __m256d q = _mm256_mul_pd(x, x);
            acc = _mm256_fmadd_pd(_mm256_mul_pd(q, q), _mm256_loadu_pd(w + i), acc);
        }
        double s = hsum(acc);
        for (; i < n; ++i) {
            const double q = v[i] * v[i];
            s += w[i] * q * q;
        }
        return s;
    }
    // general exponent: no vector pow here, plain loop
    double s = 0.0;
    for (i = 0; i < n; ++i) s += w[i] * std::pow(std::fabs(v[i]), p);
    return s;
}

void signed_pow_avx2(const double* v, double p, double* out, std::size_t n) {
    std::size_t i = 0;
    if (p == 2.0) {
        for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_loadu_pd(v + i));
        for (; i < n; ++i) out[i] = v[i];
        return;
    }
    if (p == 3.0) {
        for (; i + 4 <= n; i += 4) {
            const __m256d x = _mm256_loadu_pd(v + i);
            _mm256_storeu_pd(out + i, _mm256_mul_pd(abs_pd(x), x));
        }
        for (; i < n; ++i) out[i] = std::fabs(v[i]) * v[i];
        return;
    }
    if (p == 4.0) {
        for (; i + 4 <= n; i += 4) {
            const __m256d x = _mm256_loadu_pd(v + i);
            _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_mul_pd(x, x), x));
        }
        for (; i < n; ++i) out[i] = v[i] * v[i] * v[i];
        return;
    }
    for (i = 0; i < n; ++i)
        out[i] = v[i] == 0.0 ? 0.0 : std::pow(std::fabs(v[i]), p - 2.0) * v[i];
}

double neg_part_wsq_avx2(const double* v, const double* g, const double* w, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    __m256d acc = zero;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d =
            _mm256_max_pd(zero, _mm256_sub_pd(_mm256_loadu_pd(g + i), _mm256_loadu_pd(v + i)));
        acc = _mm256_fmadd_pd(_mm256_mul_pd(d, d), _mm256_loadu_pd(w + i), acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        const double d = g[i] - v[i];
        if (d > 0.0) s += w[i] * d * d;
    }
    return s;
}

double neg_part_wdot_avx2(const double* v, const double* g, const double* w, const double* x,
                          std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    __m256d acc = zero;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d =
            _mm256_max_pd(zero, _mm256_sub_pd(_mm256_loadu_pd(g + i), _mm256_loadu_pd(v + i)));
        const __m256d dw = _mm256_mul_pd(d, _mm256_loadu_pd(w + i));
        acc = _mm256_fmadd_pd(dw, _mm256_loadu_pd(x + i), acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        const double d = g[i] - v[i];
        if (d > 0.0) s += w[i] * d * x[i];
    }
    return s;
}

} // namespace

const Ops& avx2_ops() {
    static const Ops table = {
        dot_avx2,      dot3_avx2,       axpy_avx2,         scale_avx2,
        wpow_sum_avx2, signed_pow_avx2, neg_part_wsq_avx2, neg_part_wdot_avx2,
    };
    return table;
}

} // namespace pgd::kernels

#endif // x86_64
