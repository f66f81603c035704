#include "pgd/kernels.hpp"

#include <cmath>

namespace pgd::kernels {
namespace {

double dot_ref(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double dot3_ref(const double* a, const double* b, const double* w, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i] * w[i];
    return s;
}

void axpy_ref(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_ref(double alpha, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double wpow_sum_ref(const double* v, const double* w, double p, std::size_t n) {
    double s = 0.0;
    if (p == 1.0) {
        for (std::size_t i = 0; i < n; ++i) s += w[i] * std::fabs(v[i]);
    } else if (p == 2.0) {
        for (std::size_t i = 0; i < n; ++i) s += w[i] * v[i] * v[i];
    } else if (p == 3.0) {
        for (std::size_t i = 0; i < n; ++i) s += w[i] * v[i] * v[i] * std::fabs(v[i]);
    } else if (p == 4.0) {
        for (std::size_t i = 0; i < n; ++i) {
            const double q = v[i] * v[i];
            s += w[i] * q * q;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) s += w[i] * std::pow(std::fabs(v[i]), p);
    }
    return s;
}

void signed_pow_ref(const double* v, double p, double* out, std::size_t n) {
    if (p == 2.0) {
        for (std::size_t i = 0; i < n; ++i) out[i] = v[i];
    } else if (p == 3.0) {
        for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(v[i]) * v[i];
    } else if (p == 4.0) {
        for (std::size_t i = 0; i < n; ++i) out[i] = v[i] * v[i] * v[i];
    } else {
        for (std::size_t i = 0; i < n; ++i)
            out[i] = v[i] == 0.0 ? 0.0 : std::pow(std::fabs(v[i]), p - 2.0) * v[i];
    }
}

double neg_part_wsq_ref(const double* v, const double* g, const double* w, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = g[i] - v[i];
        if (d > 0.0) s += w[i] * d * d;
    }
    return s;
}

double neg_part_wdot_ref(const double* v, const double* g, const double* w, const double* x,
                         std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = g[i] - v[i];
        if (d > 0.0) s += w[i] * d * x[i];
    }
    return s;
}

} // namespace

const Ops& scalar_ops() {
    static const Ops table = {
        dot_ref,      dot3_ref,       axpy_ref,         scale_ref,
        wpow_sum_ref, signed_pow_ref, neg_part_wsq_ref, neg_part_wdot_ref,
    };
    return table;
}

} // namespace pgd::kernels
