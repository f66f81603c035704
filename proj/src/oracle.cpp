#include "pgd/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pgd/error.hpp"
#include "pgd/kernels.hpp"
#include "pgd/rng.hpp"

namespace pgd {

namespace {

double euclid_norm(std::span<const double> v) {
    return std::sqrt(kernels::ops().dot(v.data(), v.data(), v.size()));
}

Eigen::MatrixXd assemble_hessian(const Functional& J, std::span<const double> v) {
    const auto n = static_cast<Eigen::Index>(v.size());
    Eigen::MatrixXd H(n, n);
    std::vector<double> e(v.size(), 0.0);
    for (Eigen::Index c = 0; c < n; ++c) {
        e[static_cast<std::size_t>(c)] = 1.0;
        const auto col = J.hess_apply_dense(v, e);
        H.col(c) = Eigen::Map<const Eigen::VectorXd>(col.data(), n);
        e[static_cast<std::size_t>(c)] = 0.0;
    }
    return 0.5 * (H + H.transpose());
}

DenseMinimizeResult solve_quadratic_exact(const Functional& J) {
    const std::size_t n = J.space().dense_size();
    std::vector<double> zero(n, 0.0);
    const auto g0 = J.grad_dense(zero);
    Eigen::MatrixXd H = assemble_hessian(J, zero);
    Eigen::VectorXd b = -Eigen::Map<const Eigen::VectorXd>(g0.data(),
                                                           static_cast<Eigen::Index>(n));
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    Eigen::VectorXd x;
    if (llt.info() == Eigen::Success) {
        x = llt.solve(b);
    } else {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        if (ldlt.info() != Eigen::Success)
            throw NumericalError("dense_minimize: quadratic system could not be factored");
        x = ldlt.solve(b);
    }
    DenseMinimizeResult out;
    out.minimizer.assign(x.data(), x.data() + n);
    out.value = J.eval_dense(out.minimizer);
    out.grad_norm = euclid_norm(J.grad_dense(out.minimizer));
    out.iterations = 1;
    out.converged = true;
    return out;
}

} // namespace

DenseMinimizeResult dense_minimize(const Functional& J, const OracleConfig& cfg) {
    if (J.is_quadratic()) return solve_quadratic_exact(J);

    const std::size_t n = J.space().dense_size();
    std::vector<double> v(n, 0.0);
    double Jv = J.eval_dense(v);
    DenseMinimizeResult out;

    const auto& ker = kernels::ops();
    double gd_step = 1.0;
    for (int it = 0; it < cfg.max_iters; ++it) {
        const auto g = J.grad_dense(v);
        const double gnorm = euclid_norm(g);
        if (gnorm <= cfg.grad_tol * (1.0 + std::fabs(Jv))) {
            out.minimizer = v;
            out.value = Jv;
            out.grad_norm = gnorm;
            out.iterations = it;
            out.converged = true;
            return out;
        }

        std::vector<double> dir(n);
        bool have_newton = false;
        if (cfg.method == OracleConfig::Method::newton) {
            Eigen::MatrixXd H = assemble_hessian(J, v);
            const double ridge = 1e-14 * std::max(1.0, H.trace() / static_cast<double>(n));
            H.diagonal().array() += ridge;
            Eigen::LLT<Eigen::MatrixXd> llt(H);
            if (llt.info() == Eigen::Success) {
                const Eigen::VectorXd d = llt.solve(
                    -Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(n)));
                std::copy(d.data(), d.data() + n, dir.begin());
                have_newton = true;
            }
        }
        if (!have_newton)
            for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];

        const double slope = ker.dot(g.data(), dir.data(), n);
        if (!(slope < 0.0)) { // not a descent direction; fall back to steepest descent
            for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
        }
        const double slope2 = ker.dot(g.data(), dir.data(), n);

        double t = have_newton ? 1.0 : gd_step;
        std::vector<double> trial(n);
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            for (std::size_t i = 0; i < n; ++i) trial[i] = v[i] + t * dir[i];
            const double Jt = J.eval_dense(trial);
            if (Jt <= Jv + 1e-4 * t * slope2) {
                v.swap(trial);
                Jv = Jt;
                accepted = true;
                if (!have_newton) gd_step = std::min(t * 2.0, 1e6);
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // line search exhausted; report where we are
            out.minimizer = v;
            out.value = Jv;
            out.grad_norm = gnorm;
            out.iterations = it;
            out.converged = false;
            return out;
        }
    }

    out.minimizer = v;
    out.value = Jv;
    out.grad_norm = euclid_norm(J.grad_dense(v));
    out.iterations = cfg.max_iters;
    out.converged = false;
    return out;
}

TruncatedSvdResult truncated_svd(const DenseTensor& matrix, int m) {
    if (!matrix.space || matrix.space->order() != 2)
        throw ConfigError("truncated_svd handles order-2 tensors only");
    const int n1 = matrix.space->dim(0);
    const int n2 = matrix.space->dim(1);
    if (matrix.values.size() != static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2))
        throw SpaceMismatchError("truncated_svd: value count does not match dims");
    if (m < 0) throw ConfigError("truncated_svd: m must be >= 0");

    using Mat =
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> M(matrix.values.data(), n1, n2);

    const int r_full = std::min(n1, n2);
    TruncatedSvdResult out;
    out.m = std::min(m, r_full);

    // eigendecomposition of the smaller Gram matrix
    Eigen::MatrixXd G;
    const bool left_small = n1 <= n2;
    if (left_small)
        G = M * M.transpose();
    else
        G = M.transpose() * M;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (G + G.transpose()));
    if (es.info() != Eigen::Success)
        throw NumericalError("truncated_svd: eigendecomposition failed");

    const auto& lam = es.eigenvalues(); // ascending
    const int r = static_cast<int>(lam.size());
    out.singular_values.resize(static_cast<std::size_t>(r));
    Eigen::MatrixXd small_vecs(r, r);
    for (int i = 0; i < r; ++i) {
        out.singular_values[static_cast<std::size_t>(i)] =
            std::sqrt(std::max(0.0, lam(r - 1 - i)));
        small_vecs.col(i) = es.eigenvectors().col(r - 1 - i);
    }

    out.U.resize(n1, r_full);
    out.V.resize(n2, r_full);
    for (int i = 0; i < r_full; ++i) {
        const double sigma = out.singular_values[static_cast<std::size_t>(i)];
        if (left_small) {
            out.U.col(i) = small_vecs.col(i);
            out.V.col(i) = sigma > 0.0 ? Eigen::VectorXd(M.transpose() * small_vecs.col(i) / sigma)
                                       : Eigen::VectorXd(Eigen::VectorXd::Zero(n2));
        } else {
            out.V.col(i) = small_vecs.col(i);
            out.U.col(i) = sigma > 0.0 ? Eigen::VectorXd(M * small_vecs.col(i) / sigma)
                                       : Eigen::VectorXd(Eigen::VectorXd::Zero(n1));
        }
    }

    Mat approx = Mat::Zero(n1, n2);
    for (int i = 0; i < out.m; ++i) {
        const double sigma = out.singular_values[static_cast<std::size_t>(i)];
        if (sigma > 0.0) approx += sigma * out.U.col(i) * out.V.col(i).transpose();
    }
    out.approx.assign(approx.data(), approx.data() + approx.size());
    return out;
}

GradCheckResult fd_grad_check(const Functional& J, const SeparatedTensor& v, int n_directions,
                              std::uint64_t seed) {
    if (n_directions < 1) throw ConfigError("fd_grad_check needs at least one direction");
    Rng rng(seed);
    const auto vd = to_dense_values(v, J.dense_cap());
    const double h =
        std::cbrt(std::numeric_limits<double>::epsilon()) * (1.0 + euclid_norm(vd));

    GradCheckResult out;
    out.h = h;
    out.per_direction.reserve(static_cast<std::size_t>(n_directions));
    for (int k = 0; k < n_directions; ++k) {
        auto w = random_rank_one(J.space(), rng);
        std::vector<double> wd(vd.size(), 0.0);
        accumulate_rank_one(wd, 1.0, w.factors);
        const double wnorm = euclid_norm(wd);
        if (!(wnorm > 0.0)) continue;
        const double c = 1.0 / wnorm;

        SeparatedTensor dir(v.space_ptr());
        dir.append(c, w);
        SeparatedTensor plus(v.space_ptr()), minus(v.space_ptr());
        for (int i = 0; i < v.rank(); ++i) {
            plus.append(v.coeff(i), v.term(i));
            minus.append(v.coeff(i), v.term(i));
        }
        plus.append(h * c, w);
        minus.append(-h * c, w);

        const double fd = (J.eval(plus) - J.eval(minus)) / (2.0 * h);
        const double ga = J.grad_action(v, dir);
        const double rel = std::fabs(fd - ga) / (1.0 + std::fabs(ga));
        out.per_direction.push_back(rel);
        out.max_rel_err = std::max(out.max_rel_err, rel);
    }
    return out;
}

namespace {
inline double abs_pow(double x, double p) {
    if (p == 2.0) return x * x;
    if (p == 3.0) return x * x * std::fabs(x);
    if (p == 4.0) {
        const double q = x * x;
        return q * q;
    }
    return std::pow(std::fabs(x), p);
}
inline double signed_pow1(double x, double p) {
    if (p == 2.0) return x;
    if (p == 3.0) return std::fabs(x) * x;
    if (p == 4.0) return x * x * x;
    return x == 0.0 ? 0.0 : std::pow(std::fabs(x), p - 2.0) * x;
}
} // namespace

double monotonicity_ratio(double s, double t, double p) {
    const double d = s - t;
    return (signed_pow1(s, p) - signed_pow1(t, p)) * d / abs_pow(d, p);
}

double scalar_ellipticity_scan(double p, int grid_points_per_axis) {
    if (!(p >= 2.0)) throw ConfigError("scalar_ellipticity_scan requires p >= 2");
    if (grid_points_per_axis < 2) throw ConfigError("scan needs at least 2 grid points");
    const int g = grid_points_per_axis;
    std::vector<double> x(static_cast<std::size_t>(g));
    for (int i = 0; i < g; ++i)
        x[static_cast<std::size_t>(i)] = -1.0 + 2.0 * static_cast<double>(i) /
                                                    static_cast<double>(g - 1);
    double min_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < g; ++i)
        for (int l = i + 1; l < g; ++l) {
            const double s = x[static_cast<std::size_t>(i)];
            const double t = x[static_cast<std::size_t>(l)];
            if (std::fabs(s - t) < 1e-9) continue;
            min_ratio = std::min(min_ratio, monotonicity_ratio(s, t, p));
        }
    return min_ratio;
}

} // namespace pgd
