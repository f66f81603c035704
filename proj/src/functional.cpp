#include "pgd/functional.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "pgd/error.hpp"
#include "pgd/kernels.hpp"
#include "pgd/oracle.hpp"
#include "pgd/rng.hpp"

namespace pgd {

namespace {

// |x|^(p-2), fast paths for the exponents used by the shipped problems
inline double abs_pow_pm2(double x, double p) {
    if (p == 2.0) return 1.0;
    if (p == 3.0) return std::fabs(x);
    if (p == 4.0) return x * x;
    return x == 0.0 ? 0.0 : std::pow(std::fabs(x), p - 2.0);
}

// short numeric form for labels ("3" rather than "3.000000")
std::string fmt_num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

Eigen::MatrixXd kron_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    Eigen::MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j)
            K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return K;
}

} // namespace

Functional::Functional(SpacePtr space, std::string label, double s, double alpha,
                       std::size_t cap)
    : space_(std::move(space)), label_(std::move(label)), s_(s), alpha_(alpha), cap_(cap) {
    if (!space_) throw ConfigError("functional needs a space");
}

double Functional::eval(const SeparatedTensor& v) const {
    return eval_dense(to_dense_values(v, cap_));
}

double Functional::grad_action(const SeparatedTensor& v, const SeparatedTensor& w) const {
    const auto vd = to_dense_values(v, cap_);
    const auto wd = to_dense_values(w, cap_);
    const auto g = grad_dense(vd);
    return kernels::ops().dot(g.data(), wd.data(), g.size());
}

double Functional::norm(const SeparatedTensor& v) const {
    return norm_dense(to_dense_values(v, cap_));
}

// --- L^p approximation ----------------------------------------------------------

LpApproxFunctional::LpApproxFunctional(SpacePtr space, std::vector<double> target, double p,
                                       std::size_t cap)
    : Functional(std::move(space), "lp_approx(p=" + fmt_num(p) + ")", p,
                 /*alpha*/ 0.0, cap),
      p_(p),
      target_(std::move(target)) {
    if (!(p_ >= 2.0)) throw ConfigError("lp_approx requires p >= 2");
    if (space_->dense_size() > cap_)
        throw SizeCapError("lp_approx target is dense; space exceeds the dense cap");
    if (target_.size() != space_->dense_size())
        throw SpaceMismatchError("lp_approx target length does not match the space");
    wdense_ = space_->dense_weights(cap_);
    set_alpha(scalar_ellipticity_scan(p_, 201));
}

double LpApproxFunctional::eval_dense(std::span<const double> v) const {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i] - target_[i];
    return kernels::ops().wpow_sum(r.data(), wdense_.data(), p_, r.size()) / p_;
}

std::vector<double> LpApproxFunctional::grad_dense(std::span<const double> v) const {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i] - target_[i];
    std::vector<double> g(v.size());
    kernels::ops().signed_pow(r.data(), p_, g.data(), r.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= wdense_[i];
    return g;
}

std::vector<double> LpApproxFunctional::hess_apply_dense(std::span<const double> v,
                                                         std::span<const double> x) const {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = wdense_[i] * (p_ - 1.0) * abs_pow_pm2(v[i] - target_[i], p_) * x[i];
    return out;
}

double LpApproxFunctional::norm_dense(std::span<const double> v) const {
    return std::pow(kernels::ops().wpow_sum(v.data(), wdense_.data(), p_, v.size()), 1.0 / p_);
}

std::shared_ptr<LpApproxFunctional> make_lp_approx(SpacePtr space, std::vector<double> target,
                                                   double p, std::size_t cap) {
    return std::make_shared<LpApproxFunctional>(std::move(space), std::move(target), p, cap);
}

// --- quadratic ------------------------------------------------------------------

QuadraticFunctional::QuadraticFunctional(SpacePtr space, QuadraticOperatorSpec op,
                                         std::size_t cap)
    : Functional(std::move(space), "quadratic", 2.0, 1.0, cap), op_(std::move(op)) {
    const int d = space_->order();
    if (op_.kron_terms.empty()) throw ConfigError("quadratic operator needs at least one term");
    for (const auto& term : op_.kron_terms) {
        if (static_cast<int>(term.size()) != d)
            throw ConfigError("each Kronecker term needs one matrix per axis");
        for (int j = 0; j < d; ++j) {
            const auto& M = term[static_cast<std::size_t>(j)];
            if (M.rows() != space_->dim(j) || M.cols() != space_->dim(j))
                throw ConfigError("Kronecker term matrix " + std::to_string(j) +
                                  " is not n_j x n_j");
        }
    }
    if (!(op_.rhs.space() == *space_))
        throw SpaceMismatchError("quadratic rhs lives on a different space");

    // symmetry of the weighted pairing, sampled
    Rng rng(0x51d2a9ull);
    for (int trial = 0; trial < 8; ++trial) {
        SeparatedTensor v(space_), w(space_);
        v.append(1.0, random_rank_one(*space_, rng));
        w.append(1.0, random_rank_one(*space_, rng));
        const double avw = bilinear(v, w);
        const double awv = bilinear(w, v);
        const double scale = std::max({1.0, std::fabs(avw), std::fabs(awv)});
        if (std::fabs(avw - awv) > 1e-10 * scale)
            throw ConfigError("quadratic operator is not symmetric in the weighted pairing");
    }

    if (space_->dense_size() <= cap_) {
        wdense_ = space_->dense_weights(cap_);
        rhs_dense_ = to_dense_values(op_.rhs, cap_);
        // positive definiteness of the assembled weighted operator
        const auto n = static_cast<Eigen::Index>(space_->dense_size());
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
        for (const auto& term : op_.kron_terms) {
            Eigen::MatrixXd acc = term[0];
            for (int j = 1; j < d; ++j) acc = kron_matrix(acc, term[static_cast<std::size_t>(j)]);
            K += acc;
        }
        const Eigen::VectorXd W = Eigen::Map<const Eigen::VectorXd>(wdense_.data(), n);
        Eigen::MatrixXd A = W.asDiagonal() * K;
        A = 0.5 * (A + A.transpose()).eval();
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() != Eigen::Success)
            throw ConfigError("quadratic operator is not positive definite");
    }
}

double QuadraticFunctional::off_mode_product(int r, const RankOneTensor& x,
                                             const RankOneTensor& y, int k) const {
    const auto& ker = kernels::ops();
    double prod = 1.0;
    for (int j = 0; j < space_->order(); ++j) {
        if (j == k) continue;
        const auto& M = term_matrix(r, j);
        const auto& xj = x.factors[static_cast<std::size_t>(j)];
        const auto& yj = y.factors[static_cast<std::size_t>(j)];
        Eigen::VectorXd mx = M * Eigen::Map<const Eigen::VectorXd>(
                                     xj.data(), static_cast<Eigen::Index>(xj.size()));
        prod *= ker.dot3(mx.data(), yj.data(), space_->weights(j).data(), yj.size());
        if (prod == 0.0) return 0.0;
    }
    return prod;
}

double QuadraticFunctional::bilinear(const SeparatedTensor& v, const SeparatedTensor& w) const {
    double total = 0.0;
    for (int r = 0; r < term_count(); ++r)
        for (int i = 0; i < v.rank(); ++i)
            for (int l = 0; l < w.rank(); ++l) {
                const double c = v.coeff(i) * w.coeff(l);
                if (c == 0.0) continue;
                total += c * off_mode_product(r, v.term(i), w.term(l), -1);
            }
    return total;
}

double QuadraticFunctional::linear(const SeparatedTensor& w) const {
    return weighted_inner(op_.rhs, w);
}

Eigen::MatrixXd QuadraticFunctional::stacked_mode_gram(const std::vector<RankOneTensor>& terms,
                                                       int k) const {
    const int m = static_cast<int>(terms.size());
    const int nk = space_->dim(k);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m * nk, m * nk);
    const auto& wk = space_->weights(k);
    for (int r = 0; r < term_count(); ++r) {
        // <A e_a, e_b>_mu_k = (diag(w_k) A)[b, a]; the block orientation below keeps the
        // assembly exact when the operator is symmetric only as a whole term list
        Eigen::MatrixXd WA = term_matrix(r, k);
        for (Eigen::Index a = 0; a < WA.rows(); ++a) WA.row(a) *= wk[static_cast<std::size_t>(a)];
        for (int i = 0; i < m; ++i)
            for (int l = 0; l < m; ++l) {
                const double pi = off_mode_product(r, terms[static_cast<std::size_t>(i)],
                                                   terms[static_cast<std::size_t>(l)], k);
                if (pi == 0.0) continue;
                H.block(i * nk, l * nk, nk, nk) += pi * WA.transpose();
            }
    }
    return 0.5 * (H + H.transpose());
}

Eigen::VectorXd QuadraticFunctional::stacked_mode_rhs(const std::vector<RankOneTensor>& terms,
                                                      int k) const {
    const int m = static_cast<int>(terms.size());
    const int nk = space_->dim(k);
    const auto& wk = space_->weights(k);
    const auto& ker = kernels::ops();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m * nk);
    const auto& f = op_.rhs;
    for (int i = 0; i < m; ++i)
        for (int t = 0; t < f.rank(); ++t) {
            double pi = f.coeff(t);
            if (pi == 0.0) continue;
            for (int j = 0; j < space_->order(); ++j) {
                if (j == k) continue;
                const auto& fj = f.term(t).factors[static_cast<std::size_t>(j)];
                const auto& wj =
                    terms[static_cast<std::size_t>(i)].factors[static_cast<std::size_t>(j)];
                pi *= ker.dot3(fj.data(), wj.data(), space_->weights(j).data(), fj.size());
                if (pi == 0.0) break;
            }
            if (pi == 0.0) continue;
            const auto& fk = f.term(t).factors[static_cast<std::size_t>(k)];
            for (int a = 0; a < nk; ++a)
                rhs(i * nk + a) += pi * wk[static_cast<std::size_t>(a)] *
                                   fk[static_cast<std::size_t>(a)];
        }
    return rhs;
}

Eigen::VectorXd QuadraticFunctional::stacked_mode_cross(const SeparatedTensor& base,
                                                        const std::vector<RankOneTensor>& terms,
                                                        int k) const {
    const int m = static_cast<int>(terms.size());
    const int nk = space_->dim(k);
    const auto& wk = space_->weights(k);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(m * nk);
    for (int r = 0; r < term_count(); ++r) {
        const auto& Ak = term_matrix(r, k);
        for (int i = 0; i < m; ++i)
            for (int l = 0; l < base.rank(); ++l) {
                double pi = base.coeff(l);
                if (pi == 0.0) continue;
                pi *= off_mode_product(r, base.term(l), terms[static_cast<std::size_t>(i)], k);
                if (pi == 0.0) continue;
                const auto& bk = base.term(l).factors[static_cast<std::size_t>(k)];
                Eigen::VectorXd Ab = Ak * Eigen::Map<const Eigen::VectorXd>(
                                              bk.data(), static_cast<Eigen::Index>(bk.size()));
                for (int a = 0; a < nk; ++a)
                    out(i * nk + a) += pi * wk[static_cast<std::size_t>(a)] * Ab(a);
            }
    }
    return out;
}

Eigen::MatrixXd QuadraticFunctional::coeff_gram(const std::vector<RankOneTensor>& terms) const {
    const int m = static_cast<int>(terms.size());
    Eigen::MatrixXd G(m, m);
    for (int i = 0; i < m; ++i)
        for (int l = i; l < m; ++l) {
            double s = 0.0;
            for (int r = 0; r < term_count(); ++r)
                s += off_mode_product(r, terms[static_cast<std::size_t>(i)],
                                      terms[static_cast<std::size_t>(l)], -1);
            G(i, l) = s;
            G(l, i) = s;
        }
    return G;
}

Eigen::VectorXd QuadraticFunctional::coeff_rhs(const std::vector<RankOneTensor>& terms) const {
    const int m = static_cast<int>(terms.size());
    Eigen::VectorXd rhs(m);
    for (int i = 0; i < m; ++i) {
        SeparatedTensor z(space_);
        z.append(1.0, terms[static_cast<std::size_t>(i)]);
        rhs(i) = linear(z);
    }
    return rhs;
}

std::vector<double> QuadraticFunctional::operator_apply_dense(std::span<const double> x) const {
    const auto& dims = space_->dims();
    std::vector<double> acc(x.size(), 0.0);
    for (int r = 0; r < term_count(); ++r) {
        std::vector<double> tmp(x.begin(), x.end());
        for (int j = 0; j < space_->order(); ++j)
            tmp = apply_mode(tmp, dims, j, term_matrix(r, j));
        kernels::ops().axpy(1.0, tmp.data(), acc.data(), acc.size());
    }
    return acc;
}

namespace {
[[noreturn]] void dense_unavailable() {
    throw SizeCapError("dense path unavailable: space exceeds the functional's dense cap");
}
} // namespace

double QuadraticFunctional::eval_dense(std::span<const double> v) const {
    if (wdense_.empty()) dense_unavailable();
    const auto Kv = operator_apply_dense(v);
    const auto& ker = kernels::ops();
    return 0.5 * ker.dot3(Kv.data(), v.data(), wdense_.data(), v.size()) -
           ker.dot3(rhs_dense_.data(), v.data(), wdense_.data(), v.size());
}

std::vector<double> QuadraticFunctional::grad_dense(std::span<const double> v) const {
    if (wdense_.empty()) dense_unavailable();
    auto g = operator_apply_dense(v);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = wdense_[i] * (g[i] - rhs_dense_[i]);
    return g;
}

std::vector<double> QuadraticFunctional::hess_apply_dense(std::span<const double> /*v*/,
                                                          std::span<const double> x) const {
    if (wdense_.empty()) dense_unavailable();
    auto y = operator_apply_dense(x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= wdense_[i];
    return y;
}

double QuadraticFunctional::norm_dense(std::span<const double> v) const {
    if (wdense_.empty()) dense_unavailable();
    const auto Kv = operator_apply_dense(v);
    return std::sqrt(
        std::max(0.0, kernels::ops().dot3(Kv.data(), v.data(), wdense_.data(), v.size())));
}

double QuadraticFunctional::eval(const SeparatedTensor& v) const {
    return 0.5 * bilinear(v, v) - linear(v);
}

double QuadraticFunctional::grad_action(const SeparatedTensor& v,
                                        const SeparatedTensor& w) const {
    return bilinear(v, w) - linear(w);
}

double QuadraticFunctional::norm(const SeparatedTensor& v) const {
    return std::sqrt(std::max(0.0, bilinear(v, v)));
}

std::shared_ptr<QuadraticFunctional> make_quadratic(SpacePtr space, QuadraticOperatorSpec op,
                                                    std::size_t cap) {
    return std::make_shared<QuadraticFunctional>(std::move(space), std::move(op), cap);
}

// --- penalized quadratic ----------------------------------------------------------

PenalizedFunctional::PenalizedFunctional(std::shared_ptr<const QuadraticFunctional> base,
                                         PenaltySpec penalty)
    : Functional(base ? base->space_ptr() : nullptr,
                 "penalized(eps=" + fmt_num(penalty.epsilon) + ")", 2.0,
                 base ? base->ellipticity_constant() : 1.0, base ? base->dense_cap() : 0),
      base_(std::move(base)),
      penalty_(std::move(penalty)) {
    if (!base_) throw ConfigError("penalized functional needs a quadratic base");
    if (!(penalty_.epsilon > 0.0)) throw ConfigError("penalty epsilon must be > 0");
    if (space_->dense_size() > cap_)
        throw SizeCapError("penalty term is dense; space exceeds the dense cap");
    if (penalty_.obstacle.size() != space_->dense_size())
        throw SpaceMismatchError("obstacle length does not match the space");
    wdense_ = space_->dense_weights(cap_);
}

double PenalizedFunctional::penalty_value_dense(std::span<const double> v) const {
    return 0.5 * kernels::ops().neg_part_wsq(v.data(), penalty_.obstacle.data(), wdense_.data(),
                                             v.size());
}

double PenalizedFunctional::violation_norm_dense(std::span<const double> v) const {
    return std::sqrt(kernels::ops().neg_part_wsq(v.data(), penalty_.obstacle.data(),
                                                 wdense_.data(), v.size()));
}

double PenalizedFunctional::eval_dense(std::span<const double> v) const {
    return base_->eval_dense(v) + penalty_value_dense(v) / penalty_.epsilon;
}

std::vector<double> PenalizedFunctional::grad_dense(std::span<const double> v) const {
    auto g = base_->grad_dense(v);
    const double inv_eps = 1.0 / penalty_.epsilon;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double gap = penalty_.obstacle[i] - v[i];
        if (gap > 0.0) g[i] -= inv_eps * wdense_[i] * gap;
    }
    return g;
}

std::vector<double> PenalizedFunctional::hess_apply_dense(std::span<const double> v,
                                                          std::span<const double> x) const {
    auto y = base_->hess_apply_dense(v, x);
    const double inv_eps = 1.0 / penalty_.epsilon;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (v[i] < penalty_.obstacle[i]) y[i] += inv_eps * wdense_[i] * x[i];
    return y;
}

double PenalizedFunctional::norm_dense(std::span<const double> v) const {
    return base_->norm_dense(v);
}

double PenalizedFunctional::norm(const SeparatedTensor& v) const { return base_->norm(v); }

std::shared_ptr<PenalizedFunctional> make_penalized(
    std::shared_ptr<const QuadraticFunctional> base, PenaltySpec penalty) {
    return std::make_shared<PenalizedFunctional>(std::move(base), std::move(penalty));
}

// --- p-Laplacian ------------------------------------------------------------------

PLaplacianFunctional::PLaplacianFunctional(SpacePtr space, PLaplacianSpec spec, std::size_t cap)
    : Functional(std::move(space), "p_laplacian(p=" + fmt_num(spec.p) + ")", spec.p,
                 0.0, cap),
      spec_(std::move(spec)),
      p_(spec_.p) {
    const int d = space_->order();
    if (!(p_ > 2.0)) throw ConfigError("p_laplacian requires p > 2");
    if (static_cast<int>(spec_.diff.size()) != d)
        throw ConfigError("need one difference matrix per axis");
    if (space_->dense_size() > cap_)
        throw SizeCapError("p_laplacian evaluation is dense; space exceeds the dense cap");
    if (spec_.source.size() != space_->dense_size())
        throw SpaceMismatchError("source length does not match the space");
    if (spec_.diff_weights.empty())
        spec_.diff_weights.resize(static_cast<std::size_t>(d));
    if (static_cast<int>(spec_.diff_weights.size()) != d)
        throw ConfigError("need one derivative-weight vector per axis (or none)");

    wdense_ = space_->dense_weights(cap_);
    deriv_dims_.resize(static_cast<std::size_t>(d));
    deriv_wdense_.resize(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        const auto& D = spec_.diff[uk];
        if (D.cols() != space_->dim(k))
            throw ConfigError("difference matrix " + std::to_string(k) + " width mismatch");
        if (D.rows() < 1) throw ConfigError("difference matrix has no rows");
        auto& nu = spec_.diff_weights[uk];
        if (nu.empty()) nu.assign(static_cast<std::size_t>(D.rows()), 1.0);
        if (static_cast<Eigen::Index>(nu.size()) != D.rows())
            throw ConfigError("derivative-weight vector " + std::to_string(k) +
                              " length mismatch");
        for (double w : nu)
            if (!(w > 0.0)) throw ConfigError("derivative weights must be strictly positive");

        deriv_dims_[uk] = space_->dims();
        deriv_dims_[uk][uk] = static_cast<int>(D.rows());
        std::vector<const std::vector<double>*> parts;
        for (int j = 0; j < d; ++j)
            parts.push_back(j == k ? &nu : &space_->weights(j));
        deriv_wdense_[uk] = kron_all(parts);
    }

    // p = 2 gradient form: positive definiteness (no nonzero function is annihilated)
    // and the smallest eigenvalue relative to the mu inner product, which feeds the
    // declared ellipticity constant alpha_p * min(1, lambda_min). That constant is a
    // documented heuristic lower bound; checks downstream use observed ratios as well.
    const auto n = static_cast<Eigen::Index>(space_->dense_size());
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
    {
        std::vector<double> e(static_cast<std::size_t>(n), 0.0);
        for (Eigen::Index c = 0; c < n; ++c) {
            e[static_cast<std::size_t>(c)] = 1.0;
            std::vector<double> col(static_cast<std::size_t>(n), 0.0);
            for (int k = 0; k < d; ++k) {
                const auto uk = static_cast<std::size_t>(k);
                auto dv = apply_mode(e, space_->dims(), k, spec_.diff[uk]);
                for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= deriv_wdense_[uk][i];
                const auto back =
                    apply_mode(dv, deriv_dims_[uk], k, spec_.diff[uk].transpose());
                kernels::ops().axpy(1.0, back.data(), col.data(), col.size());
            }
            B.col(c) = Eigen::Map<const Eigen::VectorXd>(col.data(), n);
            e[static_cast<std::size_t>(c)] = 0.0;
        }
    }
    B = 0.5 * (B + B.transpose()).eval();
    Eigen::LLT<Eigen::MatrixXd> llt(B);
    if (llt.info() != Eigen::Success)
        throw ConfigError("difference operators annihilate a nonzero grid function");

    const Eigen::VectorXd W = Eigen::Map<const Eigen::VectorXd>(wdense_.data(), n);
    Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
    double lambda = 0.0;
    for (int it = 0; it < 500; ++it) {
        Eigen::VectorXd y = llt.solve((W.array() * x.array()).matrix());
        y /= std::sqrt((y.array() * y.array() * W.array()).sum());
        const double next = y.dot(B * y) / (y.array() * y.array() * W.array()).sum();
        x = std::move(y);
        if (it > 3 && std::fabs(next - lambda) <= 1e-12 * std::fabs(next)) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    set_alpha(scalar_ellipticity_scan(p_, 201) * std::min(1.0, lambda));
}

double PLaplacianFunctional::eval_dense(std::span<const double> v) const {
    const auto& ker = kernels::ops();
    double s = 0.0;
    for (int k = 0; k < space_->order(); ++k) {
        const auto uk = static_cast<std::size_t>(k);
        const auto dv = apply_mode(v, space_->dims(), k, spec_.diff[uk]);
        s += ker.wpow_sum(dv.data(), deriv_wdense_[uk].data(), p_, dv.size());
    }
    return s / p_ - ker.dot3(spec_.source.data(), v.data(), wdense_.data(), v.size());
}

std::vector<double> PLaplacianFunctional::grad_dense(std::span<const double> v) const {
    const auto& ker = kernels::ops();
    std::vector<double> g(v.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = -wdense_[i] * spec_.source[i];
    for (int k = 0; k < space_->order(); ++k) {
        const auto uk = static_cast<std::size_t>(k);
        auto dv = apply_mode(v, space_->dims(), k, spec_.diff[uk]);
        std::vector<double> phi(dv.size());
        ker.signed_pow(dv.data(), p_, phi.data(), dv.size());
        for (std::size_t i = 0; i < phi.size(); ++i) phi[i] *= deriv_wdense_[uk][i];
        const auto back = apply_mode(phi, deriv_dims_[uk], k, spec_.diff[uk].transpose());
        ker.axpy(1.0, back.data(), g.data(), g.size());
    }
    return g;
}

std::vector<double> PLaplacianFunctional::hess_apply_dense(std::span<const double> v,
                                                           std::span<const double> x) const {
    const auto& ker = kernels::ops();
    std::vector<double> out(v.size(), 0.0);
    for (int k = 0; k < space_->order(); ++k) {
        const auto uk = static_cast<std::size_t>(k);
        const auto dv = apply_mode(v, space_->dims(), k, spec_.diff[uk]);
        auto dx = apply_mode(x, space_->dims(), k, spec_.diff[uk]);
        for (std::size_t i = 0; i < dx.size(); ++i)
            dx[i] *= deriv_wdense_[uk][i] * (p_ - 1.0) * abs_pow_pm2(dv[i], p_);
        const auto back = apply_mode(dx, deriv_dims_[uk], k, spec_.diff[uk].transpose());
        ker.axpy(1.0, back.data(), out.data(), out.size());
    }
    return out;
}

double PLaplacianFunctional::norm_dense(std::span<const double> v) const {
    const auto& ker = kernels::ops();
    double s = 0.0;
    for (int k = 0; k < space_->order(); ++k) {
        const auto uk = static_cast<std::size_t>(k);
        const auto dv = apply_mode(v, space_->dims(), k, spec_.diff[uk]);
        s += ker.wpow_sum(dv.data(), deriv_wdense_[uk].data(), p_, dv.size());
    }
    return std::pow(s, 1.0 / p_);
}

std::shared_ptr<PLaplacianFunctional> make_p_laplacian(SpacePtr space, PLaplacianSpec spec,
                                                       std::size_t cap) {
    return std::make_shared<PLaplacianFunctional>(std::move(space), std::move(spec), cap);
}

Eigen::MatrixXd dirichlet_forward_difference(int n, double h) {
    if (n < 1) throw ConfigError("difference matrix needs n >= 1");
    if (!(h > 0.0)) throw ConfigError("grid spacing must be positive");
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n + 1, n);
    const double inv_h = 1.0 / h;
    D(0, 0) = inv_h;
    for (int i = 1; i < n; ++i) {
        D(i, i - 1) = -inv_h;
        D(i, i) = inv_h;
    }
    D(n, n - 1) = -inv_h;
    return D;
}

// --- ellipticity probe --------------------------------------------------------------

EllipticityCheckResult ellipticity_check(const Functional& J, int sample_count,
                                         std::uint64_t seed) {
    Rng rng(seed);
    const double s = J.ellipticity_exponent();
    double min_ratio = std::numeric_limits<double>::infinity();
    int used = 0;
    for (int trial = 0; trial < sample_count; ++trial) {
        SeparatedTensor v(J.space_ptr()), w(J.space_ptr()), diff(J.space_ptr());
        for (int t = 0; t < 2; ++t) {
            auto tv = random_rank_one(J.space(), rng);
            auto tw = random_rank_one(J.space(), rng);
            v.append(1.0, tv);
            w.append(1.0, tw);
            diff.append(1.0, std::move(tv));
            diff.append(-1.0, std::move(tw));
        }
        const double den = std::pow(J.norm(diff), s);
        if (!(den > 1e-300)) continue;
        const double num = J.grad_action(v, diff) - J.grad_action(w, diff);
        min_ratio = std::min(min_ratio, num / den);
        ++used;
    }
    return {min_ratio, min_ratio >= J.ellipticity_constant() * (1.0 - 1e-8), used};
}

} // namespace pgd
