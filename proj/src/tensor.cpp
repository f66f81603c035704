#include "pgd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pgd/error.hpp"
#include "pgd/kernels.hpp"
#include "pgd/rng.hpp"

namespace pgd {

namespace {

std::size_t checked_product(const std::vector<int>& dims) {
    std::size_t n = 1;
    for (int d : dims) {
        const auto ud = static_cast<std::size_t>(d);
        if (n > std::numeric_limits<std::size_t>::max() / ud)
            return std::numeric_limits<std::size_t>::max();
        n *= ud;
    }
    return n;
}

void require_under_cap(std::size_t size, std::size_t cap, const char* what) {
    if (size > cap)
        throw SizeCapError(std::string(what) + ": dense size " + std::to_string(size) +
                           " exceeds cap " + std::to_string(cap));
}

void check_term_shape(const TensorSpace& space, const RankOneTensor& t) {
    if (static_cast<int>(t.factors.size()) != space.order())
        throw SpaceMismatchError("rank-one term has " + std::to_string(t.factors.size()) +
                                 " factors, space order is " + std::to_string(space.order()));
    for (int j = 0; j < space.order(); ++j)
        if (static_cast<int>(t.factors[static_cast<std::size_t>(j)].size()) != space.dim(j))
            throw SpaceMismatchError("factor " + std::to_string(j) + " has length " +
                                     std::to_string(t.factors[static_cast<std::size_t>(j)].size()) +
                                     ", expected " + std::to_string(space.dim(j)));
}

void check_same_space(const SeparatedTensor& a, const SeparatedTensor& b) {
    if (a.space_ptr() != b.space_ptr() && !(a.space() == b.space()))
        throw SpaceMismatchError("operands live on different tensor spaces");
}

} // namespace

TensorSpace::TensorSpace(std::vector<int> dims, std::vector<std::vector<double>> weights)
    : dims_(std::move(dims)), weights_(std::move(weights)) {
    if (dims_.size() < 2) throw ConfigError("tensor space needs order d >= 2");
    if (weights_.size() != dims_.size())
        throw ConfigError("need one weight vector per axis");
    for (std::size_t j = 0; j < dims_.size(); ++j) {
        if (dims_[j] < 1) throw ConfigError("axis " + std::to_string(j) + " has dim < 1");
        if (static_cast<int>(weights_[j].size()) != dims_[j])
            throw ConfigError("weight vector " + std::to_string(j) + " length mismatch");
        for (double w : weights_[j])
            if (!(w > 0.0)) throw ConfigError("weights must be strictly positive");
    }
    dense_size_ = checked_product(dims_);
}

TensorSpace TensorSpace::uniform(std::vector<int> dims) {
    std::vector<std::vector<double>> w;
    w.reserve(dims.size());
    for (int n : dims) {
        if (n < 1) throw ConfigError("axis dim < 1");
        w.emplace_back(static_cast<std::size_t>(n), 1.0);
    }
    return TensorSpace(std::move(dims), std::move(w));
}

std::vector<double> TensorSpace::dense_weights(std::size_t cap) const {
    require_under_cap(dense_size_, cap, "dense_weights");
    std::vector<const std::vector<double>*> parts;
    parts.reserve(weights_.size());
    for (const auto& w : weights_) parts.push_back(&w);
    return kron_all(parts);
}

std::vector<double> RankOneTensor::factor_norms() const {
    std::vector<double> norms;
    norms.reserve(factors.size());
    const auto& k = kernels::ops();
    for (const auto& f : factors) norms.push_back(std::sqrt(k.dot(f.data(), f.data(), f.size())));
    return norms;
}

bool RankOneTensor::is_zero() const {
    for (const auto& f : factors) {
        bool all_zero = true;
        for (double x : f)
            if (x != 0.0) { all_zero = false; break; }
        if (all_zero) return true;
    }
    return factors.empty();
}

void RankOneTensor::balance() {
    const auto norms = factor_norms();
    for (double t : norms) {
        if (t == 0.0) {
            for (auto& f : factors) std::fill(f.begin(), f.end(), 0.0);
            return;
        }
    }
    // geometric mean through logs; norms are positive here
    double log_sum = 0.0;
    for (double t : norms) log_sum += std::log(t);
    const double g = std::exp(log_sum / static_cast<double>(norms.size()));
    const auto& k = kernels::ops();
    for (std::size_t j = 0; j < factors.size(); ++j)
        k.scale(g / norms[j], factors[j].data(), factors[j].size());
}

SeparatedTensor::SeparatedTensor(SpacePtr space) : space_(std::move(space)) {
    if (!space_) throw ConfigError("separated tensor needs a space");
}

void SeparatedTensor::append(double coeff, RankOneTensor term) {
    check_term_shape(*space_, term);
    coeffs_.push_back(coeff);
    terms_.push_back(std::move(term));
}

void SeparatedTensor::append_scaled(double scalar, RankOneTensor term) {
    check_term_shape(*space_, term);
    term.balance();
    if (scalar == 0.0 || term.is_zero()) {
        for (auto& f : term.factors) std::fill(f.begin(), f.end(), 0.0);
        coeffs_.push_back(0.0);
        terms_.push_back(std::move(term));
        return;
    }
    const double mag = std::pow(std::fabs(scalar), 1.0 / static_cast<double>(space_->order()));
    const auto& k = kernels::ops();
    for (auto& f : term.factors) k.scale(mag, f.data(), f.size());
    coeffs_.push_back(scalar > 0.0 ? 1.0 : -1.0);
    terms_.push_back(std::move(term));
}

void SeparatedTensor::set_term(int i, RankOneTensor term) {
    check_term_shape(*space_, term);
    terms_[static_cast<std::size_t>(i)] = std::move(term);
}

std::size_t dense_index(const std::vector<int>& dims, const std::vector<int>& idx) {
    std::size_t flat = 0;
    for (std::size_t j = 0; j < dims.size(); ++j)
        flat = flat * static_cast<std::size_t>(dims[j]) + static_cast<std::size_t>(idx[j]);
    return flat;
}

void accumulate_rank_one(std::span<double> out, double coeff,
                         const std::vector<std::vector<double>>& factors) {
    const std::size_t d = factors.size();
    const auto& k = kernels::ops();
    if (d == 1) {
        k.axpy(coeff, factors[0].data(), out.data(), factors[0].size());
        return;
    }
    // expand all but the last axis, then axpy contiguous runs of the last factor
    std::vector<double> buf{coeff};
    for (std::size_t j = 0; j + 1 < d; ++j) {
        const auto& f = factors[j];
        std::vector<double> next(buf.size() * f.size());
        std::size_t pos = 0;
        for (double b : buf)
            for (double x : f) next[pos++] = b * x;
        buf = std::move(next);
    }
    const auto& last = factors[d - 1];
    for (std::size_t a = 0; a < buf.size(); ++a)
        k.axpy(buf[a], last.data(), out.data() + a * last.size(), last.size());
}

std::vector<double> kron_all(const std::vector<const std::vector<double>*>& parts) {
    std::vector<double> buf{1.0};
    for (const auto* f : parts) {
        std::vector<double> next(buf.size() * f->size());
        std::size_t pos = 0;
        for (double b : buf)
            for (double x : *f) next[pos++] = b * x;
        buf = std::move(next);
    }
    return buf;
}

std::vector<double> to_dense_values(const SeparatedTensor& v, std::size_t cap) {
    const std::size_t n = v.space().dense_size();
    require_under_cap(n, cap, "to_dense");
    std::vector<double> out(n, 0.0);
    for (int i = 0; i < v.rank(); ++i)
        accumulate_rank_one(out, v.coeff(i), v.term(i).factors);
    return out;
}

DenseTensor to_dense(const SeparatedTensor& v, std::size_t cap) {
    return DenseTensor{v.space_ptr(), to_dense_values(v, cap)};
}

double entry(const SeparatedTensor& v, const std::vector<int>& idx) {
    double s = 0.0;
    for (int i = 0; i < v.rank(); ++i) {
        double prod = v.coeff(i);
        const auto& f = v.term(i).factors;
        for (std::size_t j = 0; j < f.size(); ++j)
            prod *= f[j][static_cast<std::size_t>(idx[j])];
        s += prod;
    }
    return s;
}

double weighted_inner(const SeparatedTensor& a, const SeparatedTensor& b) {
    check_same_space(a, b);
    const auto& k = kernels::ops();
    const TensorSpace& sp = a.space();
    double total = 0.0;
    for (int i = 0; i < a.rank(); ++i) {
        for (int l = 0; l < b.rank(); ++l) {
            double prod = a.coeff(i) * b.coeff(l);
            if (prod == 0.0) continue;
            for (int j = 0; j < sp.order() && prod != 0.0; ++j) {
                const auto& fa = a.term(i).factors[static_cast<std::size_t>(j)];
                const auto& fb = b.term(l).factors[static_cast<std::size_t>(j)];
                prod *= k.dot3(fa.data(), fb.data(), sp.weights(j).data(), fa.size());
            }
            total += prod;
        }
    }
    return total;
}

double weighted_inner_dense(const TensorSpace& space, std::span<const double> a,
                            std::span<const double> b) {
    const auto w = space.dense_weights(std::numeric_limits<std::size_t>::max());
    return kernels::ops().dot3(a.data(), b.data(), w.data(), w.size());
}

double discrete_lp_norm_dense(const TensorSpace& space, std::span<const double> values,
                              double p) {
    if (!(p >= 1.0)) throw ConfigError("discrete_lp_norm requires p >= 1");
    const auto w = space.dense_weights(std::numeric_limits<std::size_t>::max());
    const double s = kernels::ops().wpow_sum(values.data(), w.data(), p, w.size());
    return std::pow(s, 1.0 / p);
}

double discrete_lp_norm(const SeparatedTensor& v, double p, std::size_t cap) {
    if (!(p >= 1.0)) throw ConfigError("discrete_lp_norm requires p >= 1");
    const auto dense = to_dense_values(v, cap);
    return discrete_lp_norm_dense(v.space(), dense, p);
}

std::vector<ModeSubspace> minimal_subspaces(const SeparatedTensor& v, double tol,
                                            std::size_t cap) {
    if (tol < 0.0) throw ConfigError("minimal_subspaces: tol must be >= 0");
    const TensorSpace& sp = v.space();
    const int d = sp.order();
    std::vector<ModeSubspace> out(static_cast<std::size_t>(d));

    if (sp.dense_size() <= cap) {
        const auto dense = to_dense_values(v, cap);
        std::size_t pre_sz = 1;
        for (int j = 0; j < d; ++j) {
            const auto nj = static_cast<std::size_t>(sp.dim(j));
            const std::size_t post_sz = dense.size() / (pre_sz * nj);
            // mode-j unfolding, one fiber position per column. A Gram-matrix
            // eigensolve would be cheaper but loses half the digits to squaring;
            // the SVD resolves sigma down to ~eps * sigma_max.
            Eigen::MatrixXd M(static_cast<Eigen::Index>(nj),
                              static_cast<Eigen::Index>(pre_sz * post_sz));
            for (std::size_t pre = 0; pre < pre_sz; ++pre) {
                const double* block = dense.data() + pre * nj * post_sz;
                for (std::size_t a = 0; a < nj; ++a)
                    M.row(static_cast<Eigen::Index>(a))
                        .segment(static_cast<Eigen::Index>(pre * post_sz),
                                 static_cast<Eigen::Index>(post_sz)) =
                        Eigen::Map<const Eigen::RowVectorXd>(
                            block + a * post_sz, static_cast<Eigen::Index>(post_sz));
            }
            Eigen::BDCSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU);
            const auto& sig = svd.singularValues(); // descending
            int rank = 0;
            if (sig.size() > 0 && sig(0) > 0.0) {
                const double cut = tol * sig(0);
                for (Eigen::Index i = 0; i < sig.size(); ++i)
                    if (sig(i) > cut) ++rank;
            }
            ModeSubspace ms;
            ms.rank = rank;
            ms.exact = true;
            ms.basis = svd.matrixU().leftCols(rank);
            out[static_cast<std::size_t>(j)] = std::move(ms);
            pre_sz *= nj;
        }
        return out;
    }

    // over the cap: orthonormalize the stored mode-j factors; a superset of the
    // minimal space, flagged as such
    for (int j = 0; j < d; ++j) {
        const auto nj = static_cast<Eigen::Index>(sp.dim(j));
        Eigen::MatrixXd B(nj, std::max(1, v.rank()));
        B.setZero();
        Eigen::Index cols = 0;
        for (int i = 0; i < v.rank(); ++i) {
            if (v.coeff(i) == 0.0) continue;
            const auto& f = v.term(i).factors[static_cast<std::size_t>(j)];
            B.col(cols++) = Eigen::Map<const Eigen::VectorXd>(f.data(), nj);
        }
        ModeSubspace ms;
        ms.exact = false;
        if (cols == 0) {
            ms.rank = 0;
            ms.basis.resize(nj, 0);
        } else {
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(B.leftCols(cols));
            qr.setThreshold(tol > 0.0 ? tol : Eigen::NumTraits<double>::dummy_precision());
            const auto rank = qr.rank();
            Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(nj, rank);
            ms.rank = static_cast<int>(rank);
            ms.basis = std::move(Q);
        }
        out[static_cast<std::size_t>(j)] = std::move(ms);
    }
    return out;
}

std::vector<int> minimal_subspace_ranks(const SeparatedTensor& v, double tol, std::size_t cap) {
    const auto subs = minimal_subspaces(v, tol, cap);
    std::vector<int> ranks;
    ranks.reserve(subs.size());
    for (const auto& s : subs) ranks.push_back(s.rank);
    return ranks;
}

RankOneTensor random_rank_one(const TensorSpace& space, Rng& rng) {
    RankOneTensor t;
    t.factors.resize(static_cast<std::size_t>(space.order()));
    for (int j = 0; j < space.order(); ++j) {
        auto& f = t.factors[static_cast<std::size_t>(j)];
        f.resize(static_cast<std::size_t>(space.dim(j)));
        for (auto& x : f) x = rng.uniform(-1.0, 1.0);
    }
    return t;
}

std::vector<double> apply_mode(std::span<const double> values, const std::vector<int>& dims,
                               int k, const Eigen::MatrixXd& M) {
    const auto uk = static_cast<std::size_t>(k);
    const auto nk = static_cast<std::size_t>(dims[uk]);
    if (static_cast<std::size_t>(M.cols()) != nk)
        throw SpaceMismatchError("apply_mode: matrix width does not match axis dim");
    std::size_t pre = 1, post = 1;
    for (std::size_t j = 0; j < uk; ++j) pre *= static_cast<std::size_t>(dims[j]);
    for (std::size_t j = uk + 1; j < dims.size(); ++j) post *= static_cast<std::size_t>(dims[j]);
    const auto rows = static_cast<std::size_t>(M.rows());
    std::vector<double> out(pre * rows * post, 0.0);
    const auto& ker = kernels::ops();
    for (std::size_t p = 0; p < pre; ++p) {
        const double* src = values.data() + p * nk * post;
        double* dst = out.data() + p * rows * post;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t b = 0; b < nk; ++b) {
                const double m = M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(b));
                if (m != 0.0) ker.axpy(m, src + b * post, dst + r * post, post);
            }
    }
    return out;
}

} // namespace pgd
