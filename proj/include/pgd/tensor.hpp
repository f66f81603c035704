#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace pgd {

// Dense expansions refuse to materialize more entries than this unless the caller
// raises the cap explicitly.
inline constexpr std::size_t kDefaultDenseCap = 1000000;

// Discretized tensor-product space: d >= 2 axes, per-axis point counts and strictly
// positive per-point quadrature weights. Values are immutable after construction.
class TensorSpace {
public:
    TensorSpace(std::vector<int> dims, std::vector<std::vector<double>> weights);

    // weights identically 1 on every axis
    static TensorSpace uniform(std::vector<int> dims);

    int order() const { return static_cast<int>(dims_.size()); }
    int dim(int j) const { return dims_[static_cast<std::size_t>(j)]; }
    const std::vector<int>& dims() const { return dims_; }
    const std::vector<double>& weights(int j) const {
        return weights_[static_cast<std::size_t>(j)];
    }

    // product of dims, saturating at SIZE_MAX on overflow
    std::size_t dense_size() const { return dense_size_; }

    // Kronecker product of the per-axis weights, row-major. Throws SizeCapError past cap.
    std::vector<double> dense_weights(std::size_t cap = kDefaultDenseCap) const;

    bool operator==(const TensorSpace& other) const {
        return dims_ == other.dims_ && weights_ == other.weights_;
    }

private:
    std::vector<int> dims_;
    std::vector<std::vector<double>> weights_;
    std::size_t dense_size_ = 0;
};

using SpacePtr = std::shared_ptr<const TensorSpace>;

// Elementary (rank-one) tensor: one factor vector per axis. The zero tensor is
// represented with every factor zero.
struct RankOneTensor {
    std::vector<std::vector<double>> factors;

    RankOneTensor() = default;
    explicit RankOneTensor(std::vector<std::vector<double>> f) : factors(std::move(f)) {}

    std::vector<double> factor_norms() const;
    bool is_zero() const;

    // Rescale factors so all Euclidean factor norms are equal, preserving the tensor
    // value. If any factor is zero the whole tensor is zero and all factors are zeroed.
    void balance();
};

// Sum of scaled rank-one terms (CP format). The zero tensor is the empty term list.
// Solver-produced terms keep balanced factors; coefficients carry signs and any
// span-optimization scaling.
class SeparatedTensor {
public:
    explicit SeparatedTensor(SpacePtr space);

    const TensorSpace& space() const { return *space_; }
    const SpacePtr& space_ptr() const { return space_; }

    int rank() const { return static_cast<int>(terms_.size()); }
    const std::vector<double>& coeffs() const { return coeffs_; }
    const std::vector<RankOneTensor>& terms() const { return terms_; }
    const RankOneTensor& term(int i) const { return terms_[static_cast<std::size_t>(i)]; }
    double coeff(int i) const { return coeffs_[static_cast<std::size_t>(i)]; }

    // Validates factor shapes against the space.
    void append(double coeff, RankOneTensor term);

    // Append scalar * term: the term is balanced, |scalar|^(1/d) is folded into each
    // factor and the coefficient keeps the sign.
    void append_scaled(double scalar, RankOneTensor term);

    void set_coeff(int i, double c) { coeffs_[static_cast<std::size_t>(i)] = c; }
    void set_term(int i, RankOneTensor term);

private:
    SpacePtr space_;
    std::vector<double> coeffs_;
    std::vector<RankOneTensor> terms_;
};

// Full array of values, row-major (first axis slowest).
struct DenseTensor {
    SpacePtr space;
    std::vector<double> values;
};

// --- index helpers ------------------------------------------------------------

std::size_t dense_index(const std::vector<int>& dims, const std::vector<int>& idx);

// --- core operations ----------------------------------------------------------

// out += coeff * (factors[0] x ... x factors[d-1]), out row-major of matching size.
void accumulate_rank_one(std::span<double> out, double coeff,
                         const std::vector<std::vector<double>>& factors);

// Kronecker product of a list of vectors, row-major.
std::vector<double> kron_all(const std::vector<const std::vector<double>*>& parts);

std::vector<double> to_dense_values(const SeparatedTensor& v,
                                    std::size_t cap = kDefaultDenseCap);
DenseTensor to_dense(const SeparatedTensor& v, std::size_t cap = kDefaultDenseCap);

// Single entry by multi-index; cheap, for spot checks.
double entry(const SeparatedTensor& v, const std::vector<int>& idx);

// Weighted inner product sum_I W_I a_I b_I computed factorwise, never dense.
double weighted_inner(const SeparatedTensor& a, const SeparatedTensor& b);

// Same pairing on dense value arrays.
double weighted_inner_dense(const TensorSpace& space, std::span<const double> a,
                            std::span<const double> b);

// ( sum_I W_I |v_I|^p )^(1/p), p >= 1. Separated input is expanded (|v|^p does not
// separate), so the cap applies.
double discrete_lp_norm(const SeparatedTensor& v, double p,
                        std::size_t cap = kDefaultDenseCap);
double discrete_lp_norm_dense(const TensorSpace& space, std::span<const double> values,
                              double p);

// Minimal mode subspace: rank and an orthonormal basis of the mode-j fiber span.
// exact=false marks the span-of-factors fallback, a superset of the minimal space.
struct ModeSubspace {
    int rank = 0;
    Eigen::MatrixXd basis; // n_j x rank, orthonormal columns
    bool exact = true;
};

// Per-mode minimal subspaces. Under the cap: ranks of the mode-j unfoldings of the
// dense tensor (singular values above tol * sigma_max). Over the cap: orthonormalized
// span of the stored mode-j factors, flagged exact=false.
std::vector<ModeSubspace> minimal_subspaces(const SeparatedTensor& v, double tol = 1e-12,
                                            std::size_t cap = kDefaultDenseCap);
std::vector<int> minimal_subspace_ranks(const SeparatedTensor& v, double tol = 1e-12,
                                        std::size_t cap = kDefaultDenseCap);

// Apply matrix M (rows x dims[k]) along axis k of a row-major array with the given
// dims; returns the array with dims[k] replaced by M.rows(). Used for difference
// operators and Kronecker-term actions on dense data.
std::vector<double> apply_mode(std::span<const double> values, const std::vector<int>& dims,
                               int k, const Eigen::MatrixXd& M);

class Rng;

// Rank-one tensor with factor entries uniform in [-1, 1).
RankOneTensor random_rank_one(const TensorSpace& space, Rng& rng);

} // namespace pgd
