#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pgd/tensor.hpp"

namespace pgd {

// Convex functional J on a tensor-product grid, with the strong-monotonicity data
// used everywhere downstream:
//   <J'(v) - J'(w), v - w>  >=  alpha * ||v - w||^s
// in the functional's declared norm. `grad_dense` returns entrywise partials (it
// already contains the quadrature weights), so pairings against dense directions are
// plain Euclidean dots.
class Functional {
public:
    virtual ~Functional() = default;

    const TensorSpace& space() const { return *space_; }
    const SpacePtr& space_ptr() const { return space_; }
    const std::string& label() const { return label_; }
    double ellipticity_exponent() const { return s_; }
    double ellipticity_constant() const { return alpha_; }
    std::size_t dense_cap() const { return cap_; }

    virtual double eval_dense(std::span<const double> v) const = 0;
    virtual std::vector<double> grad_dense(std::span<const double> v) const = 0;
    // y = J''(v) x  (Hessian action at v; defined a.e. for the penalized case)
    virtual std::vector<double> hess_apply_dense(std::span<const double> v,
                                                 std::span<const double> x) const = 0;
    virtual double norm_dense(std::span<const double> v) const = 0;

    // Separated-level entry points. Defaults expand through dense (the cap applies);
    // the quadratic functional overrides them with exact factorwise formulas.
    virtual double eval(const SeparatedTensor& v) const;
    virtual double grad_action(const SeparatedTensor& v, const SeparatedTensor& w) const;
    virtual double norm(const SeparatedTensor& v) const;

    virtual bool is_quadratic() const { return false; }

protected:
    Functional(SpacePtr space, std::string label, double s, double alpha, std::size_t cap);
    void set_alpha(double alpha) { alpha_ = alpha; }

    SpacePtr space_;
    std::string label_;
    double s_;
    double alpha_;
    std::size_t cap_;
};

using FunctionalPtr = std::shared_ptr<const Functional>;

// --- L^p approximation ----------------------------------------------------------
//   J(v) = (1/p) sum_I W_I |v_I - u_I|^p,  p >= 2

class LpApproxFunctional final : public Functional {
public:
    LpApproxFunctional(SpacePtr space, std::vector<double> target, double p,
                       std::size_t cap);

    double p() const { return p_; }
    const std::vector<double>& target() const { return target_; }

    double eval_dense(std::span<const double> v) const override;
    std::vector<double> grad_dense(std::span<const double> v) const override;
    std::vector<double> hess_apply_dense(std::span<const double> v,
                                         std::span<const double> x) const override;
    double norm_dense(std::span<const double> v) const override;

private:
    double p_;
    std::vector<double> target_;
    std::vector<double> wdense_;
};

std::shared_ptr<LpApproxFunctional> make_lp_approx(SpacePtr space, std::vector<double> target,
                                                   double p,
                                                   std::size_t cap = kDefaultDenseCap);

// --- quadratic ------------------------------------------------------------------
//   J(v) = 1/2 a(v,v) - l(v),   a(v,w) = sum_r < (A_r^(1) x ... x A_r^(d)) v, w >_mu,
//   l(v) = <f, v>_mu. Kronecker-term actions on separated tensors stay separated.

struct QuadraticOperatorSpec {
    // kron_terms[r][j] is the axis-j matrix (n_j x n_j) of term r
    std::vector<std::vector<Eigen::MatrixXd>> kron_terms;
    SeparatedTensor rhs;
};

class QuadraticFunctional final : public Functional {
public:
    QuadraticFunctional(SpacePtr space, QuadraticOperatorSpec op, std::size_t cap);

    bool is_quadratic() const override { return true; }

    double bilinear(const SeparatedTensor& v, const SeparatedTensor& w) const;
    double linear(const SeparatedTensor& w) const;
    const SeparatedTensor& rhs() const { return op_.rhs; }
    int term_count() const { return static_cast<int>(op_.kron_terms.size()); }
    const Eigen::MatrixXd& term_matrix(int r, int j) const {
        return op_.kron_terms[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)];
    }

    // Stacked mode-k systems for rank-one/all-terms factor solves. Index (i, a) maps to
    // row i * n_k + a; terms' own mode-k factors are ignored (they are the unknowns) and
    // coefficients are taken as 1.
    //   gram[(i,a),(i',b)] = a(E_{i,a}, E_{i',b}),  rhs[(i,a)] = l(E_{i,a}),
    //   cross[(i,a)]       = a(base, E_{i,a})
    // where E_{i,a} is term i with its mode-k factor replaced by the basis vector e_a.
    Eigen::MatrixXd stacked_mode_gram(const std::vector<RankOneTensor>& terms, int k) const;
    Eigen::VectorXd stacked_mode_rhs(const std::vector<RankOneTensor>& terms, int k) const;
    Eigen::VectorXd stacked_mode_cross(const SeparatedTensor& base,
                                       const std::vector<RankOneTensor>& terms, int k) const;

    // Coefficient system over a fixed term list: gram[i,j] = a(z_i, z_j), rhs[i] = l(z_i).
    Eigen::MatrixXd coeff_gram(const std::vector<RankOneTensor>& terms) const;
    Eigen::VectorXd coeff_rhs(const std::vector<RankOneTensor>& terms) const;

    // y = (sum_r kron(A_r)) x on dense data (no weights applied)
    std::vector<double> operator_apply_dense(std::span<const double> x) const;

    double eval_dense(std::span<const double> v) const override;
    std::vector<double> grad_dense(std::span<const double> v) const override;
    std::vector<double> hess_apply_dense(std::span<const double> v,
                                         std::span<const double> x) const override;
    double norm_dense(std::span<const double> v) const override;

    double eval(const SeparatedTensor& v) const override;
    double grad_action(const SeparatedTensor& v, const SeparatedTensor& w) const override;
    double norm(const SeparatedTensor& v) const override;

private:
    // prod_{j != k} <A_r^(j) x_j, y_j>_mu_j
    double off_mode_product(int r, const RankOneTensor& x, const RankOneTensor& y, int k) const;

    QuadraticOperatorSpec op_;
    std::vector<double> wdense_;    // empty past the cap; dense paths then throw
    std::vector<double> rhs_dense_; // same
};

std::shared_ptr<QuadraticFunctional> make_quadratic(SpacePtr space, QuadraticOperatorSpec op,
                                                    std::size_t cap = kDefaultDenseCap);

// --- penalized quadratic (obstacle v >= g by penalty) -----------------------------
//   J_eps(v) = J(v) + (1/eps) * 1/2 sum_I W_I max(0, g_I - v_I)^2

struct PenaltySpec {
    std::vector<double> obstacle; // dense g, row-major
    double epsilon;
};

class PenalizedFunctional final : public Functional {
public:
    PenalizedFunctional(std::shared_ptr<const QuadraticFunctional> base, PenaltySpec penalty);

    const QuadraticFunctional& base() const { return *base_; }
    std::shared_ptr<const QuadraticFunctional> base_ptr() const { return base_; }
    double epsilon() const { return penalty_.epsilon; }
    const std::vector<double>& obstacle() const { return penalty_.obstacle; }

    // 1/2 sum_I W_I max(0, g_I - v_I)^2 (no 1/eps factor)
    double penalty_value_dense(std::span<const double> v) const;
    // || max(0, g - v) ||_mu,2 on dense values
    double violation_norm_dense(std::span<const double> v) const;

    double eval_dense(std::span<const double> v) const override;
    std::vector<double> grad_dense(std::span<const double> v) const override;
    std::vector<double> hess_apply_dense(std::span<const double> v,
                                         std::span<const double> x) const override;
    double norm_dense(std::span<const double> v) const override;
    double norm(const SeparatedTensor& v) const override;

private:
    std::shared_ptr<const QuadraticFunctional> base_;
    PenaltySpec penalty_;
    std::vector<double> wdense_;
};

std::shared_ptr<PenalizedFunctional> make_penalized(
    std::shared_ptr<const QuadraticFunctional> base, PenaltySpec penalty);

// --- p-Laplacian ------------------------------------------------------------------
//   J(v) = (1/p) sum_k || D_k v ||_{p,k}^p - <f, v>_mu,  p > 2,
// where D_k applies a forward-difference matrix (homogeneous Dirichlet closure) along
// axis k and || . ||_{p,k} uses the derivative-grid weights nu_k on axis k and the
// nodal weights elsewhere. The declared norm is ( sum_k ||D_k v||_{p,k}^p )^(1/p).

struct PLaplacianSpec {
    std::vector<Eigen::MatrixXd> diff; // diff[k] is m_k x n_k
    std::vector<std::vector<double>> diff_weights; // nu_k, length m_k; empty -> ones
    double p;
    std::vector<double> source; // dense f, row-major
};

class PLaplacianFunctional final : public Functional {
public:
    PLaplacianFunctional(SpacePtr space, PLaplacianSpec spec, std::size_t cap);

    double p() const { return p_; }
    const Eigen::MatrixXd& diff(int k) const { return spec_.diff[static_cast<std::size_t>(k)]; }
    const std::vector<double>& source() const { return spec_.source; }

    double eval_dense(std::span<const double> v) const override;
    std::vector<double> grad_dense(std::span<const double> v) const override;
    std::vector<double> hess_apply_dense(std::span<const double> v,
                                         std::span<const double> x) const override;
    double norm_dense(std::span<const double> v) const override;

private:
    PLaplacianSpec spec_;
    double p_;
    std::vector<double> wdense_;
    std::vector<std::vector<double>> deriv_wdense_; // per direction k
    std::vector<std::vector<int>> deriv_dims_;
};

std::shared_ptr<PLaplacianFunctional> make_p_laplacian(SpacePtr space, PLaplacianSpec spec,
                                                       std::size_t cap = kDefaultDenseCap);

// Forward-difference matrix with homogeneous Dirichlet closure at both ends:
// (n+1) x n, rows (v_1 - 0, v_2 - v_1, ..., 0 - v_n) / h.
Eigen::MatrixXd dirichlet_forward_difference(int n, double h);

// --- ellipticity probe --------------------------------------------------------------

struct EllipticityCheckResult {
    double min_ratio;
    bool pass; // min_ratio >= alpha * (1 - 1e-8)
    int samples;
};

// Sample seeded pairs (v, w) of random separated tensors and take the worst ratio
//   <J'(v) - J'(w), v - w> / ||v - w||^s.
EllipticityCheckResult ellipticity_check(const Functional& J, int sample_count,
                                         std::uint64_t seed);

} // namespace pgd
