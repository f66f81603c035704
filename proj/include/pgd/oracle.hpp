#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pgd/functional.hpp"
#include "pgd/tensor.hpp"

namespace pgd {

// Brute-force reference solvers. Everything here works on dense expansions and is
// meant for tests and diagnostics at small scale; the iterative solver never needs it.

struct OracleConfig {
    int max_iters = 50000;
    double grad_tol = 1e-10; // stop when ||grad||_2 <= grad_tol * (1 + |J|)
    enum class Method { newton, backtracking_gd } method = Method::newton;
    std::uint64_t seed = 0;
};

struct DenseMinimizeResult {
    std::vector<double> minimizer;
    double value = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false; // iteration cap hit -> false, never silent
};

// Exact linear solve for quadratic functionals; damped Newton with Armijo
// backtracking (gradient fallback on non-PD Hessians) otherwise.
DenseMinimizeResult dense_minimize(const Functional& J, const OracleConfig& cfg = {});

struct TruncatedSvdResult {
    std::vector<double> singular_values; // all of them, descending
    Eigen::MatrixXd U;                   // n1 x r, left vectors for sigma > 0
    Eigen::MatrixXd V;                   // n2 x r
    std::vector<double> approx;          // best rank-m approximation, row-major
    int m = 0;
};

// Order-2 tensors only. Computed through a symmetric eigendecomposition of the
// smaller Gram matrix; plain (unweighted) Frobenius geometry.
TruncatedSvdResult truncated_svd(const DenseTensor& matrix, int m);

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::vector<double> per_direction;
    double h = 0.0;
};

// Central differences of eval against grad_action along seeded random rank-one unit
// directions, h = eps^(1/3) * (1 + ||v||_2).
GradCheckResult fd_grad_check(const Functional& J, const SeparatedTensor& v,
                              int n_directions, std::uint64_t seed);

// Ratio (phi(s) - phi(t)) (s - t) / |s - t|^p with phi(t) = |t|^(p-2) t.
double monotonicity_ratio(double s, double t, double p);

// Minimum of the ratio over a uniform grid on [-1,1]^2, pairs with |s-t| < 1e-9
// excluded. This is the source of the declared L^p ellipticity constants.
double scalar_ellipticity_scan(double p, int grid_points_per_axis = 201);

} // namespace pgd
