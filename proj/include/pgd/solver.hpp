#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "pgd/functional.hpp"
#include "pgd/tensor.hpp"

namespace pgd {

// Update schedule over the step strategies:
//   c  append the rank-one correction as computed
//   l  append, then minimize over a subspace containing the whole iterate
//   r  minimize over a subspace containing the correction before appending
// Text form is one or more of c/l/r, with a trailing '*' for cyclic repetition
// ("ccl*" = ccl ccl ccl ...). A finite schedule bounds the number of steps.
class Schedule {
public:
    static Schedule parse(const std::string& text);

    // 1-based step index. Finite schedules require m <= length().
    char symbol_at(int m) const;
    int length() const { return static_cast<int>(symbols_.size()); }
    bool cyclic() const { return cyclic_; }
    const std::string& text() const { return text_; }

private:
    std::string symbols_;
    std::string text_;
    bool cyclic_ = false;
};

struct SolverConfig {
    int max_rank = 20;
    int als_max_sweeps = 200;
    double als_rel_tol = 1e-10;       // sweep-to-sweep |dJ| <= tol * (1 + |J|)
    int multistarts = 3;
    double outer_stagnation_tol = 1e-12; // correction improvement below this stops the run
    double zm_norm_tol = 0.0;            // ||z_m|| <= tol stops after recording; 0 disables
    std::uint64_t seed = 0;

    enum class RSubspace { span_zhat, dim_k };
    RSubspace r_subspace = RSubspace::span_zhat;
    int r_dim_k = 0; // axis for RSubspace::dim_k

    enum class LSubspace { span_all_terms, dim_sweep };
    LSubspace l_subspace = LSubspace::span_all_terms;

    enum class InnerSolver { auto_select, exact_linear, damped_newton, gradient_backtracking };
    InnerSolver inner_solver = InnerSolver::auto_select;

    // Off keeps run outputs byte-identical (wall_ms is written as 0).
    bool timing = false;

    // Snapshot u_m after every recorded step (diagnostics; not a config-file knob).
    bool keep_iterates = false;
};

enum class StopReason { max_rank, stagnation, z_norm_tol, exact_solution, schedule_exhausted };
const char* to_string(StopReason r);

struct IterationRecord {
    int m = 0;
    char symbol = 'c';
    double J_value = 0.0;    // J(u_m), after any l-update
    double J_decrease = 0.0; // J(u_{m-1}) - J(u_m)
    double z_norm = 0.0;     // ||z_m|| in the functional's norm
    double euler_residual = 0.0; // |<J'(u_{m-1} + z_m), z_m>|
    double sigma = std::numeric_limits<double>::quiet_NaN(); // ||z_m||_a, quadratic only
    int sweeps = 0;
    double wall_ms = 0.0;
};

struct ConvergenceReport {
    std::vector<IterationRecord> records;
    StopReason stop_reason = StopReason::max_rank;
    double J_zero = 0.0;  // J(0), the starting value
    double final_J = 0.0;
    double sum_zs = 0.0;  // sum of ||z_m||^s, bounded by (s/alpha) * (J(0) - J*)
};

struct SolveResult {
    SeparatedTensor u;
    ConvergenceReport report;
    std::vector<SeparatedTensor> iterates; // filled when cfg.keep_iterates is set
};

struct CorrectionResult {
    RankOneTensor z;
    double J_after = 0.0; // J(u_prev + z)
    int sweeps = 0;       // total over all starts
    bool converged = false;
};

// Best rank-one correction at u_prev by multistart alternating block minimization.
// Starts are seeded from (cfg.seed, step); ties within 1e-14 * (1 + |J|) keep the
// lower start index. Returns the zero correction when nothing improves on J_prev.
CorrectionResult rank_one_correction(const Functional& J, const SeparatedTensor& u_prev,
                                     double J_prev, const SolverConfig& cfg, int step);

// Minimize J over the span of u's terms (coefficients only). Dead terms (zero
// coefficient or zero factors) are left untouched. Returns the new value J(u).
double coefficient_update(const Functional& J, SeparatedTensor& u);

// Replace every live term's mode-k factor by the joint minimizer over that stacked
// block. Modified terms are rebalanced with the sign kept in the coefficient.
// Returns the new value J(u).
double mode_update(const Functional& J, SeparatedTensor& u, int k);

SolveResult pgd_solve(const Functional& J, const Schedule& schedule,
                      const SolverConfig& cfg = {});

// (s * max(J_gap, 0) / alpha)^(1/s): certified distance from the minimizer given the
// functional-value gap.
double a_posteriori_bound(const Functional& J, double J_gap);

} // namespace pgd
