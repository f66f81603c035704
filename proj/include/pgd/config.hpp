#pragma once

#include <string>
#include <vector>

#include "pgd/functional.hpp"
#include "pgd/solver.hpp"
#include "pgd/tensor.hpp"

namespace pgd {

struct CompareConfig {
    int max_rank = 0;            // 0: reuse the solver's max_rank
    std::string oracle = "auto"; // auto | svd | dense
    std::vector<double> epsilon_sweep; // penalized problems only
};

struct GradcheckConfig {
    int points = 5;
    double tol = 0.0; // 0: 1e-9 for quadratic problems, 1e-6 otherwise
    std::uint64_t seed = 7;
};

struct RunConfig {
    FunctionalPtr functional;
    Schedule schedule;
    SolverConfig solver;
    CompareConfig compare;
    GradcheckConfig gradcheck;
};

// Strict parser: unknown keys are rejected at every level so typos cannot silently
// fall back to defaults. Relative paths resolve against the config file's directory.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir);

// Exact CP form of a dense array: unit vectors along every axis but the last, the
// row-major fibers along the last. Zero fibers are skipped.
SeparatedTensor separated_from_dense(SpacePtr space, std::span<const double> values);

} // namespace pgd
