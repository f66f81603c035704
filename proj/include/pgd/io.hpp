#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pgd/solver.hpp"
#include "pgd/tensor.hpp"

namespace pgd::io {

// Shortest round-trippable decimal form (printf %.17g semantics, trimmed).
std::string format_double(double x);

// Dense tensor CSV: header line "dims: n_1,n_2,...", then one value per line in
// row-major order.
void write_dense_csv(const std::string& path, const DenseTensor& t);
DenseTensor read_dense_csv(const std::string& path, SpacePtr space = nullptr);

// Plain matrix CSV, one comma-separated row per line.
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(const std::string& path);

// Separated tensor JSON: {"dims": [...], "coeffs": [...], "factors": [t][axis][i]}.
// Weights are not serialized; the reader validates dims against the given space.
void write_separated_json(const std::string& path, const SeparatedTensor& v);
SeparatedTensor read_separated_json(const std::string& path, SpacePtr space);

// Per-step convergence table. Columns are fixed:
//   m,symbol,J,J_decrease,z_norm,euler_residual,sigma,sweeps,wall_ms
// sigma is left empty for problems without an a-norm (non-quadratic).
void write_report_csv(const std::string& path, const ConvergenceReport& rep);
std::vector<IterationRecord> read_report_csv(const std::string& path);

// {"stop_reason", "J_zero", "final_J", "sum_zs", "steps"}
void write_summary_json(const std::string& path, const ConvergenceReport& rep);

std::string read_text_file(const std::string& path);

} // namespace pgd::io
