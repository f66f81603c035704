#include "pgd/runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "pgd/config.hpp"
#include "pgd/error.hpp"
#include "pgd/io.hpp"
#include "pgd/oracle.hpp"
#include "pgd/rng.hpp"
#include "pgd/solver.hpp"

namespace pgd {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

template <typename F>
int guard(F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

std::string join(const std::string& dir, const char* name) {
    return (fs::path(dir) / name).string();
}

// Re-read what cmd_run wrote and check the invariants the solver promises. Catches
// formatting drift as well as solver regressions, since it only sees the files.
void verify_run_outputs(const RunConfig& cfg, const std::string& out_dir) {
    const auto records = io::read_report_csv(join(out_dir, "report.csv"));

    json summary;
    {
        std::ifstream f(join(out_dir, "summary.json"));
        if (!f) throw NumericalError("verify: summary.json is missing");
        f >> summary;
    }
    const double J_zero = summary.at("J_zero").get<double>();
    const double final_J = summary.at("final_J").get<double>();
    const double sum_zs = summary.at("sum_zs").get<double>();
    if (summary.at("steps").get<std::size_t>() != records.size())
        throw NumericalError("verify: summary step count does not match report.csv");

    const Functional& J = *cfg.functional;
    double prev = J_zero;
    double zs = 0.0;
    for (const auto& r : records) {
        const double slack = 1e-9 * (1.0 + std::fabs(prev));
        if (r.J_value > prev + slack)
            throw NumericalError("verify: J increases at step " + std::to_string(r.m));
        if (std::fabs((prev - r.J_value) - r.J_decrease) > slack)
            throw NumericalError("verify: J_decrease is inconsistent at step " +
                                 std::to_string(r.m));
        if (!(r.z_norm >= 0.0))
            throw NumericalError("verify: negative z_norm at step " + std::to_string(r.m));
        zs += std::pow(r.z_norm, J.ellipticity_exponent());
        prev = r.J_value;
    }
    if (std::fabs(prev - final_J) > 1e-9 * (1.0 + std::fabs(final_J)))
        throw NumericalError("verify: final_J does not match the last report row");
    if (std::fabs(zs - sum_zs) > 1e-9 * (1.0 + sum_zs))
        throw NumericalError("verify: sum_zs does not match the report rows");

    // decrease-correction inequality with the declared constant, plus roundoff slack
    const double alpha = J.ellipticity_constant();
    const double s = J.ellipticity_exponent();
    prev = J_zero;
    for (const auto& r : records) {
        const double lhs = prev - r.J_value;
        const double rhs = (alpha / s) * std::pow(r.z_norm, s);
        if (lhs + 1e-9 * (1.0 + std::fabs(prev)) < rhs)
            throw NumericalError("verify: decrease-correction bound fails at step " +
                                 std::to_string(r.m));
        prev = r.J_value;
    }

    const auto u = io::read_separated_json(join(out_dir, "solution.json"), J.space_ptr());
    const double J_u = J.eval(u);
    if (std::fabs(J_u - final_J) > 1e-9 * (1.0 + std::fabs(final_J)))
        throw NumericalError("verify: re-evaluated solution value " +
                             io::format_double(J_u) + " does not match final_J " +
                             io::format_double(final_J));
}

bool svd_oracle_applicable(const Functional& J) {
    const auto* Q = dynamic_cast<const QuadraticFunctional*>(&J);
    if (!Q || Q->space().order() != 2 || Q->term_count() != 1) return false;
    for (int j = 0; j < 2; ++j) {
        const int n = Q->space().dim(j);
        if (!Q->term_matrix(0, j).isApprox(Eigen::MatrixXd::Identity(n, n), 1e-14))
            return false;
        for (double w : Q->space().weights(j))
            if (w != 1.0) return false;
    }
    return true;
}

} // namespace

int cmd_run(const std::string& config_path, const std::string& out_dir, bool verify) {
    return guard([&]() -> int {
        const auto cfg = load_run_config(config_path);
        fs::create_directories(out_dir);

        const auto res = pgd_solve(*cfg.functional, cfg.schedule, cfg.solver);
        io::write_report_csv(join(out_dir, "report.csv"), res.report);
        io::write_summary_json(join(out_dir, "summary.json"), res.report);
        io::write_separated_json(join(out_dir, "solution.json"), res.u);

        if (verify) verify_run_outputs(cfg, out_dir);

        std::cout << "steps=" << res.report.records.size()
                  << " stop_reason=" << to_string(res.report.stop_reason)
                  << " final_J=" << io::format_double(res.report.final_J)
                  << (verify ? " verify=ok" : "") << "\n";
        return 0;
    });
}

int cmd_compare(const std::string& config_path, const std::string& out_dir) {
    return guard([&]() -> int {
        const auto cfg = load_run_config(config_path);
        fs::create_directories(out_dir);
        const Functional& J = *cfg.functional;

        // penalty continuation: rerun the solve across the requested epsilons
        if (!cfg.compare.epsilon_sweep.empty()) {
            const auto* P = dynamic_cast<const PenalizedFunctional*>(&J);
            if (!P)
                throw ConfigError(
                    "compare.epsilon_sweep requires a penalized problem");
            std::ofstream f(join(out_dir, "epsilon_sweep.csv"), std::ios::binary);
            f << "epsilon,steps,final_J,violation\n";
            for (double eps : cfg.compare.epsilon_sweep) {
                const auto Je =
                    make_penalized(P->base_ptr(), PenaltySpec{P->obstacle(), eps});
                auto scfg = cfg.solver;
                if (cfg.compare.max_rank > 0) scfg.max_rank = cfg.compare.max_rank;
                const auto res = pgd_solve(*Je, cfg.schedule, scfg);
                const auto ud = to_dense_values(res.u, Je->dense_cap());
                const double viol = Je->violation_norm_dense(ud);
                f << io::format_double(eps) << "," << res.report.records.size() << ","
                  << io::format_double(res.report.final_J) << ","
                  << io::format_double(viol) << "\n";
            }
            std::cout << "epsilon_sweep.csv written ("
                      << cfg.compare.epsilon_sweep.size() << " rows)\n";
        }

        auto scfg = cfg.solver;
        if (cfg.compare.max_rank > 0) scfg.max_rank = cfg.compare.max_rank;
        scfg.keep_iterates = true;
        const auto res = pgd_solve(J, cfg.schedule, scfg);

        std::string oracle = cfg.compare.oracle;
        if (oracle == "auto") oracle = svd_oracle_applicable(J) ? "svd" : "dense";
        if (oracle == "svd" && !svd_oracle_applicable(J))
            throw ConfigError("compare.oracle=svd needs a 2-axis identity-operator "
                              "quadratic problem with uniform weights");

        const auto mini = dense_minimize(J);
        if (!mini.converged)
            throw NumericalError("compare: the reference minimization did not converge");
        const double J_star = mini.value;

        std::vector<double> svd_tail; // best possible error at each rank, svd oracle only
        if (oracle == "svd") {
            // identity operator: the minimizer is the data itself
            DenseTensor target{J.space_ptr(), mini.minimizer};
            const auto svd =
                truncated_svd(target, static_cast<int>(res.report.records.size()));
            double total = 0.0;
            for (double s : svd.singular_values) total += s * s;
            svd_tail.resize(svd.singular_values.size() + 1);
            svd_tail[0] = total;
            for (std::size_t k = 0; k < svd.singular_values.size(); ++k)
                svd_tail[k + 1] =
                    svd_tail[k] - svd.singular_values[k] * svd.singular_values[k];
        }

        std::ofstream f(join(out_dir, "compare.csv"), std::ios::binary);
        f << "m,J,J_gap,bound,err,oracle_err\n";
        for (std::size_t i = 0; i < res.report.records.size(); ++i) {
            const auto& r = res.report.records[i];
            const double gap = r.J_value - J_star;
            const double bound = a_posteriori_bound(J, gap);
            auto ud = to_dense_values(res.iterates[i], J.dense_cap());
            for (std::size_t q = 0; q < ud.size(); ++q) ud[q] -= mini.minimizer[q];
            const double err = J.norm_dense(ud);
            f << r.m << "," << io::format_double(r.J_value) << ","
              << io::format_double(gap) << "," << io::format_double(bound) << ","
              << io::format_double(err) << ",";
            if (!svd_tail.empty() && static_cast<std::size_t>(r.m) < svd_tail.size())
                f << io::format_double(
                    std::sqrt(std::max(0.0, svd_tail[static_cast<std::size_t>(r.m)])));
            f << "\n";
        }
        std::cout << "compare.csv written (oracle=" << oracle
                  << ", J*=" << io::format_double(J_star) << ")\n";
        return 0;
    });
}

int cmd_gradcheck(const std::string& config_path, const std::string& out_dir) {
    return guard([&]() -> int {
        const auto cfg = load_run_config(config_path);
        const Functional& J = *cfg.functional;
        const double tol =
            cfg.gradcheck.tol > 0.0 ? cfg.gradcheck.tol : (J.is_quadratic() ? 1e-9 : 1e-6);

        std::ofstream f;
        if (!out_dir.empty()) {
            fs::create_directories(out_dir);
            f.open(join(out_dir, "gradcheck.csv"), std::ios::binary);
            f << "point,max_rel_err,h,pass\n";
        }

        bool all_pass = true;
        for (int i = 0; i < cfg.gradcheck.points; ++i) {
            Rng rng(mix_seed(cfg.gradcheck.seed, static_cast<std::uint64_t>(i)));
            SeparatedTensor v(J.space_ptr());
            for (int t = 0; t < 2; ++t)
                v.append_scaled(rng.uniform(-1.0, 1.0), random_rank_one(J.space(), rng));
            const auto res = fd_grad_check(J, v, 6, mix_seed(cfg.gradcheck.seed, 1000 + i));
            const bool pass = res.max_rel_err <= tol;
            all_pass = all_pass && pass;
            std::cout << "point " << i << ": max_rel_err="
                      << io::format_double(res.max_rel_err) << " h="
                      << io::format_double(res.h) << (pass ? " pass" : " FAIL") << "\n";
            if (f.is_open())
                f << i << "," << io::format_double(res.max_rel_err) << ","
                  << io::format_double(res.h) << "," << (pass ? 1 : 0) << "\n";
        }
        if (!all_pass)
            throw NumericalError("gradient check failed (tolerance " +
                                 io::format_double(tol) + ")");
        std::cout << "all " << cfg.gradcheck.points << " points pass (tolerance "
                  << io::format_double(tol) << ")\n";
        return 0;
    });
}

} // namespace pgd
