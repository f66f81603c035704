#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pgd/kernels.hpp"
#include "pgd/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"progressive rank-one minimization of convex functionals on tensor grids"};
    app.require_subcommand(1);

    std::string run_config, run_out = ".";
    bool run_verify = false;
    auto* run = app.add_subcommand(
        "run", "minimize; writes report.csv, summary.json, solution.json");
    run->add_option("--config", run_config, "run configuration (JSON)")->required();
    run->add_option("--out", run_out, "output directory");
    run->add_flag("--verify", run_verify,
                  "re-read the outputs and re-check the convergence invariants");

    std::string cmp_config, cmp_out = ".";
    auto* cmp = app.add_subcommand(
        "compare", "solve against a brute-force reference; writes compare.csv");
    cmp->add_option("--config", cmp_config, "run configuration (JSON)")->required();
    cmp->add_option("--out", cmp_out, "output directory");

    std::string gc_config, gc_out;
    auto* gc = app.add_subcommand(
        "gradcheck", "finite-difference check of the gradient at random points");
    gc->add_option("--config", gc_config, "run configuration (JSON)")->required();
    gc->add_option("--out", gc_out, "optional output directory for gradcheck.csv");

    auto* info = app.add_subcommand("info", "print the selected compute kernels");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1; // command-line problems are configuration errors
    }

    if (run->parsed()) return pgd::cmd_run(run_config, run_out, run_verify);
    if (cmp->parsed()) return pgd::cmd_compare(cmp_config, cmp_out);
    if (gc->parsed()) return pgd::cmd_gradcheck(gc_config, gc_out);
    if (info->parsed()) {
        std::cout << "kernels: " << pgd::kernels::active_isa() << "\n";
        return 0;
    }
    return 1;
}
