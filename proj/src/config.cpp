#include "pgd/config.hpp"

#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "pgd/error.hpp"
#include "pgd/io.hpp"
#include "pgd/rng.hpp"

namespace pgd {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

const json& need(const json& obj, const std::string& where, const char* key) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError(where + ": missing key '" + key + "'");
    return *it;
}

double get_num(const json& j, const std::string& where) {
    if (!j.is_number()) throw ConfigError(where + ": expected a number");
    return j.get<double>();
}

int get_int(const json& j, const std::string& where) {
    if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
    return j.get<int>();
}

std::uint64_t get_u64(const json& j, const std::string& where) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
        throw ConfigError(where + ": expected a nonnegative integer");
    return j.get<std::uint64_t>();
}

std::string get_str(const json& j, const std::string& where) {
    if (!j.is_string()) throw ConfigError(where + ": expected a string");
    return j.get<std::string>();
}

bool get_bool(const json& j, const std::string& where) {
    if (!j.is_boolean()) throw ConfigError(where + ": expected a boolean");
    return j.get<bool>();
}

std::string resolve(const std::string& base_dir, const std::string& rel) {
    std::filesystem::path p(rel);
    if (p.is_absolute() || base_dir.empty()) return rel;
    return (std::filesystem::path(base_dir) / p).string();
}

std::vector<double> flatten_matrix(const Eigen::MatrixXd& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    return out;
}

SpacePtr build_space(const json& problem, const std::string& where,
                     const std::string& base_dir) {
    const auto& jd = need(problem, where, "dims");
    if (!jd.is_array() || jd.size() < 2)
        throw ConfigError(where + ".dims: expected an array of at least 2 axis sizes");
    std::vector<int> dims;
    for (std::size_t i = 0; i < jd.size(); ++i)
        dims.push_back(get_int(jd[i], where + ".dims[" + std::to_string(i) + "]"));

    if (!problem.contains("weights"))
        return std::make_shared<const TensorSpace>(TensorSpace::uniform(dims));

    const auto& jw = need(problem, where, "weights");
    const std::string wwhere = where + ".weights";
    const std::string kind = get_str(need(jw, wwhere, "kind"), wwhere + ".kind");
    if (kind == "uniform") {
        check_keys(jw, wwhere, {"kind"});
        return std::make_shared<const TensorSpace>(TensorSpace::uniform(dims));
    }
    if (kind == "file") {
        check_keys(jw, wwhere, {"kind", "paths"});
        const auto& jp = need(jw, wwhere, "paths");
        if (!jp.is_array() || jp.size() != dims.size())
            throw ConfigError(wwhere + ".paths: expected one path per axis");
        std::vector<std::vector<double>> w;
        for (std::size_t k = 0; k < jp.size(); ++k) {
            const auto path = resolve(
                base_dir, get_str(jp[k], wwhere + ".paths[" + std::to_string(k) + "]"));
            w.push_back(flatten_matrix(io::read_matrix_csv(path)));
        }
        return std::make_shared<const TensorSpace>(TensorSpace(dims, std::move(w)));
    }
    throw ConfigError(wwhere + ".kind: unknown kind '" + kind + "'");
}

// ---- field generators (targets, sources, right-hand sides, obstacles) -------------

constexpr int kMaxFiberRank = 4096;

SeparatedTensor build_field_separated(const json& spec, SpacePtr space,
                                      const std::string& where, const std::string& base_dir,
                                      std::size_t cap);

std::vector<double> build_field_dense(const json& spec, SpacePtr space,
                                      const std::string& where, const std::string& base_dir,
                                      std::size_t cap) {
    const std::string kind = get_str(need(spec, where, "kind"), where + ".kind");
    const std::size_t n = space->dense_size();
    if (kind == "constant") {
        check_keys(spec, where, {"kind", "value"});
        return std::vector<double>(n, get_num(need(spec, where, "value"), where + ".value"));
    }
    if (kind == "random_dense") {
        check_keys(spec, where, {"kind", "seed", "scale"});
        const double scale =
            spec.contains("scale") ? get_num(spec["scale"], where + ".scale") : 1.0;
        Rng rng(get_u64(need(spec, where, "seed"), where + ".seed"));
        std::vector<double> out(n);
        for (auto& x : out) x = rng.uniform(-scale, scale);
        return out;
    }
    if (kind == "file_dense") {
        check_keys(spec, where, {"kind", "path"});
        const auto path = resolve(base_dir, get_str(need(spec, where, "path"), where + ".path"));
        return io::read_dense_csv(path, space).values;
    }
    if (kind == "random_cp" || kind == "file_separated") {
        const auto sep = build_field_separated(spec, space, where, base_dir, cap);
        return to_dense_values(sep, cap);
    }
    throw ConfigError(where + ".kind: unknown kind '" + kind + "'");
}

SeparatedTensor build_field_separated(const json& spec, SpacePtr space,
                                      const std::string& where, const std::string& base_dir,
                                      std::size_t cap) {
    const std::string kind = get_str(need(spec, where, "kind"), where + ".kind");
    if (kind == "random_cp") {
        check_keys(spec, where, {"kind", "rank", "seed", "scale"});
        const int rank = get_int(need(spec, where, "rank"), where + ".rank");
        if (rank < 1) throw ConfigError(where + ".rank: must be at least 1");
        const double scale =
            spec.contains("scale") ? get_num(spec["scale"], where + ".scale") : 1.0;
        Rng rng(get_u64(need(spec, where, "seed"), where + ".seed"));
        SeparatedTensor out(space);
        for (int i = 0; i < rank; ++i) {
            auto term = random_rank_one(*space, rng);
            out.append_scaled(rng.uniform(-scale, scale), std::move(term));
        }
        return out;
    }
    if (kind == "file_separated") {
        check_keys(spec, where, {"kind", "path"});
        const auto path = resolve(base_dir, get_str(need(spec, where, "path"), where + ".path"));
        return io::read_separated_json(path, space);
    }
    if (kind == "constant") {
        check_keys(spec, where, {"kind", "value"});
        const double value = get_num(need(spec, where, "value"), where + ".value");
        SeparatedTensor out(space);
        RankOneTensor ones;
        for (int j = 0; j < space->order(); ++j)
            ones.factors.emplace_back(static_cast<std::size_t>(space->dim(j)), 1.0);
        out.append_scaled(value, std::move(ones));
        return out;
    }
    // everything else is generated dense, then converted exactly
    const auto dense = build_field_dense(spec, space, where, base_dir, cap);
    return separated_from_dense(space, dense);
}

// ---- quadratic operators ------------------------------------------------------------

Eigen::MatrixXd tridiag_laplace(int n, double h) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    const double s = 1.0 / (h * h);
    for (int i = 0; i < n; ++i) {
        a(i, i) = 2.0 * s;
        if (i > 0) a(i, i - 1) = -s;
        if (i + 1 < n) a(i, i + 1) = -s;
    }
    return a;
}

std::vector<std::vector<Eigen::MatrixXd>> build_operator(const json& spec, const TensorSpace& space,
                                                         const std::string& where,
                                                         const std::string& base_dir) {
    const std::string kind = get_str(need(spec, where, "kind"), where + ".kind");
    const int d = space.order();
    std::vector<std::vector<Eigen::MatrixXd>> terms;

    if (kind == "identity") {
        check_keys(spec, where, {"kind"});
        std::vector<Eigen::MatrixXd> t;
        for (int j = 0; j < d; ++j)
            t.push_back(Eigen::MatrixXd::Identity(space.dim(j), space.dim(j)));
        terms.push_back(std::move(t));
        return terms;
    }
    if (kind == "laplace") {
        check_keys(spec, where, {"kind", "spacing", "mass"});
        std::vector<double> h(static_cast<std::size_t>(d), 1.0);
        if (spec.contains("spacing")) {
            const auto& js = spec["spacing"];
            if (!js.is_array() || js.size() != static_cast<std::size_t>(d))
                throw ConfigError(where + ".spacing: expected one value per axis");
            for (int j = 0; j < d; ++j) {
                h[static_cast<std::size_t>(j)] =
                    get_num(js[static_cast<std::size_t>(j)],
                            where + ".spacing[" + std::to_string(j) + "]");
                if (!(h[static_cast<std::size_t>(j)] > 0.0))
                    throw ConfigError(where + ".spacing: values must be positive");
            }
        }
        const double mass =
            spec.contains("mass") ? get_num(spec["mass"], where + ".mass") : 0.0;
        if (mass < 0.0) throw ConfigError(where + ".mass: must be >= 0");
        for (int k = 0; k < d; ++k) {
            std::vector<Eigen::MatrixXd> t;
            for (int j = 0; j < d; ++j)
                t.push_back(j == k
                                ? tridiag_laplace(space.dim(j), h[static_cast<std::size_t>(j)])
                                : Eigen::MatrixXd::Identity(space.dim(j), space.dim(j)));
            terms.push_back(std::move(t));
        }
        if (mass > 0.0) {
            std::vector<Eigen::MatrixXd> t;
            t.push_back(mass * Eigen::MatrixXd::Identity(space.dim(0), space.dim(0)));
            for (int j = 1; j < d; ++j)
                t.push_back(Eigen::MatrixXd::Identity(space.dim(j), space.dim(j)));
            terms.push_back(std::move(t));
        }
        return terms;
    }
    if (kind == "random_spd") {
        check_keys(spec, where, {"kind", "terms", "seed"});
        const int nterms = get_int(need(spec, where, "terms"), where + ".terms");
        if (nterms < 1) throw ConfigError(where + ".terms: must be at least 1");
        Rng rng(get_u64(need(spec, where, "seed"), where + ".seed"));
        for (int r = 0; r < nterms; ++r) {
            std::vector<Eigen::MatrixXd> t;
            for (int j = 0; j < d; ++j) {
                const int n = space.dim(j);
                Eigen::MatrixXd S(n, n);
                for (int a = 0; a < n; ++a)
                    for (int b = 0; b < n; ++b) S(a, b) = rng.uniform(-1.0, 1.0);
                // I + S^T S / n is SPD per axis, so the Kronecker product is SPD
                t.push_back(Eigen::MatrixXd::Identity(n, n) +
                            (S.transpose() * S) / static_cast<double>(n));
            }
            terms.push_back(std::move(t));
        }
        return terms;
    }
    if (kind == "file") {
        check_keys(spec, where, {"kind", "terms"});
        const auto& jt = need(spec, where, "terms");
        if (!jt.is_array() || jt.empty())
            throw ConfigError(where + ".terms: expected an array of per-axis path lists");
        for (std::size_t r = 0; r < jt.size(); ++r) {
            const auto& row = jt[r];
            const std::string rwhere = where + ".terms[" + std::to_string(r) + "]";
            if (!row.is_array() || row.size() != static_cast<std::size_t>(d))
                throw ConfigError(rwhere + ": expected one matrix path per axis");
            std::vector<Eigen::MatrixXd> t;
            for (int j = 0; j < d; ++j) {
                const auto path = resolve(
                    base_dir,
                    get_str(row[static_cast<std::size_t>(j)],
                            rwhere + "[" + std::to_string(j) + "]"));
                t.push_back(io::read_matrix_csv(path));
            }
            terms.push_back(std::move(t));
        }
        return terms;
    }
    throw ConfigError(where + ".kind: unknown kind '" + kind + "'");
}

// ---- problems -------------------------------------------------------------------------

std::shared_ptr<const QuadraticFunctional> build_quadratic(const json& problem,
                                                           const std::string& where,
                                                           const std::string& base_dir,
                                                           std::size_t cap) {
    check_keys(problem, where,
               {"type", "dims", "weights", "operator", "rhs", "dense_cap"});
    auto space = build_space(problem, where, base_dir);
    QuadraticOperatorSpec op{build_operator(need(problem, where, "operator"), *space,
                                            where + ".operator", base_dir),
                             build_field_separated(need(problem, where, "rhs"), space,
                                                   where + ".rhs", base_dir, cap)};
    return make_quadratic(std::move(space), std::move(op), cap);
}

FunctionalPtr build_problem(const json& problem, const std::string& where,
                            const std::string& base_dir) {
    const std::string type = get_str(need(problem, where, "type"), where + ".type");
    std::size_t cap = kDefaultDenseCap;
    if (problem.contains("dense_cap")) {
        const int c = get_int(problem["dense_cap"], where + ".dense_cap");
        if (c < 1) throw ConfigError(where + ".dense_cap: must be positive");
        cap = static_cast<std::size_t>(c);
    }

    if (type == "lp_approx") {
        check_keys(problem, where, {"type", "dims", "weights", "p", "target", "dense_cap"});
        auto space = build_space(problem, where, base_dir);
        const double p = get_num(need(problem, where, "p"), where + ".p");
        auto target =
            build_field_dense(need(problem, where, "target"), space, where + ".target",
                              base_dir, cap);
        return make_lp_approx(std::move(space), std::move(target), p, cap);
    }
    if (type == "quadratic") return build_quadratic(problem, where, base_dir, cap);
    if (type == "penalized") {
        check_keys(problem, where, {"type", "base", "obstacle", "epsilon", "dense_cap"});
        auto base = build_quadratic(need(problem, where, "base"), where + ".base", base_dir,
                                    cap);
        PenaltySpec pen;
        pen.obstacle = build_field_dense(need(problem, where, "obstacle"), base->space_ptr(),
                                         where + ".obstacle", base_dir, cap);
        pen.epsilon = get_num(need(problem, where, "epsilon"), where + ".epsilon");
        return make_penalized(std::move(base), std::move(pen));
    }
    if (type == "p_laplacian") {
        check_keys(problem, where, {"type", "dims", "p", "spacing", "source", "dense_cap"});
        const auto& jd = need(problem, where, "dims");
        if (!jd.is_array() || jd.size() < 2)
            throw ConfigError(where + ".dims: expected an array of at least 2 axis sizes");
        std::vector<int> dims;
        for (std::size_t i = 0; i < jd.size(); ++i)
            dims.push_back(get_int(jd[i], where + ".dims[" + std::to_string(i) + "]"));
        const int d = static_cast<int>(dims.size());

        std::vector<double> h(static_cast<std::size_t>(d), 1.0);
        if (problem.contains("spacing")) {
            const auto& js = problem["spacing"];
            if (!js.is_array() || js.size() != static_cast<std::size_t>(d))
                throw ConfigError(where + ".spacing: expected one value per axis");
            for (int j = 0; j < d; ++j) {
                h[static_cast<std::size_t>(j)] = get_num(
                    js[static_cast<std::size_t>(j)],
                    where + ".spacing[" + std::to_string(j) + "]");
                if (!(h[static_cast<std::size_t>(j)] > 0.0))
                    throw ConfigError(where + ".spacing: values must be positive");
            }
        }
        // node weights are the cell sizes; derivative-grid weights likewise
        std::vector<std::vector<double>> w;
        for (int j = 0; j < d; ++j)
            w.emplace_back(static_cast<std::size_t>(dims[static_cast<std::size_t>(j)]),
                           h[static_cast<std::size_t>(j)]);
        auto space = std::make_shared<const TensorSpace>(TensorSpace(dims, std::move(w)));

        PLaplacianSpec spec;
        spec.p = get_num(need(problem, where, "p"), where + ".p");
        for (int j = 0; j < d; ++j) {
            spec.diff.push_back(dirichlet_forward_difference(
                dims[static_cast<std::size_t>(j)], h[static_cast<std::size_t>(j)]));
            spec.diff_weights.emplace_back(
                static_cast<std::size_t>(dims[static_cast<std::size_t>(j)]) + 1,
                h[static_cast<std::size_t>(j)]);
        }
        spec.source = build_field_dense(need(problem, where, "source"), space,
                                        where + ".source", base_dir, cap);
        return make_p_laplacian(std::move(space), std::move(spec), cap);
    }
    throw ConfigError(where + ".type: unknown problem type '" + type + "'");
}

// ---- solver --------------------------------------------------------------------------

void parse_solver(const json& js, const std::string& where, RunConfig& out) {
    check_keys(js, where,
               {"schedule", "max_rank", "als_max_sweeps", "als_rel_tol", "multistarts",
                "outer_stagnation_tol", "zm_norm_tol", "seed", "inner_solver", "r_subspace",
                "r_dim_k", "l_subspace", "timing"});
    out.schedule = Schedule::parse(get_str(need(js, where, "schedule"), where + ".schedule"));
    auto& s = out.solver;
    if (js.contains("max_rank")) s.max_rank = get_int(js["max_rank"], where + ".max_rank");
    if (js.contains("als_max_sweeps"))
        s.als_max_sweeps = get_int(js["als_max_sweeps"], where + ".als_max_sweeps");
    if (js.contains("als_rel_tol"))
        s.als_rel_tol = get_num(js["als_rel_tol"], where + ".als_rel_tol");
    if (js.contains("multistarts"))
        s.multistarts = get_int(js["multistarts"], where + ".multistarts");
    if (js.contains("outer_stagnation_tol"))
        s.outer_stagnation_tol =
            get_num(js["outer_stagnation_tol"], where + ".outer_stagnation_tol");
    if (js.contains("zm_norm_tol"))
        s.zm_norm_tol = get_num(js["zm_norm_tol"], where + ".zm_norm_tol");
    if (js.contains("seed")) s.seed = get_u64(js["seed"], where + ".seed");
    if (js.contains("timing")) s.timing = get_bool(js["timing"], where + ".timing");

    if (js.contains("inner_solver")) {
        const auto v = get_str(js["inner_solver"], where + ".inner_solver");
        using IS = SolverConfig::InnerSolver;
        if (v == "auto") s.inner_solver = IS::auto_select;
        else if (v == "exact_linear") s.inner_solver = IS::exact_linear;
        else if (v == "damped_newton") s.inner_solver = IS::damped_newton;
        else if (v == "gradient_backtracking") s.inner_solver = IS::gradient_backtracking;
        else throw ConfigError(where + ".inner_solver: unknown value '" + v + "'");
    }
    if (js.contains("r_subspace")) {
        const auto v = get_str(js["r_subspace"], where + ".r_subspace");
        if (v == "span_zhat") s.r_subspace = SolverConfig::RSubspace::span_zhat;
        else if (v == "dim_k") s.r_subspace = SolverConfig::RSubspace::dim_k;
        else throw ConfigError(where + ".r_subspace: unknown value '" + v + "'");
    }
    if (js.contains("r_dim_k")) s.r_dim_k = get_int(js["r_dim_k"], where + ".r_dim_k");
    if (js.contains("l_subspace")) {
        const auto v = get_str(js["l_subspace"], where + ".l_subspace");
        if (v == "span_all_terms") s.l_subspace = SolverConfig::LSubspace::span_all_terms;
        else if (v == "dim_sweep") s.l_subspace = SolverConfig::LSubspace::dim_sweep;
        else throw ConfigError(where + ".l_subspace: unknown value '" + v + "'");
    }
}

} // namespace

SeparatedTensor separated_from_dense(SpacePtr space, std::span<const double> values) {
    if (!space) throw ConfigError("separated_from_dense needs a space");
    if (values.size() != space->dense_size())
        throw SpaceMismatchError("separated_from_dense: value count does not match the space");
    const int d = space->order();
    const int n_last = space->dim(d - 1);
    const std::size_t fibers = space->dense_size() / static_cast<std::size_t>(n_last);
    if (fibers > kMaxFiberRank)
        throw SizeCapError("separated_from_dense: " + std::to_string(fibers) +
                           " fibers exceed the CP rank cap of " +
                           std::to_string(kMaxFiberRank));

    SeparatedTensor out(space);
    std::vector<int> idx(static_cast<std::size_t>(d - 1), 0);
    for (std::size_t f = 0; f < fibers; ++f) {
        const double* fiber = values.data() + f * static_cast<std::size_t>(n_last);
        bool nonzero = false;
        for (int a = 0; a < n_last; ++a)
            if (fiber[a] != 0.0) {
                nonzero = true;
                break;
            }
        if (nonzero) {
            RankOneTensor t;
            for (int j = 0; j < d - 1; ++j) {
                std::vector<double> e(static_cast<std::size_t>(space->dim(j)), 0.0);
                e[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])] = 1.0;
                t.factors.push_back(std::move(e));
            }
            t.factors.emplace_back(fiber, fiber + n_last);
            out.append(1.0, std::move(t));
        }
        for (int j = d - 2; j >= 0; --j) {
            if (++idx[static_cast<std::size_t>(j)] < space->dim(j)) break;
            idx[static_cast<std::size_t>(j)] = 0;
        }
    }
    return out;
}

RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    check_keys(j, "config", {"problem", "solver", "compare", "gradcheck"});

    RunConfig out;
    out.functional = build_problem(need(j, "config", "problem"), "problem", base_dir);
    parse_solver(need(j, "config", "solver"), "solver", out);

    if (j.contains("compare")) {
        const auto& jc = j["compare"];
        check_keys(jc, "compare", {"max_rank", "oracle", "epsilon_sweep"});
        if (jc.contains("max_rank"))
            out.compare.max_rank = get_int(jc["max_rank"], "compare.max_rank");
        if (jc.contains("oracle")) {
            out.compare.oracle = get_str(jc["oracle"], "compare.oracle");
            if (out.compare.oracle != "auto" && out.compare.oracle != "svd" &&
                out.compare.oracle != "dense")
                throw ConfigError("compare.oracle: unknown value '" + out.compare.oracle +
                                  "'");
        }
        if (jc.contains("epsilon_sweep")) {
            const auto& je = jc["epsilon_sweep"];
            if (!je.is_array() || je.empty())
                throw ConfigError("compare.epsilon_sweep: expected a non-empty array");
            for (std::size_t i = 0; i < je.size(); ++i) {
                const double e =
                    get_num(je[i], "compare.epsilon_sweep[" + std::to_string(i) + "]");
                if (!(e > 0.0))
                    throw ConfigError("compare.epsilon_sweep: values must be positive");
                out.compare.epsilon_sweep.push_back(e);
            }
        }
    }
    if (j.contains("gradcheck")) {
        const auto& jg = j["gradcheck"];
        check_keys(jg, "gradcheck", {"points", "tol", "seed"});
        if (jg.contains("points"))
            out.gradcheck.points = get_int(jg["points"], "gradcheck.points");
        if (jg.contains("tol")) out.gradcheck.tol = get_num(jg["tol"], "gradcheck.tol");
        if (jg.contains("seed")) out.gradcheck.seed = get_u64(jg["seed"], "gradcheck.seed");
        if (out.gradcheck.points < 1)
            throw ConfigError("gradcheck.points: must be at least 1");
    }
    return out;
}

RunConfig load_run_config(const std::string& path) {
    const auto text = io::read_text_file(path);
    const auto dir = std::filesystem::path(path).parent_path().string();
    return parse_run_config(text, dir);
}

} // namespace pgd
