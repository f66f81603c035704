#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <vector>

#include "pgd/error.hpp"
#include "pgd/functional.hpp"
#include "pgd/oracle.hpp"
#include "pgd/rng.hpp"
#include "pgd/tensor.hpp"

using namespace pgd;

namespace {

SpacePtr uniform_space(std::vector<int> dims) {
    return std::make_shared<const TensorSpace>(TensorSpace::uniform(std::move(dims)));
}

DenseTensor random_matrix(int n1, int n2, std::uint64_t seed) {
    DenseTensor t{uniform_space({n1, n2}), {}};
    t.values.resize(static_cast<std::size_t>(n1 * n2));
    Rng rng(seed);
    for (auto& x : t.values) x = rng.uniform(-1.0, 1.0);
    return t;
}

double frob2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

} // namespace

TEST_CASE("scalar ellipticity scan pins the known constants") {
    CHECK(scalar_ellipticity_scan(2.0, 101) == 1.0); // ratio is identically 1
    CHECK(scalar_ellipticity_scan(4.0, 201) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(scalar_ellipticity_scan(3.0, 401) == doctest::Approx(0.5).epsilon(0.01));
    CHECK(scalar_ellipticity_scan(6.0, 201) ==
          doctest::Approx(std::pow(2.0, -4.0)).epsilon(1e-10));
    CHECK_THROWS_AS(scalar_ellipticity_scan(1.5, 101), ConfigError);
}

TEST_CASE("monotonicity ratio: exact p=2, scale invariance, symmetry") {
    CHECK(monotonicity_ratio(0.7, -0.3, 2.0) == 1.0);
    CHECK(monotonicity_ratio(5.0, 1.0, 2.0) == 1.0);
    CHECK(monotonicity_ratio(1.0, -1.0, 4.0) == 0.25);

    Rng rng(11);
    for (int i = 0; i < 20; ++i) {
        const double s = rng.uniform(-2.0, 2.0);
        const double t = rng.uniform(-2.0, 2.0);
        if (std::fabs(s - t) < 1e-6) continue;
        for (double p : {2.5, 3.0, 4.0}) {
            const double r = monotonicity_ratio(s, t, p);
            CHECK(r == doctest::Approx(monotonicity_ratio(t, s, p)).epsilon(1e-12));
            for (double lam : {0.1, 10.0})
                CHECK(monotonicity_ratio(lam * s, lam * t, p) ==
                      doctest::Approx(r).epsilon(1e-10));
            CHECK(r > 0.0);
            // global scalar lower bound, attained at s = -t
            CHECK(r >= std::pow(2.0, 2.0 - p) - 1e-12);
        }
    }
}

TEST_CASE("truncated svd: spectrum recovers the Frobenius mass") {
    const auto M = random_matrix(6, 9, 3);
    const auto res = truncated_svd(M, 3);
    double sum2 = 0.0;
    for (double s : res.singular_values) sum2 += s * s;
    CHECK(sum2 == doctest::Approx(frob2(M.values)).epsilon(1e-12));
    CHECK(static_cast<int>(res.singular_values.size()) == 6);
    for (std::size_t i = 1; i < res.singular_values.size(); ++i)
        CHECK(res.singular_values[i] <= res.singular_values[i - 1]);

    // orthonormal factors
    const Eigen::MatrixXd gu = res.U.transpose() * res.U;
    const Eigen::MatrixXd gv = res.V.transpose() * res.V;
    CHECK((gu - Eigen::MatrixXd::Identity(gu.rows(), gu.cols())).norm() < 1e-10);
    CHECK((gv - Eigen::MatrixXd::Identity(gv.rows(), gv.cols())).norm() < 1e-10);

    // tail identity: ||M - M_m||_F^2 = sum_{k>m} sigma_k^2
    std::vector<double> diff = M.values;
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= res.approx[i];
    double tail = 0.0;
    for (std::size_t k = 3; k < res.singular_values.size(); ++k)
        tail += res.singular_values[k] * res.singular_values[k];
    CHECK(frob2(diff) == doctest::Approx(tail).epsilon(1e-10));
}

TEST_CASE("truncated svd: reconstruction, edge ranks, input validation") {
    const auto M = random_matrix(5, 4, 7);

    const auto full = truncated_svd(M, 4);
    std::vector<double> diff = M.values;
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= full.approx[i];
    CHECK(std::sqrt(frob2(diff)) < 1e-12);

    const auto none = truncated_svd(M, 0);
    CHECK(frob2(none.approx) == 0.0);

    // m beyond min(n1,n2) saturates
    const auto over = truncated_svd(M, 10);
    CHECK(over.m == 4);

    // identity: all singular values are 1
    DenseTensor I{uniform_space({2, 2}), {1.0, 0.0, 0.0, 1.0}};
    const auto ri = truncated_svd(I, 1);
    CHECK(ri.singular_values == std::vector<double>{1.0, 1.0});

    DenseTensor cube{uniform_space({2, 2, 2}), std::vector<double>(8, 1.0)};
    CHECK_THROWS_AS(truncated_svd(cube, 1), ConfigError);
    CHECK_THROWS_AS(truncated_svd(M, -1), ConfigError);
}

TEST_CASE("truncated svd beats random rank-m approximations") {
    const auto M = random_matrix(7, 7, 13);
    const auto res = truncated_svd(M, 2);
    std::vector<double> diff = M.values;
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= res.approx[i];
    const double best = frob2(diff);

    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd A(7, 2), B(7, 2);
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 2; ++j) {
                A(i, j) = rng.uniform(-1.0, 1.0);
                B(i, j) = rng.uniform(-1.0, 1.0);
            }
        const Eigen::MatrixXd R = A * B.transpose();
        double err = 0.0;
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 7; ++j) {
                const double d = M.values[static_cast<std::size_t>(i * 7 + j)] - R(i, j);
                err += d * d;
            }
        CHECK(best <= err + 1e-12);
    }
}

TEST_CASE("dense minimizer: quadratic lands on the linear-system solution") {
    auto space = uniform_space({3, 4});
    const auto tridiag = [](int n) {
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            A(i, i) = 2.0;
            if (i > 0) A(i, i - 1) = -1.0;
            if (i + 1 < n) A(i, i + 1) = -1.0;
        }
        return A;
    };
    Rng rng(19);
    SeparatedTensor f(space);
    f.append(1.0, random_rank_one(*space, rng));
    f.append(0.5, random_rank_one(*space, rng));
    QuadraticOperatorSpec op{{{tridiag(3), Eigen::MatrixXd::Identity(4, 4)},
                              {Eigen::MatrixXd::Identity(3, 3), tridiag(4)}},
                             f};
    auto J = make_quadratic(space, std::move(op));

    const auto res = dense_minimize(*J);
    CHECK(res.converged);
    CHECK(res.grad_norm <= 1e-10 * (1.0 + std::fabs(res.value)));

    // the Euler equation is A u = f in the plain dense sense, weights cancel
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(12, 12);
    const auto k1 = tridiag(3), k2 = tridiag(4);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            A.block(4 * i, 4 * j, 4, 4) +=
                k1(i, j) * Eigen::MatrixXd::Identity(4, 4) +
                (i == j ? k2 : Eigen::MatrixXd::Zero(4, 4));
    const auto fd = to_dense_values(f);
    const Eigen::VectorXd fe = Eigen::Map<const Eigen::VectorXd>(fd.data(), 12);
    const Eigen::VectorXd u = A.ldlt().solve(fe);
    for (int i = 0; i < 12; ++i)
        CHECK(res.minimizer[static_cast<std::size_t>(i)] ==
              doctest::Approx(u(i)).epsilon(1e-10));
}

TEST_CASE("dense minimizer: lp approximation drives J to zero at the target") {
    auto space = uniform_space({3, 3});
    std::vector<double> target(9);
    Rng rng(23);
    for (auto& x : target) x = rng.uniform(-1.0, 1.0);
    auto J = make_lp_approx(space, target, 3.0);

    const auto res = dense_minimize(*J);
    CHECK(res.converged);
    CHECK(res.value < 1e-12);
    for (int i = 0; i < 9; ++i)
        CHECK(std::fabs(res.minimizer[static_cast<std::size_t>(i)] -
                        target[static_cast<std::size_t>(i)]) < 1e-3);
}

TEST_CASE("dense minimizer: penalized obstacle matches the per-node closed form") {
    // identity base on a uniform grid makes the problem separable per node:
    // unconstrained minimum is f; below the obstacle it moves to (eps f + g)/(eps + 1)
    auto space = uniform_space({2, 2});
    std::vector<double> fvals{1.0, -1.0, 0.5, -0.25};
    SeparatedTensor f = [&] {
        SeparatedTensor t(space);
        t.append(1.0, RankOneTensor({{1.0, 0.0}, {1.0, -1.0}}));
        t.append(1.0, RankOneTensor({{0.0, 1.0}, {0.5, -0.25}}));
        return t;
    }();
    REQUIRE(to_dense_values(f) == fvals);
    QuadraticOperatorSpec op{{{Eigen::MatrixXd::Identity(2, 2),
                               Eigen::MatrixXd::Identity(2, 2)}},
                             f};
    auto base = make_quadratic(space, std::move(op));
    const double eps = 0.01;
    const double g = 0.0;
    auto J = make_penalized(base, {std::vector<double>(4, g), eps});

    const auto res = dense_minimize(*J);
    CHECK(res.converged);
    for (int i = 0; i < 4; ++i) {
        const double fi = fvals[static_cast<std::size_t>(i)];
        const double expect = fi >= g ? fi : (eps * fi + g) / (eps + 1.0);
        CHECK(res.minimizer[static_cast<std::size_t>(i)] ==
              doctest::Approx(expect).epsilon(1e-8));
    }
}

TEST_CASE("dense minimizer: gradient descent agrees with newton on a small problem") {
    auto space = uniform_space({2, 3});
    std::vector<double> target{0.4, -0.2, 0.1, 0.0, 0.3, -0.5};
    auto J = make_lp_approx(space, target, 4.0);

    OracleConfig newton;
    const auto rn = dense_minimize(*J, newton);
    OracleConfig gd;
    gd.method = OracleConfig::Method::backtracking_gd;
    gd.max_iters = 200000;
    gd.grad_tol = 1e-8;
    const auto rg = dense_minimize(*J, gd);
    CHECK(rn.converged);
    CHECK(rg.converged);
    CHECK(rg.value == doctest::Approx(rn.value).epsilon(1e-6));
}

TEST_CASE("finite-difference gradient check reports honest errors") {
    auto space = uniform_space({3, 3});
    std::vector<double> target(9, 0.25);
    auto J = make_lp_approx(space, target, 3.0);
    Rng rng(29);
    SeparatedTensor v(space);
    v.append(1.0, random_rank_one(*space, rng));

    const auto good = fd_grad_check(*J, v, 5, 31);
    CHECK(good.max_rel_err < 1e-7);
    CHECK(static_cast<int>(good.per_direction.size()) == 5);
    CHECK(good.h > 0.0);
    for (double e : good.per_direction) CHECK(e <= good.max_rel_err);
}
