#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "pgd/error.hpp"
#include "pgd/rng.hpp"
#include "pgd/tensor.hpp"

using namespace pgd;

namespace {

SpacePtr uniform_space(std::vector<int> dims) {
    return std::make_shared<const TensorSpace>(TensorSpace::uniform(std::move(dims)));
}

RankOneTensor r1(std::vector<std::vector<double>> f) { return RankOneTensor(std::move(f)); }

} // namespace

TEST_CASE("space validation") {
    CHECK_THROWS_AS(TensorSpace::uniform({5}), ConfigError);          // needs d >= 2
    CHECK_THROWS_AS(TensorSpace::uniform({3, 0}), ConfigError);       // empty axis
    CHECK_THROWS_AS(TensorSpace({2, 2}, {{1.0, 1.0}, {1.0, -1.0}}), ConfigError);
    CHECK_THROWS_AS(TensorSpace({2, 2}, {{1.0, 1.0}, {1.0}}), ConfigError);

    const auto s = TensorSpace::uniform({3, 4, 5});
    CHECK(s.order() == 3);
    CHECK(s.dense_size() == 60);
    CHECK(s.weights(1) == std::vector<double>(4, 1.0));
}

TEST_CASE("rank-one expansion: (1,0) x (0,1) lands on entry (0,1)") {
    std::vector<double> out(4, 0.0);
    accumulate_rank_one(out, 1.0, {{1.0, 0.0}, {0.0, 1.0}});
    CHECK(out == std::vector<double>{0.0, 1.0, 0.0, 0.0});
}

TEST_CASE("separated expansion and weighted inner product") {
    auto space = uniform_space({2, 2});
    SeparatedTensor u(space);
    u.append(3.0, r1({{1.0, 0.0}, {1.0, 0.0}})); // 3 e1 x e1
    u.append(1.0, r1({{0.0, 1.0}, {0.0, 1.0}})); // e2 x e2
    const auto dense = to_dense_values(u);
    CHECK(dense == std::vector<double>{3.0, 0.0, 0.0, 1.0});
    CHECK(weighted_inner(u, u) == 10.0); // 9 + 1
    CHECK(entry(u, {0, 0}) == 3.0);
    CHECK(entry(u, {1, 1}) == 1.0);
    CHECK(entry(u, {0, 1}) == 0.0);

    // the factorwise path must agree with the dense pairing
    CHECK(weighted_inner_dense(*space, dense, dense) == 10.0);
}

TEST_CASE("weighted inner respects the measure") {
    const TensorSpace s({2, 2}, {{2.0, 1.0}, {0.5, 1.0}});
    auto space = std::make_shared<const TensorSpace>(s);
    SeparatedTensor a(space), b(space);
    a.append(1.0, r1({{1.0, 1.0}, {1.0, 1.0}}));
    b.append(1.0, r1({{1.0, 0.0}, {1.0, 0.0}}));
    // only entry (0,0) contributes: w = 2 * 0.5 = 1
    CHECK(weighted_inner(a, b) == 1.0);
    // full mass: (2+1)*(0.5+1) = 4.5
    CHECK(weighted_inner(a, a) == 4.5);
}

TEST_CASE("discrete lp norm: all-ones 2x2 with p=4 is sqrt(2)") {
    auto space = uniform_space({2, 2});
    SeparatedTensor u(space);
    u.append(1.0, r1({{1.0, 1.0}, {1.0, 1.0}}));
    CHECK(discrete_lp_norm(u, 4.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(discrete_lp_norm(u, 2.0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(discrete_lp_norm(u, 1.0) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("crossnorm: ||a x b|| = ||a|| ||b|| in the weighted 2-norm") {
    const TensorSpace s({3, 4}, {{0.5, 1.0, 2.0}, {1.0, 1.5, 0.25, 1.0}});
    auto space = std::make_shared<const TensorSpace>(s);
    Rng rng(3);
    auto t = random_rank_one(*space, rng);
    SeparatedTensor u(space);
    u.append(1.0, t);
    double fnorms = 1.0;
    for (int j = 0; j < 2; ++j) {
        double q = 0.0;
        for (int i = 0; i < s.dim(j); ++i)
            q += s.weights(j)[static_cast<std::size_t>(i)] *
                 t.factors[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] *
                 t.factors[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
        fnorms *= std::sqrt(q);
    }
    CHECK(discrete_lp_norm(u, 2.0) == doctest::Approx(fnorms).epsilon(1e-13));
}

TEST_CASE("balance equalizes factor norms and preserves the tensor") {
    RankOneTensor t = r1({{4.0, 0.0}, {0.0, 0.25}});
    std::vector<double> before(4, 0.0);
    accumulate_rank_one(before, 1.0, t.factors);
    t.balance();
    const auto norms = t.factor_norms();
    CHECK(norms[0] == doctest::Approx(norms[1]).epsilon(1e-14));
    std::vector<double> after(4, 0.0);
    accumulate_rank_one(after, 1.0, t.factors);
    for (int i = 0; i < 4; ++i)
        CHECK(after[static_cast<std::size_t>(i)] ==
              doctest::Approx(before[static_cast<std::size_t>(i)]).epsilon(1e-14));

    RankOneTensor z = r1({{0.0, 0.0}, {1.0, 2.0}});
    z.balance(); // a zero factor zeroes everything
    CHECK(z.is_zero());
    CHECK(z.factors[1] == std::vector<double>{0.0, 0.0});
}

TEST_CASE("append_scaled folds the scalar and keeps the sign in the coefficient") {
    auto space = uniform_space({2, 2});
    SeparatedTensor u(space);
    u.append_scaled(-8.0, r1({{1.0, 0.0}, {2.0, 0.0}}));
    CHECK(u.rank() == 1);
    CHECK(u.coeff(0) == -1.0);
    const auto norms = u.term(0).factor_norms();
    CHECK(norms[0] == doctest::Approx(norms[1]).epsilon(1e-14));
    CHECK(entry(u, {0, 0}) == doctest::Approx(-16.0).epsilon(1e-14));

    u.append_scaled(0.0, r1({{1.0, 1.0}, {1.0, 1.0}}));
    CHECK(u.coeff(1) == 0.0);
    CHECK(u.term(1).is_zero());
}

TEST_CASE("shape mismatches are rejected") {
    auto space = uniform_space({2, 3});
    SeparatedTensor u(space);
    CHECK_THROWS_AS(u.append(1.0, r1({{1.0, 0.0}, {1.0, 0.0}})), SpaceMismatchError);
    CHECK_THROWS_AS(u.append(1.0, r1({{1.0, 0.0}})), SpaceMismatchError);
    u.append(1.0, r1({{1.0, 0.0}, {1.0, 0.0, 0.0}}));
    CHECK_THROWS_AS(weighted_inner(u, SeparatedTensor(uniform_space({3, 2}))),
                    SpaceMismatchError);
}

TEST_CASE("dense cap refuses oversized expansions") {
    auto space = uniform_space({300, 300, 300}); // 2.7e7 entries
    SeparatedTensor u(space);
    Rng rng(1);
    u.append(1.0, random_rank_one(*space, rng));
    CHECK_THROWS_AS(to_dense_values(u), SizeCapError);
    CHECK_THROWS_AS(discrete_lp_norm(u, 3.0), SizeCapError);
    CHECK(weighted_inner(u, u) > 0.0); // factorwise path has no cap
}

TEST_CASE("minimal subspace ranks of a generic rank-3 cp tensor are (3,3,3)") {
    auto space = uniform_space({6, 6, 6});
    Rng rng(17);
    SeparatedTensor u(space);
    for (int i = 0; i < 3; ++i) u.append(1.0, random_rank_one(*space, rng));
    CHECK(minimal_subspace_ranks(u) == std::vector<int>{3, 3, 3});

    // duplicating a term must not raise the ranks
    SeparatedTensor v = u;
    v.append(2.0, u.term(0));
    CHECK(minimal_subspace_ranks(v) == std::vector<int>{3, 3, 3});

    const auto subs = minimal_subspaces(u);
    for (const auto& s : subs) {
        CHECK(s.exact);
        CHECK(s.rank == 3);
        // orthonormal columns
        const Eigen::MatrixXd gram = s.basis.transpose() * s.basis;
        CHECK((gram - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-10);
    }
}

TEST_CASE("mode-2 rank drops when the third factors are shared") {
    auto space = uniform_space({5, 5, 5});
    Rng rng(23);
    const auto shared = random_rank_one(*space, rng).factors[2];
    SeparatedTensor u(space);
    for (int i = 0; i < 3; ++i) {
        auto t = random_rank_one(*space, rng);
        t.factors[2] = shared;
        u.append(1.0, t);
    }
    CHECK(minimal_subspace_ranks(u) == std::vector<int>{3, 3, 1});
}

TEST_CASE("apply_mode acts along the right axis") {
    // 2x3 array, multiply axis 1 by a 2x3 matrix -> 2x2
    const std::vector<int> dims{2, 3};
    const std::vector<double> vals{1, 2, 3, 4, 5, 6}; // rows (1,2,3), (4,5,6)
    Eigen::MatrixXd M(2, 3);
    M << 1, 0, 0, 0, 0, 1; // picks entries 0 and 2 of each fiber
    const auto out = apply_mode(vals, dims, 1, M);
    CHECK(out == std::vector<double>{1, 3, 4, 6});

    Eigen::MatrixXd L(1, 2);
    L << 1, 1; // sums along axis 0
    const auto col = apply_mode(vals, dims, 0, L);
    CHECK(col == std::vector<double>{5, 7, 9});
}

TEST_CASE("random_rank_one is deterministic per seed") {
    auto space = uniform_space({4, 3});
    Rng a(99), b(99);
    const auto t1 = random_rank_one(*space, a);
    const auto t2 = random_rank_one(*space, b);
    CHECK(t1.factors == t2.factors);
    for (const auto& f : t1.factors)
        for (double x : f) {
            CHECK(x >= -1.0);
            CHECK(x < 1.0);
        }
}
