#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nsql/assign.hpp"
#include "support.hpp"

#include <algorithm>
#include <numeric>

using namespace nsql;

namespace {

CostMatrix matrix(std::initializer_list<std::initializer_list<double>> rows)
{
    RowMatrix m(Index(rows.size()), Index(rows.begin()->size()));
    Index i = 0;
    for (const auto& row : rows) {
        Index k = 0;
        for (double v : row) {
            m(i, k++) = v;
        }
        ++i;
    }
    return CostMatrix(m);
}

CostMatrix random_cost(Index rows, Index cols, std::uint64_t seed, int levels = 0)
{
    Rng rng(seed);
    RowMatrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index k = 0; k < cols; ++k) {
            m(i, k) = levels > 0 ? double(rng.below(std::size_t(levels))) : rng.uniform();
        }
    }
    return CostMatrix(m);
}

struct Exhaustive {
    std::vector<Index> mapping;
    double cost = std::numeric_limits<double>::infinity();
};

// Enumerates column orderings in lexicographic order; the first ordering
// whose leading rows() entries reach the minimum is the canonical answer.
Exhaustive exhaustive(const CostMatrix& c)
{
    std::vector<Index> cols(std::size_t(c.cols()));
    std::iota(cols.begin(), cols.end(), Index(0));
    Exhaustive best;
    do {
        std::vector<Index> head(cols.begin(), cols.begin() + c.rows());
        double total = 0.0;
        for (Index i = 0; i < c.rows(); ++i) {
            total += c.entries(i, head[std::size_t(i)]);
        }
        if (total < best.cost) {
            best.cost = total;
            best.mapping = head;
        }
    } while (std::next_permutation(cols.begin(), cols.end()));
    return best;
}

} // namespace

TEST_CASE("hungarian: small examples")
{
    auto a = solve_hungarian(matrix({{0, 1}, {1, 0}}));
    CHECK(a.mapping == std::vector<Index>{0, 1});
    CHECK(a.total_cost == 0.0);
    CHECK(a.method == AssignMethod::hungarian);

    for (double scale : {1.0, 0.001, 7.5, 1e6}) {
        RowMatrix m(2, 2);
        m << 1, 2, 2, 1;
        a = solve_hungarian(CostMatrix(RowMatrix(m * scale)));
        CHECK(a.mapping == std::vector<Index>{0, 1});
    }

    a = solve_hungarian(matrix({{1, 2}, {1, 10}}));
    CHECK(a.mapping == std::vector<Index>{1, 0});
    CHECK(a.total_cost == 3.0);

    a = solve_hungarian(matrix({{4}}));
    CHECK(a.mapping == std::vector<Index>{0});
    CHECK(a.total_cost == 4.0);
}

TEST_CASE("greedy: small examples")
{
    auto a = solve_greedy(matrix({{0, 1}, {1, 0}}));
    CHECK(a.mapping == std::vector<Index>{0, 1});
    CHECK(a.total_cost == 0.0);

    a = solve_greedy(matrix({{1, 2}, {1, 10}}));
    CHECK(a.mapping == std::vector<Index>{0, 1});
    CHECK(a.total_cost == 11.0);
    CHECK(a.method == AssignMethod::greedy);

    // Ties go to the lowest column.
    a = solve_greedy(matrix({{3, 3, 3}, {2, 2, 2}, {1, 1, 1}}));
    CHECK(a.mapping == std::vector<Index>{0, 1, 2});
}

TEST_CASE("brute force: examples and limits")
{
    CHECK(solve_brute_force(matrix({{5}})).mapping == std::vector<Index>{0});
    const auto a = solve_brute_force(matrix({{0, 1}, {1, 0}}));
    CHECK(a.mapping == std::vector<Index>{0, 1});
    CHECK(a.total_cost == 0.0);
    CHECK(a.method == AssignMethod::brute_force);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto c = random_cost(7, 7, seed);
        CHECK(solve_brute_force(c).total_cost <= solve_greedy(c).total_cost);
    }
    CHECK_THROWS_AS(solve_brute_force(random_cost(10, 10, 0)), CapacityError);
    CHECK_THROWS_AS(solve_brute_force(random_cost(3, 4, 0)), ShapeError);
}

TEST_CASE("hungarian equals exhaustive search")
{
    int checked = 0;
    for (Index n = 2; n <= 8; ++n) {
        for (std::uint64_t seed = 0; seed < 80; ++seed) {
            const auto c = random_cost(n, n, 1000 * std::uint64_t(n) + seed);
            const auto h = solve_hungarian(c);
            const auto b = solve_brute_force(c);
            CHECK(h.total_cost == b.total_cost);
            CHECK(h.mapping == b.mapping);
            ++checked;
        }
    }
    CHECK(checked >= 500);

    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto c = random_cost(6, 6, seed);
        const auto ex = exhaustive(c);
        const auto h = solve_hungarian(c);
        CHECK(h.total_cost == ex.cost);
        CHECK(h.mapping == ex.mapping);
        CHECK(solve_greedy(c).total_cost >= h.total_cost);
    }
}

TEST_CASE("hungarian: ties resolve to the lexicographically smallest mapping")
{
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        const Index n = 2 + Index(seed % 6);
        const auto c = random_cost(n, n, seed, 3);
        const auto ex = exhaustive(c);
        const auto h = solve_hungarian(c);
        CAPTURE(seed);
        CHECK(h.mapping == ex.mapping);
        CHECK(h.total_cost == ex.cost);
        CHECK(solve_brute_force(c).mapping == ex.mapping);
    }
    const auto zero = solve_hungarian(CostMatrix(RowMatrix::Zero(5, 5)));
    CHECK(zero.mapping == std::vector<Index>{0, 1, 2, 3, 4});
}

TEST_CASE("hungarian: rectangular inputs")
{
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Index rows = 1 + Index(seed % 4);
        const Index cols = rows + 1 + Index(seed % 3);
        const auto c = random_cost(rows, cols, seed + 77);
        const auto ex = exhaustive(c);
        const auto h = solve_hungarian(c);
        CHECK(h.mapping.size() == std::size_t(rows));
        CHECK(is_injective(h.mapping, cols));
        CHECK(h.total_cost == doctest::Approx(ex.cost).epsilon(1e-12));
        CHECK(h.mapping == ex.mapping);
        CHECK(solve_greedy(c).total_cost >= h.total_cost);
    }
    CHECK_THROWS_AS(solve_hungarian(random_cost(3, 2, 0)), ShapeError);
}

TEST_CASE("injectivity and cost bookkeeping for every solver")
{
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Index n = 2 + Index(seed % 7);
        const auto c = random_cost(n, n, seed * 3 + 1);
        for (auto method : {AssignMethod::hungarian, AssignMethod::greedy, AssignMethod::brute_force}) {
            const auto a = solve(c, method);
            CHECK(a.method == method);
            CHECK(is_injective(a.mapping, n));
            CHECK(std::abs(a.total_cost - assignment_cost(c, a.mapping)) <= 1e-9);
        }
    }
    CHECK_FALSE(is_injective({0, 0}, 2));
    CHECK_FALSE(is_injective({0, 2}, 2));
    CHECK(is_injective({1, 0}, 2));
}

TEST_CASE("hungarian: scale equivariance")
{
    Rng rng(4);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto c = random_cost(12, 12, seed);
        const double scale = std::exp(8.0 * (rng.uniform() - 0.5));
        const auto a = solve_hungarian(c);
        const auto b = solve_hungarian(CostMatrix(RowMatrix(c.entries * scale)));
        CHECK(a.mapping == b.mapping);
    }
}

TEST_CASE("hungarian: row permutation equivariance")
{
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Index n = 3 + Index(seed % 30);
        const auto c = random_cost(n, n, seed + 500);
        const auto sigma = Rng(seed).permutation(n);
        RowMatrix permuted(n, n);
        for (Index i = 0; i < n; ++i) {
            permuted.row(i) = c.entries.row(sigma[std::size_t(i)]);
        }
        const auto a = solve_hungarian(c);
        const auto b = solve_hungarian(CostMatrix(permuted));
        for (Index i = 0; i < n; ++i) {
            CHECK(b.mapping[std::size_t(i)] == a.mapping[std::size_t(sigma[std::size_t(i)])]);
        }
    }
}

TEST_CASE("hungarian: larger instances admit no improving two-row swap")
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto c = random_cost(200, 200, seed);
        const auto h = solve_hungarian(c);
        CHECK(solve_greedy(c).total_cost >= h.total_cost);
        double best_swap = 0.0;
        for (Index i = 0; i < 200; ++i) {
            for (Index j = i + 1; j < 200; ++j) {
                const Index a = h.mapping[std::size_t(i)];
                const Index b = h.mapping[std::size_t(j)];
                const double delta = c.entries(i, b) + c.entries(j, a) - c.entries(i, a) - c.entries(j, b);
                best_swap = std::min(best_swap, delta);
            }
        }
        CHECK(best_swap >= -1e-12);
    }
}

TEST_CASE("cost matrix validation")
{
    CHECK_THROWS_AS(matrix({{1, -1}, {0, 0}}).validate(), NumericError);
    CHECK_THROWS_AS(matrix({{1, std::numeric_limits<double>::infinity()}, {0, 0}}).validate(), NumericError);
    CHECK_THROWS_AS(solve_greedy(matrix({{1, -1}, {0, 0}})), NumericError);
    CHECK_NOTHROW(matrix({{0, 1}}).validate());
}

TEST_CASE("build_cost_matrix examples")
{
    Decoder identity;
    identity.layers.push_back({Matrix::Identity(3, 3), Vector::Zero(3)});
    identity.output_activation = OutputActivation::identity;
    const RowMatrix data = test::random_matrix(5, 3, 1);
    LossSpec l2;
    const auto c = build_cost_matrix(data, identity, data, l2);
    CHECK(c.rows() == 5);
    CHECK(c.cols() == 5);
    for (Index i = 0; i < 5; ++i) {
        CHECK(c.entries(i, i) == 0.0);
    }

    const auto one = build_cost_matrix(data.topRows(1), identity, data.bottomRows(1), l2);
    CHECK(one.entries(0, 0) == loss(l2, data.row(0).transpose(), data.row(4).transpose()));
}

TEST_CASE("build_cost_matrix equals entrywise composition")
{
    for (auto kind : {LossKind::l2, LossKind::l1, LossKind::ssim_l1}) {
        LossSpec spec;
        spec.kind = kind;
        spec.image_shape = ImageShape{4, 4, 1};
        spec.window = 3;
        const Decoder params = make_decoder(2, {8}, 16, Activation::relu, OutputActivation::sigmoid, 3);
        const RowMatrix data = test::random_matrix(3, 16, 2);
        const RowMatrix lattice = test::random_matrix(3, 2, 5);
        const auto c = build_cost_matrix(data, params, lattice, spec);
        for (Index i = 0; i < 3; ++i) {
            for (Index k = 0; k < 3; ++k) {
                const Vector decoded = forward(params, Vector(lattice.row(k).transpose()));
                CHECK(c.entries(i, k) == doctest::Approx(loss(spec, data.row(i).transpose(), decoded)).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("build_cost_matrix: dimension mismatch and non-finite entries")
{
    const Decoder params = make_decoder(2, {4}, 3, Activation::relu, OutputActivation::identity, 0);
    CHECK_THROWS_AS(build_cost_matrix(test::random_matrix(2, 4, 0), params, test::random_matrix(2, 2, 1), LossSpec{}),
                    ShapeError);
    CHECK_THROWS_AS(build_cost_matrix(test::random_matrix(2, 3, 0), params, test::random_matrix(2, 3, 1), LossSpec{}),
                    ShapeError);
    RowMatrix data = test::random_matrix(2, 3, 0);
    data(1, 2) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(build_cost_matrix(data, params, test::random_matrix(2, 2, 1), LossSpec{}),
                         doctest::Contains("(1, 0)"), NumericError);
}

TEST_CASE("bench_assign")
{
    const auto tiny = bench_assign(2, {AssignMethod::hungarian, AssignMethod::greedy}, 1, 0);
    REQUIRE(tiny.size() == 2);
    for (const auto& r : tiny) {
        CHECK(std::isfinite(r.mean_ms));
        CHECK(r.mean_ms >= 0.0);
        CHECK(r.std_ms == 0.0);
        CHECK(r.n == 2);
    }
    const auto mid = bench_assign(512, {AssignMethod::hungarian, AssignMethod::greedy}, 3, 0);
    CHECK(mid[1].mean_ms < mid[0].mean_ms);
    CHECK_THROWS_AS(bench_assign(1, {AssignMethod::greedy}, 1, 0), InputError);
}

TEST_CASE("assign method names")
{
    for (auto m : {AssignMethod::hungarian, AssignMethod::greedy, AssignMethod::brute_force}) {
        CHECK(parse_assign_method(to_string(m)) == m);
    }
    CHECK_THROWS_AS(parse_assign_method("auction"), ConfigError);
}
