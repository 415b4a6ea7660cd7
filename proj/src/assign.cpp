#include "nsql/assign.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace nsql {

std::string to_string(AssignMethod method)
{
    switch (method) {
    case AssignMethod::hungarian:
        return "hungarian";
    case AssignMethod::greedy:
        return "greedy";
    case AssignMethod::brute_force:
        return "brute_force";
    }
    return "?";
}

AssignMethod parse_assign_method(const std::string& name)
{
    if (name == "hungarian") {
        return AssignMethod::hungarian;
    }
    if (name == "greedy") {
        return AssignMethod::greedy;
    }
    if (name == "brute_force") {
        return AssignMethod::brute_force;
    }
    throw ConfigError("unknown assignment method '" + name + "' (expected hungarian, greedy or brute_force)");
}

void CostMatrix::validate() const
{
    if (rows() < 1) {
        throw ShapeError("cost matrix has no rows");
    }
    if (rows() > cols()) {
        throw ShapeError("cost matrix has more rows (" + std::to_string(rows()) + ") than columns (" +
                         std::to_string(cols()) + ")");
    }
    for (Index i = 0; i < rows(); ++i) {
        for (Index k = 0; k < cols(); ++k) {
            const double c = entries(i, k);
            if (!std::isfinite(c) || c < 0.0) {
                throw NumericError("cost matrix entry (" + std::to_string(i) + ", " + std::to_string(k) +
                                   ") = " + std::to_string(c) + " is not finite and nonnegative");
            }
        }
    }
}

double assignment_cost(const CostMatrix& cost, const std::vector<Index>& mapping)
{
    double total = 0.0;
    for (std::size_t i = 0; i < mapping.size(); ++i) {
        total += cost.entries(Index(i), mapping[i]);
    }
    return total;
}

bool is_injective(const std::vector<Index>& mapping, Index n_cols)
{
    std::vector<char> used(std::size_t(n_cols), 0);
    for (Index k : mapping) {
        if (k < 0 || k >= n_cols || used[std::size_t(k)]) {
            return false;
        }
        used[std::size_t(k)] = 1;
    }
    return true;
}

CostMatrix build_cost_matrix(const RowMatrix& data, const RowMatrix& decoded, const LossSpec& loss)
{
    if (data.cols() != decoded.cols()) {
        throw ShapeError("cost matrix: data width " + std::to_string(data.cols()) + " != decoder output width " +
                         std::to_string(decoded.cols()));
    }
    const PairwiseLoss pairwise(loss, decoded);
    RowMatrix entries(data.rows(), decoded.rows());
    parallel_for(data.rows(), [&](Index begin, Index end) {
        for (Index i = begin; i < end; ++i) {
            pairwise.row(data.row(i).transpose(), entries.row(i).data());
        }
    });
    CostMatrix cost(std::move(entries));
    for (Index i = 0; i < cost.rows(); ++i) {
        for (Index k = 0; k < cost.cols(); ++k) {
            if (!std::isfinite(cost.entries(i, k))) {
                throw NumericError("non-finite loss at cost entry (" + std::to_string(i) + ", " +
                                   std::to_string(k) + ")");
            }
        }
    }
    return cost;
}

CostMatrix build_cost_matrix(const RowMatrix& data, const Decoder& params, const RowMatrix& lattice,
                             const LossSpec& loss)
{
    if (lattice.cols() != params.input_dim()) {
        throw ShapeError("cost matrix: lattice dimension " + std::to_string(lattice.cols()) +
                         " != decoder input width " + std::to_string(params.input_dim()));
    }
    if (data.cols() != params.output_dim()) {
        throw ShapeError("cost matrix: data width " + std::to_string(data.cols()) + " != decoder output width " +
                         std::to_string(params.output_dim()));
    }
    return build_cost_matrix(data, forward(params, lattice), loss);
}

namespace {

constexpr double infinity = std::numeric_limits<double>::infinity();

// Dense square LAP. Column reduction with reduction transfer, then one
// Dijkstra-style shortest augmenting path per free row. On return
// c(i, row_sol[i]) - v[row_sol[i]] = min_j (c(i, j) - v[j]) for every row.
void jonker_volgenant(const RowMatrix& c, std::vector<Index>& row_sol, std::vector<Index>& col_sol,
                      std::vector<double>& v)
{
    const Index n = c.rows();
    row_sol.assign(std::size_t(n), -1);
    col_sol.assign(std::size_t(n), -1);
    v.assign(std::size_t(n), 0.0);
    std::vector<int> matches(std::size_t(n), 0);

    for (Index j = n; j-- > 0;) {
        double min = c(0, j);
        Index imin = 0;
        for (Index i = 1; i < n; ++i) {
            if (c(i, j) < min) {
                min = c(i, j);
                imin = i;
            }
        }
        v[std::size_t(j)] = min;
        if (++matches[std::size_t(imin)] == 1) {
            row_sol[std::size_t(imin)] = j;
            col_sol[std::size_t(j)] = imin;
        } else if (v[std::size_t(j)] < v[std::size_t(row_sol[std::size_t(imin)])]) {
            const Index j1 = row_sol[std::size_t(imin)];
            row_sol[std::size_t(imin)] = j;
            col_sol[std::size_t(j)] = imin;
            col_sol[std::size_t(j1)] = -1;
        } else {
            col_sol[std::size_t(j)] = -1;
        }
    }

    std::vector<Index> free_rows;
    for (Index i = 0; i < n; ++i) {
        if (matches[std::size_t(i)] == 0) {
            free_rows.push_back(i);
        } else if (matches[std::size_t(i)] == 1) {
            const Index j1 = row_sol[std::size_t(i)];
            double min = infinity;
            for (Index j = 0; j < n; ++j) {
                if (j != j1) {
                    min = std::min(min, c(i, j) - v[std::size_t(j)]);
                }
            }
            if (std::isfinite(min)) {
                v[std::size_t(j1)] -= min;
            }
        }
    }
    // Rows that won several columns keep only one; the rest of their
    // columns are free, and those rows are not in the free list.

    std::vector<double> dist(static_cast<std::size_t>(n));
    std::vector<Index> pred(static_cast<std::size_t>(n));
    std::vector<Index> col_list(static_cast<std::size_t>(n));
    for (Index free_row : free_rows) {
        for (Index j = 0; j < n; ++j) {
            dist[std::size_t(j)] = c(free_row, j) - v[std::size_t(j)];
            pred[std::size_t(j)] = free_row;
            col_list[std::size_t(j)] = j;
        }
        Index low = 0;
        Index up = 0;
        Index last = 0;
        Index end_of_path = -1;
        double min = 0.0;
        bool found = false;
        do {
            if (up == low) {
                // Collect the columns at the new minimum distance.
                last = low - 1;
                min = dist[std::size_t(col_list[std::size_t(up++)])];
                for (Index k = up; k < n; ++k) {
                    const Index j = col_list[std::size_t(k)];
                    const double h = dist[std::size_t(j)];
                    if (h <= min) {
                        if (h < min) {
                            up = low;
                            min = h;
                        }
                        col_list[std::size_t(k)] = col_list[std::size_t(up)];
                        col_list[std::size_t(up++)] = j;
                    }
                }
                for (Index k = low; k < up; ++k) {
                    if (col_sol[std::size_t(col_list[std::size_t(k)])] < 0) {
                        end_of_path = col_list[std::size_t(k)];
                        found = true;
                        break;
                    }
                }
            }
            if (!found) {
                const Index j1 = col_list[std::size_t(low++)];
                const Index i = col_sol[std::size_t(j1)];
                const double h = c(i, j1) - v[std::size_t(j1)] - min;
                for (Index k = up; k < n; ++k) {
                    const Index j = col_list[std::size_t(k)];
                    const double v2 = c(i, j) - v[std::size_t(j)] - h;
                    if (v2 < dist[std::size_t(j)]) {
                        pred[std::size_t(j)] = i;
                        if (v2 == min) {
                            if (col_sol[std::size_t(j)] < 0) {
                                end_of_path = j;
                                found = true;
                                break;
                            }
                            col_list[std::size_t(k)] = col_list[std::size_t(up)];
                            col_list[std::size_t(up++)] = j;
                        }
                        dist[std::size_t(j)] = v2;
                    }
                }
            }
        } while (!found);

        for (Index k = 0; k <= last; ++k) {
            const Index j1 = col_list[std::size_t(k)];
            v[std::size_t(j1)] += dist[std::size_t(j1)] - min;
        }
        Index i;
        do {
            i = pred[std::size_t(end_of_path)];
            col_sol[std::size_t(end_of_path)] = i;
            const Index j1 = end_of_path;
            end_of_path = row_sol[std::size_t(i)];
            row_sol[std::size_t(i)] = j1;
        } while (i != free_row);
    }
}

// Moves an optimal matching to the lexicographically smallest optimal one.
// Optimal matchings are exactly the perfect matchings on tight edges
// (zero reduced cost under the final duals). Row by row, the smallest tight
// column is taken if an alternating cycle through tight edges of unfixed
// rows lets the rest of the matching follow.
void canonicalize(const RowMatrix& c, std::vector<Index>& row_sol, std::vector<Index>& col_sol,
                  const std::vector<double>& v, Index canonical_rows)
{
    const Index n = c.rows();
    std::vector<double> u(static_cast<std::size_t>(n));
    double scale = 0.0;
    for (Index i = 0; i < n; ++i) {
        u[std::size_t(i)] = c(i, row_sol[std::size_t(i)]) - v[std::size_t(row_sol[std::size_t(i)])];
        scale = std::max(scale, c.row(i).cwiseAbs().maxCoeff());
    }
    const double tol = 1e-10 * (1.0 + scale);
    auto tight = [&](Index i, Index j) { return c(i, j) - v[std::size_t(j)] - u[std::size_t(i)] <= tol; };

    std::vector<char> row_fixed(std::size_t(n), 0);
    std::vector<char> col_fixed(std::size_t(n), 0);
    std::vector<char> seen(static_cast<std::size_t>(n));

    for (Index i = 0; i < canonical_rows; ++i) {
        const Index target = row_sol[std::size_t(i)];
        for (Index j = 0; j < target; ++j) {
            if (col_fixed[std::size_t(j)] || !tight(i, j)) {
                continue;
            }
            // Row r = owner(j) must move; search r -> col -> owner -> ... -> target.
            const Index r0 = col_sol[std::size_t(j)];
            std::fill(seen.begin(), seen.end(), 0);
            seen[std::size_t(j)] = 1;
            std::deque<Index> queue{r0};
            std::vector<Index> via(std::size_t(n), -1); // column -> row that reaches it
            Index reached = -1;
            while (!queue.empty() && reached < 0) {
                const Index r = queue.front();
                queue.pop_front();
                for (Index col = 0; col < n; ++col) {
                    if (seen[std::size_t(col)] || col_fixed[std::size_t(col)] || !tight(r, col)) {
                        continue;
                    }
                    seen[std::size_t(col)] = 1;
                    via[std::size_t(col)] = r;
                    if (col == target) {
                        reached = col;
                        break;
                    }
                    queue.push_back(col_sol[std::size_t(col)]);
                }
            }
            if (reached < 0) {
                continue;
            }
            // Collect the cycle and confirm it does not raise the cost.
            std::vector<std::pair<Index, Index>> moves{{i, j}};
            for (Index col = reached; col != j;) {
                const Index r = via[std::size_t(col)];
                moves.emplace_back(r, col);
                col = row_sol[std::size_t(r)];
            }
            long double delta = 0.0L;
            for (const auto& [r, col] : moves) {
                delta += static_cast<long double>(c(r, col)) - static_cast<long double>(c(r, row_sol[std::size_t(r)]));
            }
            if (delta > static_cast<long double>(1e-13 * (1.0 + scale))) {
                continue;
            }
            for (const auto& [r, col] : moves) {
                row_sol[std::size_t(r)] = col;
                col_sol[std::size_t(col)] = r;
            }
            break;
        }
        row_fixed[std::size_t(i)] = 1;
        col_fixed[std::size_t(row_sol[std::size_t(i)])] = 1;
    }
}

} // namespace

Assignment solve_hungarian(const CostMatrix& cost)
{
    cost.validate();
    const Index rows = cost.rows();
    const Index n = cost.cols();
    RowMatrix square;
    if (rows == n) {
        square = cost.entries;
    } else {
        square = RowMatrix::Zero(n, n);
        square.topRows(rows) = cost.entries;
    }
    std::vector<Index> row_sol;
    std::vector<Index> col_sol;
    std::vector<double> v;
    jonker_volgenant(square, row_sol, col_sol, v);
    canonicalize(square, row_sol, col_sol, v, rows);

    Assignment result;
    result.method = AssignMethod::hungarian;
    result.mapping.assign(row_sol.begin(), row_sol.begin() + rows);
    result.total_cost = assignment_cost(cost, result.mapping);
    return result;
}

Assignment solve_greedy(const CostMatrix& cost)
{
    cost.validate();
    const Index rows = cost.rows();
    const Index cols = cost.cols();
    std::vector<char> taken(std::size_t(cols), 0);
    Assignment result;
    result.method = AssignMethod::greedy;
    result.mapping.resize(std::size_t(rows));
    for (Index i = 0; i < rows; ++i) {
        double best = infinity;
        Index best_col = -1;
        const double* row = cost.entries.row(i).data();
        for (Index j = 0; j < cols; ++j) {
            if (!taken[std::size_t(j)] && row[j] < best) {
                best = row[j];
                best_col = j;
            }
        }
        taken[std::size_t(best_col)] = 1;
        result.mapping[std::size_t(i)] = best_col;
    }
    result.total_cost = assignment_cost(cost, result.mapping);
    return result;
}

Assignment solve_brute_force(const CostMatrix& cost)
{
    cost.validate();
    const Index n = cost.rows();
    if (cost.cols() != n) {
        throw ShapeError("brute force needs a square cost matrix");
    }
    if (n > 9) {
        throw CapacityError("brute force supports n <= 9, got n = " + std::to_string(n));
    }
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index(0));
    Assignment result;
    result.method = AssignMethod::brute_force;
    result.total_cost = infinity;
    do {
        const double total = assignment_cost(cost, perm);
        if (total < result.total_cost) {
            result.total_cost = total;
            result.mapping = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return result;
}

Assignment solve(const CostMatrix& cost, AssignMethod method)
{
    switch (method) {
    case AssignMethod::hungarian:
        return solve_hungarian(cost);
    case AssignMethod::greedy:
        return solve_greedy(cost);
    case AssignMethod::brute_force:
        return solve_brute_force(cost);
    }
    throw ConfigError("unknown assignment method");
}

std::vector<BenchResult> bench_assign(Index n, const std::vector<AssignMethod>& methods, int repeats,
                                      std::uint64_t seed)
{
    if (n < 2) {
        throw InputError("bench_assign needs n >= 2");
    }
    if (repeats < 1) {
        throw InputError("bench_assign needs repeats >= 1");
    }
    std::vector<std::vector<double>> times(methods.size());
    for (int r = 0; r < repeats; ++r) {
        Rng rng(seed + std::uint64_t(r));
        RowMatrix entries(n, n);
        for (Index i = 0; i < n; ++i) {
            for (Index k = 0; k < n; ++k) {
                entries(i, k) = rng.uniform();
            }
        }
        const CostMatrix cost(std::move(entries));
        for (std::size_t m = 0; m < methods.size(); ++m) {
            const auto start = std::chrono::steady_clock::now();
            const Assignment a = solve(cost, methods[m]);
            const auto stop = std::chrono::steady_clock::now();
            if (!is_injective(a.mapping, n)) {
                throw NumericError("bench_assign: solver returned a non-injective mapping");
            }
            times[m].push_back(std::chrono::duration<double, std::milli>(stop - start).count());
        }
    }
    std::vector<BenchResult> results;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        BenchResult res;
        res.method = methods[m];
        res.n = n;
        res.repeats = repeats;
        double sum = 0.0;
        for (double t : times[m]) {
            sum += t;
        }
        res.mean_ms = sum / double(repeats);
        double var = 0.0;
        for (double t : times[m]) {
            var += (t - res.mean_ms) * (t - res.mean_ms);
        }
        res.std_ms = repeats > 1 ? std::sqrt(var / double(repeats - 1)) : 0.0;
        results.push_back(res);
    }
    return results;
}

} // namespace nsql
