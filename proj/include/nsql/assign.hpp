#pragma once

// Linear assignment between data rows and lattice columns.

#include "nsql/decoder.hpp"
#include "nsql/metrics.hpp"

#include <string>
#include <vector>

namespace nsql {

enum class AssignMethod { hungarian, greedy, brute_force };

std::string to_string(AssignMethod method);
AssignMethod parse_assign_method(const std::string& name);

/// C(i, k) = loss between data row i and decoded lattice row k.
struct CostMatrix {
    RowMatrix entries;

    CostMatrix() = default;
    explicit CostMatrix(RowMatrix values) : entries(std::move(values)) {}

    [[nodiscard]] Index rows() const { return entries.rows(); }
    [[nodiscard]] Index cols() const { return entries.cols(); }

    /// rows <= cols, all entries finite and nonnegative.
    void validate() const;
};

struct Assignment {
    std::vector<Index> mapping; // data row -> lattice column, injective
    AssignMethod method = AssignMethod::hungarian;
    double total_cost = 0.0;
};

/// Sum of C(i, mapping[i]) in row order.
double assignment_cost(const CostMatrix& cost, const std::vector<Index>& mapping);

bool is_injective(const std::vector<Index>& mapping, Index n_cols);

/// Decodes every lattice row once, then fills C(i, k) = loss(X_i, G(Q_k)).
/// Rows are filled in parallel; each entry is computed independently.
CostMatrix build_cost_matrix(const RowMatrix& data, const Decoder& params, const RowMatrix& lattice,
                             const LossSpec& loss);

/// Same, against lattice rows that are already decoded.
CostMatrix build_cost_matrix(const RowMatrix& data, const RowMatrix& decoded, const LossSpec& loss);

/// Exact minimum-cost assignment (Jonker-Volgenant shortest augmenting
/// paths). Among optimal mappings, returns the lexicographically smallest.
/// Rectangular inputs are padded with zero-cost dummy rows.
Assignment solve_hungarian(const CostMatrix& cost);

/// Rows in index order take their cheapest free column (lowest index on ties).
Assignment solve_greedy(const CostMatrix& cost);

/// Exhaustive search over all n! permutations; square n <= 9 only.
Assignment solve_brute_force(const CostMatrix& cost);

Assignment solve(const CostMatrix& cost, AssignMethod method);

struct BenchResult {
    AssignMethod method = AssignMethod::hungarian;
    Index n = 0;
    int repeats = 0;
    double mean_ms = 0.0;
    double std_ms = 0.0;
};

/// Times each method on `repeats` seeded uniform n x n cost matrices.
std::vector<BenchResult> bench_assign(Index n, const std::vector<AssignMethod>& methods, int repeats,
                                      std::uint64_t seed);

} // namespace nsql
