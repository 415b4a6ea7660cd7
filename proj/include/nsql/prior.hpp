#pragma once

// Quantile lattices: the fixed grid of latent codes that data get assigned to.

#include "nsql/core.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace nsql {

enum class PriorKind { uniform01, standard_gaussian, uniform_ball };

struct PriorSpec {
    PriorKind kind = PriorKind::standard_gaussian;
    Index dim = 2;

    void validate() const;
    bool operator==(const PriorSpec&) const = default;
};

enum class LatticeSource { univariate_quantiles, sobol, uniform_grid };

std::string to_string(PriorKind kind);
std::string to_string(LatticeSource source);
PriorKind parse_prior_kind(const std::string& name);
LatticeSource parse_lattice_source(const std::string& name);

struct Lattice {
    RowMatrix points; // n x d
    PriorSpec prior;
    LatticeSource source = LatticeSource::sobol;
    std::uint64_t seed = 0;

    [[nodiscard]] Index size() const { return points.rows(); }
    [[nodiscard]] Index dim() const { return points.cols(); }
};

inline constexpr int sobol_max_dim = 32;

/// Joe-Kuo Sobol generator (32-bit, Gray-code order) with an optional
/// digital shift. Point 0 (the origin) is skipped.
class SobolSequence {
  public:
    SobolSequence(int dims, std::optional<std::uint64_t> shift_seed);

    /// Writes the next point into `out` (length dims), in (0, 1).
    void next(double* out);

    [[nodiscard]] int dims() const { return dims_; }
    [[nodiscard]] std::uint64_t index() const { return index_; }

  private:
    int dims_;
    std::uint64_t index_ = 0;
    std::vector<std::array<std::uint32_t, 32>> directions_;
    std::vector<std::uint32_t> state_;
    std::vector<std::uint32_t> shift_;
};

/// First n points of the (optionally digitally shifted) Sobol sequence.
RowMatrix sobol_points(int dims, Index n, std::optional<std::uint64_t> shift_seed);

/// Standard normal CDF.
double normal_cdf(double x);

/// Inverse standard normal CDF: rational approximation plus one Halley
/// step. Throws DomainError outside (0, 1).
double normal_quantile(double p);

/// Coordinatewise inverse normal CDF.
RowMatrix to_gaussian(const RowMatrix& points);

/// Uniform points in (0,1)^k to the open unit ball in R^d. For d == 1 the
/// map is 2u - 1 and k == 1. For d > 1, k == d + 1: columns 0..d-2 and d give
/// a Gaussian direction, column d-1 gives the radius u^(1/d).
RowMatrix to_uniform_ball(const RowMatrix& points, Index dim);

/// Columns of uniform input the ball map consumes for a d-dimensional prior.
Index ball_input_columns(Index dim);

/// Q_i = F^{-1}(i / (n + 1)), i = 1..n, for a one-dimensional prior.
Lattice univariate_quantiles(const PriorSpec& prior, Index n);

Lattice build_lattice(const PriorSpec& prior, Index n, LatticeSource source, std::uint64_t seed);

/// Seeded draws from the prior itself (not the lattice).
RowMatrix sample_prior(const PriorSpec& prior, Index count, std::uint64_t seed);

} // namespace nsql
