#include "nsql/prior.hpp"

#include "sobol_table.hpp"

#include <cmath>
#include <numbers>

namespace nsql {

void PriorSpec::validate() const
{
    if (dim < 1) {
        throw ConfigError("prior dimension must be >= 1");
    }
}

std::string to_string(PriorKind kind)
{
    switch (kind) {
    case PriorKind::uniform01:
        return "uniform01";
    case PriorKind::standard_gaussian:
        return "standard_gaussian";
    case PriorKind::uniform_ball:
        return "uniform_ball";
    }
    return "?";
}

std::string to_string(LatticeSource source)
{
    switch (source) {
    case LatticeSource::univariate_quantiles:
        return "univariate_quantiles";
    case LatticeSource::sobol:
        return "sobol";
    case LatticeSource::uniform_grid:
        return "uniform_grid";
    }
    return "?";
}

PriorKind parse_prior_kind(const std::string& name)
{
    if (name == "uniform01") {
        return PriorKind::uniform01;
    }
    if (name == "standard_gaussian" || name == "gaussian") {
        return PriorKind::standard_gaussian;
    }
    if (name == "uniform_ball" || name == "ball") {
        return PriorKind::uniform_ball;
    }
    throw ConfigError("unknown prior '" + name + "' (expected uniform01, standard_gaussian or uniform_ball)");
}

LatticeSource parse_lattice_source(const std::string& name)
{
    if (name == "univariate_quantiles") {
        return LatticeSource::univariate_quantiles;
    }
    if (name == "sobol") {
        return LatticeSource::sobol;
    }
    if (name == "uniform_grid") {
        return LatticeSource::uniform_grid;
    }
    throw ConfigError("unknown lattice source '" + name +
                      "' (expected univariate_quantiles, sobol or uniform_grid)");
}

SobolSequence::SobolSequence(int dims, std::optional<std::uint64_t> shift_seed)
    : dims_(dims), directions_(std::size_t(dims)), state_(std::size_t(dims), 0), shift_(std::size_t(dims), 0)
{
    if (dims < 1 || dims > sobol_max_dim) {
        throw DomainError("Sobol dimension " + std::to_string(dims) + " outside supported range [1, " +
                          std::to_string(sobol_max_dim) + "]");
    }
    for (int k = 0; k < 32; ++k) {
        directions_[0][std::size_t(k)] = std::uint32_t(1) << (31 - k);
    }
    for (int j = 1; j < dims; ++j) {
        const auto& poly = detail::sobol_polynomials[std::size_t(j - 1)];
        const int s = poly.degree;
        auto& v = directions_[std::size_t(j)];
        for (int k = 0; k < s; ++k) {
            v[std::size_t(k)] = poly.initial[std::size_t(k)] << (31 - k);
        }
        for (int k = s; k < 32; ++k) {
            std::uint32_t value = v[std::size_t(k - s)] ^ (v[std::size_t(k - s)] >> s);
            for (int t = 1; t < s; ++t) {
                if ((poly.coefficients >> (s - 1 - t)) & 1U) {
                    value ^= v[std::size_t(k - t)];
                }
            }
            v[std::size_t(k)] = value;
        }
    }
    if (shift_seed) {
        Rng rng(*shift_seed);
        for (auto& s : shift_) {
            s = std::uint32_t(rng.next_u64() >> 32);
        }
    }
}

void SobolSequence::next(double* out)
{
    if (index_ >= 0xFFFFFFFFULL) {
        throw CapacityError("Sobol sequence exhausted (2^32 points)");
    }
    // Gray-code update: flip the direction of the lowest zero bit of index.
    int bit = 0;
    for (std::uint64_t value = index_; value & 1ULL; value >>= 1) {
        ++bit;
    }
    ++index_;
    for (int j = 0; j < dims_; ++j) {
        state_[std::size_t(j)] ^= directions_[std::size_t(j)][std::size_t(bit)];
        const std::uint32_t shifted = state_[std::size_t(j)] ^ shift_[std::size_t(j)];
        // The shift can land on 0; fold it to half a grid step.
        out[j] = shifted == 0 ? 0x1.0p-33 : double(shifted) * 0x1.0p-32;
    }
}

RowMatrix sobol_points(int dims, Index n, std::optional<std::uint64_t> shift_seed)
{
    if (n < 1) {
        throw DomainError("Sobol point count must be >= 1");
    }
    SobolSequence seq(dims, shift_seed);
    RowMatrix points(n, dims);
    for (Index i = 0; i < n; ++i) {
        seq.next(points.row(i).data());
    }
    return points;
}

double normal_cdf(double x)
{
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

namespace {

// Acklam's rational approximation on the lower half, p in (0, 0.5].
double lower_quantile(double p)
{
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    // One Halley step on the erfc-based CDF.
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

} // namespace

double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("inverse normal CDF needs p in (0, 1), got " + std::to_string(p));
    }
    if (p == 0.5) {
        return 0.0;
    }
    // 1 - p is exact for p >= 0.5.
    return p < 0.5 ? lower_quantile(p) : -lower_quantile(1.0 - p);
}

RowMatrix to_gaussian(const RowMatrix& points)
{
    RowMatrix out(points.rows(), points.cols());
    for (Index i = 0; i < points.rows(); ++i) {
        for (Index k = 0; k < points.cols(); ++k) {
            out(i, k) = normal_quantile(points(i, k));
        }
    }
    return out;
}

Index ball_input_columns(Index dim)
{
    return dim == 1 ? 1 : dim + 1;
}

RowMatrix to_uniform_ball(const RowMatrix& points, Index dim)
{
    if (dim < 1) {
        throw DomainError("ball dimension must be >= 1");
    }
    if (points.cols() != ball_input_columns(dim)) {
        throw ShapeError("ball map for d=" + std::to_string(dim) + " needs " +
                         std::to_string(ball_input_columns(dim)) + " uniform columns, got " +
                         std::to_string(points.cols()));
    }
    for (Index i = 0; i < points.rows(); ++i) {
        for (Index k = 0; k < points.cols(); ++k) {
            const double u = points(i, k);
            if (!(u > 0.0 && u < 1.0)) {
                throw DomainError("ball map needs coordinates in (0, 1), row " + std::to_string(i) + " has " +
                                  std::to_string(u));
            }
        }
    }
    RowMatrix out(points.rows(), dim);
    if (dim == 1) {
        out.col(0) = (2.0 * points.col(0).array() - 1.0).matrix();
        return out;
    }
    Vector direction(dim);
    for (Index i = 0; i < points.rows(); ++i) {
        for (Index k = 0; k + 1 < dim; ++k) {
            direction(k) = normal_quantile(points(i, k));
        }
        direction(dim - 1) = normal_quantile(points(i, dim));
        const double norm = direction.norm();
        if (norm > 0.0) {
            direction /= norm;
        } else {
            // Every Gaussian coordinate sat at the median; pick the first axis.
            direction.setZero();
            direction(0) = 1.0;
        }
        const double radius = std::pow(points(i, dim - 1), 1.0 / double(dim));
        out.row(i) = radius * direction.transpose();
    }
    return out;
}

namespace {

RowMatrix push_through_prior(const PriorSpec& prior, const RowMatrix& uniform)
{
    switch (prior.kind) {
    case PriorKind::uniform01:
        return uniform;
    case PriorKind::standard_gaussian:
        return to_gaussian(uniform);
    case PriorKind::uniform_ball:
        return to_uniform_ball(uniform, prior.dim);
    }
    throw ConfigError("unknown prior kind");
}

Index uniform_columns(const PriorSpec& prior)
{
    return prior.kind == PriorKind::uniform_ball ? ball_input_columns(prior.dim) : prior.dim;
}

RowMatrix uniform_grid(Index dims, Index n)
{
    const auto side = Index(std::llround(std::pow(double(n), 1.0 / double(dims))));
    Index total = 1;
    for (Index k = 0; k < dims; ++k) {
        total *= side;
    }
    if (side < 1 || total != n) {
        throw ConfigError("uniform_grid needs n to be a perfect power of the dimension (n = g^" +
                          std::to_string(dims) + "), got n = " + std::to_string(n));
    }
    RowMatrix points(n, dims);
    for (Index i = 0; i < n; ++i) {
        Index rest = i;
        for (Index k = dims; k-- > 0;) {
            points(i, k) = double(rest % side + 1) / double(side + 1);
            rest /= side;
        }
    }
    return points;
}

} // namespace

Lattice univariate_quantiles(const PriorSpec& prior, Index n)
{
    prior.validate();
    if (prior.dim != 1) {
        throw DomainError("univariate quantiles need a one-dimensional prior, got d = " + std::to_string(prior.dim));
    }
    if (n < 1) {
        throw DomainError("lattice size must be >= 1");
    }
    RowMatrix u(n, 1);
    for (Index i = 0; i < n; ++i) {
        u(i, 0) = double(i + 1) / double(n + 1);
    }
    return Lattice{push_through_prior(prior, u), prior, LatticeSource::univariate_quantiles, 0};
}

Lattice build_lattice(const PriorSpec& prior, Index n, LatticeSource source, std::uint64_t seed)
{
    prior.validate();
    if (n < 1) {
        throw DomainError("lattice size must be >= 1");
    }
    const std::string valid = "valid pairs: univariate_quantiles with any prior of d = 1; sobol with any prior "
                              "(d <= 32, uniform_ball d <= 31); uniform_grid with uniform01 or "
                              "standard_gaussian, or uniform_ball of d = 1";
    switch (source) {
    case LatticeSource::univariate_quantiles:
        if (prior.dim != 1) {
            throw ConfigError("univariate_quantiles needs d = 1; " + valid);
        }
        return univariate_quantiles(prior, n);
    case LatticeSource::sobol: {
        const Index cols = uniform_columns(prior);
        if (cols > sobol_max_dim) {
            throw ConfigError("Sobol lattice needs " + std::to_string(cols) + " dimensions; " + valid);
        }
        Lattice lattice{push_through_prior(prior, sobol_points(int(cols), n, seed)), prior, source, seed};
        return lattice;
    }
    case LatticeSource::uniform_grid:
        if (prior.kind == PriorKind::uniform_ball && prior.dim > 1) {
            throw ConfigError("uniform_grid does not support uniform_ball with d > 1; " + valid);
        }
        return Lattice{push_through_prior(prior, uniform_grid(prior.dim, n)), prior, source, seed};
    }
    throw ConfigError("unknown lattice source; " + valid);
}

RowMatrix sample_prior(const PriorSpec& prior, Index count, std::uint64_t seed)
{
    prior.validate();
    if (count < 1) {
        throw InputError("sample count must be >= 1");
    }
    Rng rng(seed);
    RowMatrix uniform(count, uniform_columns(prior));
    for (Index i = 0; i < uniform.rows(); ++i) {
        for (Index k = 0; k < uniform.cols(); ++k) {
            uniform(i, k) = rng.uniform_open();
        }
    }
    return push_through_prior(prior, uniform);
}

} // namespace nsql
