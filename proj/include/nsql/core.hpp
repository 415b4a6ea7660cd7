#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace nsql {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
// Sample-major storage: one observation (or latent code) per row.
using RowMatrix = RowMatrixX<double>;
using Vector = VectorX<double>;
using Index = Eigen::Index;

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
  public:
    using Error::Error;
};
class NumericError : public Error {
  public:
    using Error::Error;
};
class DomainError : public Error {
  public:
    using Error::Error;
};
class ConfigError : public Error {
  public:
    using Error::Error;
};
class FormatError : public Error {
  public:
    using Error::Error;
};
class LengthError : public Error {
  public:
    using Error::Error;
};
class CapacityError : public Error {
  public:
    using Error::Error;
};
class InputError : public Error {
  public:
    using Error::Error;
};

struct ImageShape {
    int height = 0;
    int width = 0;
    int channels = 1;

    [[nodiscard]] Index size() const { return Index(height) * width * channels; }
    bool operator==(const ImageShape&) const = default;
};

/// Seeded generator with portable distributions.
///
/// The engine is std::mt19937_64 (fully specified by the standard). The
/// standard distribution classes are implementation-defined, so the
/// transforms here are written out to keep streams identical across
/// standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on the open interval (0, 1).
    double uniform_open() { return (double(engine_() >> 11) + 0.5) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal();

    /// Uniform integer in [0, bound).
    std::size_t below(std::size_t bound);

    template <typename T>
    void shuffle(std::vector<T>& items)
    {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

    std::vector<Index> permutation(Index n);

    /// `count` distinct indices from [0, n), in draw order.
    std::vector<Index> sample_without_replacement(Index n, Index count);

  private:
    std::mt19937_64 engine_;
    std::optional<double> cached_normal_;
};

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

/// Worker count: NSQL_THREADS if set and positive, else hardware concurrency.
int worker_count();

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunks are
/// disjoint, so bodies that only write their own range are deterministic.
void parallel_for(Index n, const std::function<void(Index, Index)>& body);

} // namespace nsql
