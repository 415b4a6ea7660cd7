#pragma once

#include "nsql/core.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace nsql {

struct Dataset {
    RowMatrix samples; // n x p
    std::optional<std::vector<int>> labels;
    std::optional<ImageShape> image_shape;
    std::string provenance;

    [[nodiscard]] Index size() const { return samples.rows(); }
    [[nodiscard]] Index dim() const { return samples.cols(); }

    /// Checks n >= 1, label count, image shape consistency and the [0, 1]
    /// range of image data.
    void validate() const;
};

/// Parses big-endian IDX files (images 0x00000803, labels 0x00000801).
/// Pixels are scaled by 1/255.
Dataset read_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels = {});

/// factor x factor box averaging per channel.
Dataset downsample(const Dataset& ds, int factor);

/// First `count` rows (all rows when count <= 0 or count >= n).
Dataset head(const Dataset& ds, Index count);

/// Rows at `indices`, in the given order.
Dataset take_rows(const Dataset& ds, const std::vector<Index>& indices);

struct Split {
    Dataset train;
    Dataset validation;
    std::vector<Index> train_indices; // ascending positions in the source dataset
};

/// Seeded holdout of round(fraction * n) rows. Both parts keep source order.
Split split_validation(const Dataset& ds, double fraction, std::uint64_t seed);

enum class SyntheticKind { linear, mlp_fixed_seed };

struct SyntheticSpec {
    Index latent_dim = 2;
    Index ambient_dim = 16;
    Index n = 512;
    SyntheticKind kind = SyntheticKind::linear;
    double noise_sigma = 0.01;
    std::uint64_t seed = 0;
};

struct SyntheticData {
    Dataset dataset;
    RowMatrix latents; // true Z, n x d, uniform on (0, 1)^d
    Matrix mixing;     // d x p map A with orthonormal rows (empty for mlp_fixed_seed)
};

/// X = G*(Z) + sigma * eps. Draw order from the seed: generator weights,
/// then Z, then noise.
SyntheticData make_synthetic(const SyntheticSpec& spec);

inline constexpr std::uint32_t container_version = 1;

struct Container {
    std::vector<std::uint32_t> dims;
    RowMatrix values; // dims[0] x product(dims[1..])
};

/// "NSQT", version u32, rank u32, dims u32[rank], row-major f64 payload.
/// `dims` defaults to {rows, cols}; its product must equal values.size().
void write_container(const std::filesystem::path& path, const RowMatrix& values,
                     const std::vector<std::uint32_t>& dims = {});
Container read_container(const std::filesystem::path& path);

/// CSV with a header row; every other row must be numeric.
RowMatrix read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header, const RowMatrix& rows);

/// Loads by explicit format ("idx", "container", "csv") or by file name
/// when format is empty.
Dataset load_dataset(const std::filesystem::path& path, const std::string& format = {},
                     const std::optional<std::filesystem::path>& labels = {});

/// Container dims for a sample matrix: (n, h, w, c) when image-shaped.
std::vector<std::uint32_t> sample_dims(Index n, Index p, const std::optional<ImageShape>& shape);

/// Binary PGM (P5) mosaic of single-channel images in [0, 1]; multi-channel
/// images are averaged over channels.
void write_pgm_grid(const std::filesystem::path& path, const RowMatrix& samples, const ImageShape& shape,
                    int columns = 8);

} // namespace nsql
