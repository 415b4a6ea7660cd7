#pragma once

// Run configuration files (JSON) for the command-line tool.

#include "nsql/prior.hpp"
#include "nsql/train.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace nsql {

inline constexpr int config_schema_version = 1;

struct DataConfig {
    std::string path;
    std::string format; // idx | container | csv; empty infers from the file name
    std::optional<std::string> labels;
    int downsample = 1;
    Index max_samples = 0; // 0 keeps every row
    double validation_fraction = 0.1;
    std::uint64_t split_seed = 0;
    std::optional<ImageShape> image_shape; // for container/csv inputs
};

struct RunConfig {
    DataConfig data;
    PriorSpec prior{PriorKind::standard_gaussian, 2};
    std::optional<LatticeSource> lattice_source; // unset: quantiles for d = 1, Sobol otherwise
    std::uint64_t lattice_seed = 0;
    std::optional<LossKind> loss_kind;                      // unset: ssim_l1 for images, l2 otherwise
    std::optional<OutputActivation> output_activation;      // unset: sigmoid for images, identity otherwise
    TrainConfig train;
};

/// Parses and validates a config document. Unknown keys, a missing or wrong
/// schema_version, and out-of-range values raise ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fills every "auto" choice from the loaded data.
void resolve_run_config(RunConfig& config, const std::optional<ImageShape>& data_shape);

struct ResolvedFacts {
    std::optional<ImageShape> image_shape; // after downsampling
    Index train_rows = 0;
    Index validation_rows = 0;
    Index lattice_rows = 0;
};

/// Snapshot with every field written out; parse_run_config accepts it and
/// reruns the same experiment. The "resolved" block is informational.
std::string dump_run_config(const RunConfig& config, const ResolvedFacts& facts);

/// Reads the informational block back from a snapshot.
ResolvedFacts read_resolved_facts(const std::filesystem::path& path);

LatticeSource default_lattice_source(const PriorSpec& prior);

} // namespace nsql
