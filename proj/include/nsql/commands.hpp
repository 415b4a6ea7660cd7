#pragma once

// Subcommands of the nsql tool. Each returns a process exit code:
// 0 success, 2 configuration error, 3 data error, 4 numeric failure.

#include "nsql/config.hpp"
#include "nsql/dataio.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace nsql {

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_config = 2, exit_data = 3, exit_numeric = 4 };

struct TrainArgs {
    std::filesystem::path config;
    std::optional<std::filesystem::path> data; // overrides data.path
    std::filesystem::path out;
};

struct SampleArgs {
    std::filesystem::path model;
    Index n = 16;
    std::string mode = "prior_draws";
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> out; // default: samples.nsqt next to the model
};

struct EvalArgs {
    std::filesystem::path real;
    std::filesystem::path fake;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> out; // JSON goes to stdout when unset
    std::optional<std::string> shape;         // "h,w" or "h,w,c"
    int downsample = 1;                       // applied to the real set
    Index max_samples = 2048;
    Index max_pairs = 50;
    Index feature_dim = 128;
};

struct LatticeArgs {
    std::string prior = "uniform01";
    Index dim = 1;
    Index n = 16;
    std::string source = "auto";
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> out;
};

struct BenchArgs {
    Index n = 512;
    std::string method = "both"; // both | hungarian | greedy | brute_force
    int repeats = 3;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> out;
};

struct ExportArgs {
    std::filesystem::path run; // a directory written by train
    std::optional<std::filesystem::path> out;
};

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_sample(const SampleArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_lattice(const LatticeArgs& args, std::ostream& out, std::ostream& err);
int cmd_bench_assign(const BenchArgs& args, std::ostream& out, std::ostream& err);
int cmd_export_latents(const ExportArgs& args, std::ostream& out, std::ostream& err);

/// Loads data.path with the row cap, shape override and downsampling applied.
Dataset load_run_data(const DataConfig& data);

/// epoch,mean_loss,assignment_cost,assign_method,epoch_ms
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

/// Maps an exception to its exit code.
int exit_code_for(const std::exception& e);

} // namespace nsql
