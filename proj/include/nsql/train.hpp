#pragma once

// Quantile-assignment training: full-batch and mini-batch loops around a
// persistent bank of latent codes.

#include "nsql/assign.hpp"
#include "nsql/decoder.hpp"
#include "nsql/metrics.hpp"
#include "nsql/optim.hpp"
#include "nsql/prior.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace nsql {

enum class TrainMode { full_batch, minibatch };
enum class AssignChoice { automatic, hungarian, greedy };
enum class InitMode { random, pca_sorted };

std::string to_string(TrainMode mode);
std::string to_string(AssignChoice choice);
std::string to_string(InitMode mode);
TrainMode parse_train_mode(const std::string& name);
AssignChoice parse_assign_choice(const std::string& name);
InitMode parse_init_mode(const std::string& name);

struct DecoderSpec {
    std::vector<Index> hidden{256, 256};
    Activation activation = Activation::relu;
    OutputActivation output_activation = OutputActivation::sigmoid;
    std::uint64_t init_seed = 0;
};

struct TrainConfig {
    int max_epochs = 200;
    int assignment_period = 3; // K: assign after every K-th epoch
    double momentum = 0.7;     // rho in [0, 1)
    TrainMode mode = TrainMode::full_batch;
    Index batch_size = 64;
    AssignChoice assign_method = AssignChoice::automatic;
    Index greedy_threshold = 2048; // automatic: hungarian up to this many rows
    int patience = 25;
    int inner_epochs = 1; // decoder epochs per outer iteration (full batch)
    InitMode init = InitMode::random;
    std::uint64_t seed = 0;
    LossSpec loss;
    OptimizerConfig optimizer;
    DecoderSpec decoder;
    std::optional<std::filesystem::path> dump_dir; // where a failed run leaves its state

    void validate() const;
};

/// Solver for an n-row assignment under `config`.
AssignMethod resolve_assign_method(const TrainConfig& config, Index n);

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    std::optional<double> assignment_cost; // mean per row, when an assignment ran
    std::optional<AssignMethod> assign_method;
    double epoch_ms = 0.0;
    std::optional<double> validation_loss;
    std::optional<long> peak_rss_kb;
};

struct TrainState {
    RowMatrix latents; // memory bank, n x d
    Decoder params;
    OptimizerState optimizer;
    int epoch = 0;
    int decoder_epochs = 0;
    std::vector<EpochRecord> history;
    std::vector<Index> assignment; // data row -> lattice row of the latest match
    EarlyStop early_stop;
    Rng shuffle_rng;
    Rng lattice_rng;
};

/// Memory bank from a seeded random permutation of the lattice (or the
/// PCA-sorted matching) and a fresh decoder, unless `initial` is given.
TrainState init_state(const RowMatrix& data, const RowMatrix& lattice, const TrainConfig& config,
                      const std::optional<Decoder>& initial = {});

/// `inner_epochs` shuffled passes of mini-batch AdamW regression of the data
/// on the memory bank. Returns the mean per-sample loss seen in the passes.
double decoder_step(TrainState& state, const RowMatrix& data, const TrainConfig& config);

/// One optimizer step on the rows in `batch`. Returns the summed loss.
double decoder_batch_step(TrainState& state, const RowMatrix& data, const std::vector<Index>& batch,
                          const TrainConfig& config, double period_fraction);

/// n x n assignment of all data rows to all lattice rows, then
/// Z_i <- rho Q_pi(i) + (1 - rho) Z_i.
Assignment assignment_step_full(TrainState& state, const RowMatrix& data, const RowMatrix& lattice,
                                const TrainConfig& config);

/// m x m assignment between data rows `batch` and lattice rows `subset`;
/// only the rows in `batch` move.
Assignment assignment_step_minibatch(TrainState& state, const RowMatrix& data, const RowMatrix& lattice,
                                     const std::vector<Index>& batch, const std::vector<Index>& subset,
                                     const TrainConfig& config);

/// Mean over rows of min_k loss(row, G(Q_k)).
double nearest_lattice_loss(const Decoder& params, const RowMatrix& data, const RowMatrix& lattice,
                            const LossSpec& loss);

/// Mean of loss(X_i, G(Z_i)).
double training_loss(const Decoder& params, const RowMatrix& latents, const RowMatrix& data, const LossSpec& loss);

/// Runs up to max_epochs epochs with assignment every K-th epoch and early
/// stopping on the validation loss (training loss when no validation set).
TrainState fit(const RowMatrix& data, const RowMatrix& lattice, const TrainConfig& config,
               const std::optional<Decoder>& initial = {}, const std::optional<RowMatrix>& validation = {});

enum class SampleMode { lattice_rows, prior_draws };

std::string to_string(SampleMode mode);
SampleMode parse_sample_mode(const std::string& name);

struct SampleRequest {
    Index count = 1;
    SampleMode mode = SampleMode::prior_draws;
    std::uint64_t seed = 0;
};

/// prior_draws decodes sample_prior(prior, count, seed); lattice_rows
/// decodes the first `count` lattice rows.
RowMatrix sample(const Decoder& params, const SampleRequest& request, const PriorSpec& prior,
                 const RowMatrix* lattice = nullptr);

struct LatentTable {
    std::vector<std::string> header; // index, z0.., [label]
    RowMatrix rows;
};

LatentTable export_latents(const RowMatrix& latents, const std::optional<std::vector<int>>& labels = {});

/// Peak resident set size of this process, when the platform reports it.
std::optional<long> peak_rss_kb();

} // namespace nsql
