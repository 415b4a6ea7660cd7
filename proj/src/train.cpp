#include "nsql/train.hpp"

#include "nsql/checkpoint.hpp"
#include "nsql/dataio.hpp"

#include <Eigen/Eigenvalues>

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace nsql {

std::string to_string(TrainMode mode)
{
    return mode == TrainMode::full_batch ? "full_batch" : "minibatch";
}

std::string to_string(AssignChoice choice)
{
    switch (choice) {
    case AssignChoice::automatic:
        return "auto";
    case AssignChoice::hungarian:
        return "hungarian";
    case AssignChoice::greedy:
        return "greedy";
    }
    return "?";
}

std::string to_string(InitMode mode)
{
    return mode == InitMode::random ? "random" : "pca_sorted";
}

std::string to_string(SampleMode mode)
{
    return mode == SampleMode::lattice_rows ? "lattice_rows" : "prior_draws";
}

TrainMode parse_train_mode(const std::string& name)
{
    if (name == "full_batch") {
        return TrainMode::full_batch;
    }
    if (name == "minibatch") {
        return TrainMode::minibatch;
    }
    throw ConfigError("unknown training mode '" + name + "' (expected full_batch or minibatch)");
}

AssignChoice parse_assign_choice(const std::string& name)
{
    if (name == "auto") {
        return AssignChoice::automatic;
    }
    if (name == "hungarian") {
        return AssignChoice::hungarian;
    }
    if (name == "greedy") {
        return AssignChoice::greedy;
    }
    throw ConfigError("unknown assignment method '" + name + "' (expected auto, hungarian or greedy)");
}

InitMode parse_init_mode(const std::string& name)
{
    if (name == "random") {
        return InitMode::random;
    }
    if (name == "pca_sorted") {
        return InitMode::pca_sorted;
    }
    throw ConfigError("unknown init mode '" + name + "' (expected random or pca_sorted)");
}

SampleMode parse_sample_mode(const std::string& name)
{
    if (name == "lattice_rows") {
        return SampleMode::lattice_rows;
    }
    if (name == "prior_draws") {
        return SampleMode::prior_draws;
    }
    throw ConfigError("unknown sample mode '" + name + "' (expected lattice_rows or prior_draws)");
}

void TrainConfig::validate() const
{
    if (max_epochs < 0) {
        throw ConfigError("max_epochs must be >= 0, got " + std::to_string(max_epochs));
    }
    if (assignment_period < 1) {
        throw ConfigError("assignment_period K must be >= 1, got " + std::to_string(assignment_period));
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ConfigError("momentum rho must lie in [0, 1), got " + std::to_string(momentum));
    }
    if (batch_size < 1 || (mode == TrainMode::minibatch && batch_size < 2)) {
        throw ConfigError("batch_size must be >= 1 (>= 2 in minibatch mode), got " + std::to_string(batch_size));
    }
    if (greedy_threshold < 1) {
        throw ConfigError("greedy_threshold must be >= 1");
    }
    if (patience < 1) {
        throw ConfigError("patience must be >= 1, got " + std::to_string(patience));
    }
    if (inner_epochs < 1) {
        throw ConfigError("inner_epochs must be >= 1, got " + std::to_string(inner_epochs));
    }
    for (Index h : decoder.hidden) {
        if (h < 1) {
            throw ConfigError("decoder hidden widths must be >= 1");
        }
    }
    optimizer.validate();
}

AssignMethod resolve_assign_method(const TrainConfig& config, Index n)
{
    switch (config.assign_method) {
    case AssignChoice::hungarian:
        return AssignMethod::hungarian;
    case AssignChoice::greedy:
        return AssignMethod::greedy;
    case AssignChoice::automatic:
        break;
    }
    return n <= config.greedy_threshold ? AssignMethod::hungarian : AssignMethod::greedy;
}

namespace {

// Independent streams derived from the run seed.
constexpr std::uint64_t init_stream = 0x696e6974ULL;
constexpr std::uint64_t shuffle_stream = 0x73687566ULL;
constexpr std::uint64_t lattice_stream = 0x6c617474ULL;

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream)
{
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::vector<Index> stable_order(const std::vector<double>& keys)
{
    std::vector<Index> order(keys.size());
    std::iota(order.begin(), order.end(), Index(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return keys[std::size_t(a)] < keys[std::size_t(b)]; });
    return order;
}

// Data row i gets the lattice row whose first-coordinate rank equals the
// rank of row i's first principal score.
std::vector<Index> pca_sorted_matching(const RowMatrix& data, const RowMatrix& lattice)
{
    const Index n = data.rows();
    const Vector mean = data.colwise().mean().transpose();
    const Matrix centered = data.rowwise() - mean.transpose();
    const Matrix cov = centered.transpose() * centered;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    if (eig.info() != Eigen::Success) {
        throw NumericError("pca_sorted init: eigendecomposition failed");
    }
    Vector axis = eig.eigenvectors().col(cov.cols() - 1);
    Index lead = 0;
    axis.cwiseAbs().maxCoeff(&lead);
    if (axis(lead) < 0.0) {
        axis = -axis;
    }
    const Vector scores = centered * axis;

    std::vector<double> score_keys(scores.data(), scores.data() + n);
    std::vector<double> lattice_keys(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) {
        lattice_keys[std::size_t(k)] = lattice(k, 0);
    }
    const auto data_order = stable_order(score_keys);
    const auto lattice_order = stable_order(lattice_keys);
    std::vector<Index> matching(static_cast<std::size_t>(n));
    for (Index r = 0; r < n; ++r) {
        matching[std::size_t(data_order[std::size_t(r)])] = lattice_order[std::size_t(r)];
    }
    return matching;
}

void check_finite_latents(const RowMatrix& latents)
{
    for (Index i = 0; i < latents.rows(); ++i) {
        if (!latents.row(i).allFinite()) {
            throw NumericError("latent row " + std::to_string(i) + " is not finite");
        }
    }
}

void apply_momentum(TrainState& state, const RowMatrix& lattice, Index row, Index lattice_row, double rho)
{
    state.latents.row(row) = rho * lattice.row(lattice_row) + (1.0 - rho) * state.latents.row(row);
    state.assignment[std::size_t(row)] = lattice_row;
}

double period_fraction(const OptimizerConfig& config, int decoder_epoch, Index batch, Index batches)
{
    const int period = std::max(config.period_epochs, 1);
    return (double(decoder_epoch % period) + double(batch) / double(batches)) / double(period);
}

std::vector<std::vector<Index>> partition(const std::vector<Index>& order, Index batch_size)
{
    std::vector<std::vector<Index>> batches;
    for (std::size_t begin = 0; begin < order.size(); begin += std::size_t(batch_size)) {
        const std::size_t end = std::min(order.size(), begin + std::size_t(batch_size));
        std::vector<Index> batch(order.begin() + std::ptrdiff_t(begin), order.begin() + std::ptrdiff_t(end));
        std::sort(batch.begin(), batch.end());
        batches.push_back(std::move(batch));
    }
    return batches;
}

void check_shapes(const RowMatrix& data, const RowMatrix& lattice, const TrainState& state)
{
    if (data.rows() != state.latents.rows()) {
        throw ShapeError("data has " + std::to_string(data.rows()) + " rows, memory bank has " +
                         std::to_string(state.latents.rows()));
    }
    if (lattice.cols() != state.latents.cols()) {
        throw ShapeError("lattice dimension " + std::to_string(lattice.cols()) + " != latent dimension " +
                         std::to_string(state.latents.cols()));
    }
}

std::string dump_state(const TrainState& state, const TrainConfig& config)
{
    if (!config.dump_dir) {
        return "no dump directory configured";
    }
    try {
        std::filesystem::create_directories(*config.dump_dir);
        const auto model = *config.dump_dir / "failed_model.nsql";
        save_checkpoint(model, state.params);
        write_container(*config.dump_dir / "failed_latents.nsqt", state.latents);
        return "state dumped to " + config.dump_dir->string();
    } catch (const std::exception& e) {
        return std::string("state dump failed: ") + e.what();
    }
}

} // namespace

TrainState init_state(const RowMatrix& data, const RowMatrix& lattice, const TrainConfig& config,
                      const std::optional<Decoder>& initial)
{
    config.validate();
    const Index n = data.rows();
    if (n < 1) {
        throw ShapeError("training data is empty");
    }
    if (lattice.rows() < 1 || lattice.cols() < 1) {
        throw ShapeError("lattice is empty");
    }
    if (config.mode == TrainMode::full_batch && lattice.rows() != n) {
        throw ShapeError("full-batch training needs as many lattice rows as data rows (" +
                         std::to_string(lattice.rows()) + " vs " + std::to_string(n) + ")");
    }
    if (config.mode == TrainMode::minibatch) {
        if (lattice.rows() < n) {
            throw ShapeError("minibatch training needs at least as many lattice rows as data rows (" +
                             std::to_string(lattice.rows()) + " vs " + std::to_string(n) + ")");
        }
        if (n < config.batch_size) {
            throw ShapeError("minibatch training needs n >= batch_size (" + std::to_string(n) + " < " +
                             std::to_string(config.batch_size) + ")");
        }
    }
    config.loss.validate(data.cols());

    TrainState state;
    state.shuffle_rng = Rng(stream_seed(config.seed, shuffle_stream));
    state.lattice_rng = Rng(stream_seed(config.seed, lattice_stream));
    if (initial) {
        initial->validate();
        state.params = *initial;
    } else {
        state.params = make_decoder(lattice.cols(), config.decoder.hidden, data.cols(), config.decoder.activation,
                                    config.decoder.output_activation, config.decoder.init_seed);
    }
    if (state.params.input_dim() != lattice.cols() || state.params.output_dim() != data.cols()) {
        throw ShapeError("decoder maps " + std::to_string(state.params.input_dim()) + " -> " +
                         std::to_string(state.params.output_dim()) + ", training needs " +
                         std::to_string(lattice.cols()) + " -> " + std::to_string(data.cols()));
    }
    state.optimizer = make_optimizer_state(state.params);

    if (config.init == InitMode::pca_sorted) {
        if (lattice.rows() != n) {
            throw ConfigError("pca_sorted init needs as many lattice rows as data rows");
        }
        state.assignment = pca_sorted_matching(data, lattice);
    } else {
        Rng rng(stream_seed(config.seed, init_stream));
        auto perm = rng.permutation(lattice.rows());
        perm.resize(std::size_t(n));
        state.assignment = std::move(perm);
    }
    state.latents.resize(n, lattice.cols());
    for (Index i = 0; i < n; ++i) {
        state.latents.row(i) = lattice.row(state.assignment[std::size_t(i)]);
    }
    return state;
}

double decoder_batch_step(TrainState& state, const RowMatrix& data, const std::vector<Index>& batch,
                          const TrainConfig& config, double fraction)
{
    const Index m = Index(batch.size());
    RowMatrix z(m, state.latents.cols());
    RowMatrix x(m, data.cols());
    for (Index j = 0; j < m; ++j) {
        z.row(j) = state.latents.row(batch[std::size_t(j)]);
        x.row(j) = data.row(batch[std::size_t(j)]);
    }
    const auto trace = forward_trace(state.params, z);
    RowMatrix grad_out(m, data.cols());
    std::vector<double> losses(static_cast<std::size_t>(m));
    parallel_for(m, [&](Index begin, Index end) {
        for (Index j = begin; j < end; ++j) {
            const Vector pred = trace.output.row(j).transpose();
            const Vector target = x.row(j).transpose();
            losses[std::size_t(j)] = loss(config.loss, pred, target);
            grad_out.row(j) = loss_gradient(config.loss, pred, target).transpose() / double(m);
        }
    });
    double total = 0.0;
    for (double l : losses) {
        total += l;
    }
    if (!std::isfinite(total)) {
        throw NumericError("non-finite loss");
    }
    const auto grads = backward(state.params, trace, grad_out);
    adamw_step(state.params, state.optimizer, grads.params, config.optimizer, fraction);
    return total;
}

double decoder_step(TrainState& state, const RowMatrix& data, const TrainConfig& config)
{
    if (data.rows() != state.latents.rows()) {
        throw ShapeError("data has " + std::to_string(data.rows()) + " rows, memory bank has " +
                         std::to_string(state.latents.rows()));
    }
    double total = 0.0;
    for (int inner = 0; inner < config.inner_epochs; ++inner) {
        const auto batches = partition(state.shuffle_rng.permutation(data.rows()), config.batch_size);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const double fraction =
                period_fraction(config.optimizer, state.decoder_epochs, Index(b), Index(batches.size()));
            try {
                total += decoder_batch_step(state, data, batches[b], config, fraction);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(state.epoch + 1) +
                                   ", batch " + std::to_string(b));
            }
        }
        ++state.decoder_epochs;
    }
    return total / (double(data.rows()) * config.inner_epochs);
}

Assignment assignment_step_full(TrainState& state, const RowMatrix& data, const RowMatrix& lattice,
                                const TrainConfig& config)
{
    check_shapes(data, lattice, state);
    if (lattice.rows() != data.rows()) {
        throw ShapeError("full assignment needs as many lattice rows as data rows");
    }
    const CostMatrix cost = build_cost_matrix(data, state.params, lattice, config.loss);
    Assignment result = solve(cost, resolve_assign_method(config, data.rows()));
    for (Index i = 0; i < data.rows(); ++i) {
        apply_momentum(state, lattice, i, result.mapping[std::size_t(i)], config.momentum);
    }
    check_finite_latents(state.latents);
    return result;
}

Assignment assignment_step_minibatch(TrainState& state, const RowMatrix& data, const RowMatrix& lattice,
                                     const std::vector<Index>& batch, const std::vector<Index>& subset,
                                     const TrainConfig& config)
{
    check_shapes(data, lattice, state);
    if (batch.size() != subset.size() || batch.empty()) {
        throw InputError("batch and lattice subset must be non-empty and equal in size (" +
                         std::to_string(batch.size()) + " vs " + std::to_string(subset.size()) + ")");
    }
    auto check_indices = [](const std::vector<Index>& idx, Index bound, const char* what) {
        std::vector<char> seen(static_cast<std::size_t>(bound), 0);
        for (Index k : idx) {
            if (k < 0 || k >= bound) {
                throw InputError(std::string(what) + " index " + std::to_string(k) + " out of range");
            }
            if (seen[std::size_t(k)]) {
                throw InputError(std::string("duplicate ") + what + " index " + std::to_string(k));
            }
            seen[std::size_t(k)] = 1;
        }
    };
    check_indices(batch, data.rows(), "batch");
    check_indices(subset, lattice.rows(), "lattice subset");

    const Index m = Index(batch.size());
    RowMatrix x(m, data.cols());
    RowMatrix q(m, lattice.cols());
    for (Index j = 0; j < m; ++j) {
        x.row(j) = data.row(batch[std::size_t(j)]);
        q.row(j) = lattice.row(subset[std::size_t(j)]);
    }
    const CostMatrix cost = build_cost_matrix(x, state.params, q, config.loss);
    Assignment result = solve(cost, resolve_assign_method(config, m));
    for (Index j = 0; j < m; ++j) {
        apply_momentum(state, lattice, batch[std::size_t(j)], subset[std::size_t(result.mapping[std::size_t(j)])],
                       config.momentum);
    }
    check_finite_latents(state.latents);
    return result;
}

double nearest_lattice_loss(const Decoder& params, const RowMatrix& data, const RowMatrix& lattice,
                            const LossSpec& loss)
{
    const PairwiseLoss pairwise(loss, forward(params, lattice));
    std::vector<double> best(static_cast<std::size_t>(data.rows()));
    parallel_for(data.rows(), [&](Index begin, Index end) {
        for (Index i = begin; i < end; ++i) {
            best[std::size_t(i)] = pairwise.nearest(data.row(i).transpose());
        }
    });
    double total = 0.0;
    for (double b : best) {
        total += b;
    }
    return total / double(data.rows());
}

double training_loss(const Decoder& params, const RowMatrix& latents, const RowMatrix& data, const LossSpec& spec)
{
    if (latents.rows() != data.rows()) {
        throw ShapeError("training_loss: latent and data row counts differ");
    }
    const RowMatrix decoded = forward(params, latents);
    std::vector<double> losses(static_cast<std::size_t>(data.rows()));
    parallel_for(data.rows(), [&](Index begin, Index end) {
        for (Index i = begin; i < end; ++i) {
            losses[std::size_t(i)] = loss(spec, data.row(i).transpose(), decoded.row(i).transpose());
        }
    });
    double total = 0.0;
    for (double l : losses) {
        total += l;
    }
    return total / double(data.rows());
}

namespace {

EpochRecord run_epoch(TrainState& state, const RowMatrix& data, const RowMatrix& lattice, const TrainConfig& config)
{
    const int epoch = state.epoch + 1;
    const bool assign_now = epoch % config.assignment_period == 0;
    EpochRecord record;
    record.epoch = epoch;

    if (config.mode == TrainMode::full_batch) {
        record.mean_loss = decoder_step(state, data, config);
        if (assign_now) {
            const Assignment a = assignment_step_full(state, data, lattice, config);
            record.assignment_cost = a.total_cost / double(data.rows());
            record.assign_method = a.method;
        }
    } else {
        const auto batches = partition(state.shuffle_rng.permutation(data.rows()), config.batch_size);
        double loss_total = 0.0;
        double cost_total = 0.0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& batch = batches[b];
            const double fraction =
                period_fraction(config.optimizer, state.decoder_epochs, Index(b), Index(batches.size()));
            try {
                loss_total += decoder_batch_step(state, data, batch, config, fraction);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b));
            }
            if (assign_now) {
                auto subset = state.lattice_rng.sample_without_replacement(lattice.rows(), Index(batch.size()));
                std::sort(subset.begin(), subset.end());
                const Assignment a = assignment_step_minibatch(state, data, lattice, batch, subset, config);
                cost_total += a.total_cost;
                record.assign_method = a.method;
            }
        }
        ++state.decoder_epochs;
        record.mean_loss = loss_total / double(data.rows());
        if (assign_now) {
            record.assignment_cost = cost_total / double(data.rows());
        }
    }
    if (!std::isfinite(record.mean_loss)) {
        throw NumericError("non-finite mean loss at epoch " + std::to_string(epoch));
    }
    state.epoch = epoch;
    return record;
}

} // namespace

TrainState fit(const RowMatrix& data, const RowMatrix& lattice, const TrainConfig& config,
               const std::optional<Decoder>& initial, const std::optional<RowMatrix>& validation)
{
    TrainState state = init_state(data, lattice, config, initial);
    if (validation && validation->rows() > 0 && validation->cols() != data.cols()) {
        throw ShapeError("validation width " + std::to_string(validation->cols()) + " != data width " +
                         std::to_string(data.cols()));
    }
    const bool use_validation = validation && validation->rows() > 0;
    while (state.epoch < config.max_epochs) {
        const auto start = std::chrono::steady_clock::now();
        EpochRecord record;
        try {
            record = run_epoch(state, data, lattice, config);
            if (use_validation) {
                record.validation_loss = nearest_lattice_loss(state.params, *validation, lattice, config.loss);
                if (!std::isfinite(*record.validation_loss)) {
                    throw NumericError("non-finite validation loss at epoch " + std::to_string(record.epoch));
                }
            }
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + "; " + dump_state(state, config));
        }
        const auto stop = std::chrono::steady_clock::now();
        record.epoch_ms = std::chrono::duration<double, std::milli>(stop - start).count();
        record.peak_rss_kb = peak_rss_kb();
        state.history.push_back(record);

        const double monitored = use_validation ? *record.validation_loss : record.mean_loss;
        state.early_stop = early_stop_update(state.early_stop.best_loss, monitored, state.early_stop.counter,
                                             config.patience);
        if (state.early_stop.should_stop) {
            break;
        }
    }
    return state;
}

RowMatrix sample(const Decoder& params, const SampleRequest& request, const PriorSpec& prior,
                 const RowMatrix* lattice)
{
    if (request.count < 1) {
        throw InputError("sample count must be >= 1, got " + std::to_string(request.count));
    }
    prior.validate();
    if (params.input_dim() != prior.dim) {
        throw ShapeError("prior dimension " + std::to_string(prior.dim) + " != decoder input width " +
                         std::to_string(params.input_dim()));
    }
    if (request.mode == SampleMode::prior_draws) {
        return forward(params, sample_prior(prior, request.count, request.seed));
    }
    if (lattice == nullptr) {
        throw InputError("lattice_rows sampling needs a lattice");
    }
    if (lattice->cols() != params.input_dim()) {
        throw ShapeError("lattice dimension " + std::to_string(lattice->cols()) + " != decoder input width " +
                         std::to_string(params.input_dim()));
    }
    if (request.count > lattice->rows()) {
        throw ConfigError("requested " + std::to_string(request.count) + " lattice rows, lattice has " +
                          std::to_string(lattice->rows()));
    }
    return forward(params, RowMatrix(lattice->topRows(request.count)));
}

LatentTable export_latents(const RowMatrix& latents, const std::optional<std::vector<int>>& labels)
{
    const Index n = latents.rows();
    const Index d = latents.cols();
    if (labels && Index(labels->size()) != n) {
        throw ShapeError("export_latents: " + std::to_string(labels->size()) + " labels for " + std::to_string(n) +
                         " rows");
    }
    LatentTable table;
    table.header.push_back("index");
    for (Index k = 0; k < d; ++k) {
        table.header.push_back("z" + std::to_string(k));
    }
    if (labels) {
        table.header.push_back("label");
    }
    table.rows.resize(n, Index(table.header.size()));
    for (Index i = 0; i < n; ++i) {
        table.rows(i, 0) = double(i);
        table.rows.row(i).segment(1, d) = latents.row(i);
        if (labels) {
            table.rows(i, d + 1) = double((*labels)[std::size_t(i)]);
        }
    }
    return table;
}

std::optional<long> peak_rss_kb()
{
    rusage usage{};
    if (getrusage(RUSAGE_SELF, &usage) != 0 || usage.ru_maxrss <= 0) {
        return std::nullopt;
    }
    return usage.ru_maxrss;
}

} // namespace nsql
