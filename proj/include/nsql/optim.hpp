#pragma once

#include "nsql/decoder.hpp"

#include <limits>

namespace nsql {

enum class Schedule { constant, cosine_warm_restarts };

struct OptimizerConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-4; // decoupled; plays the role of the lambda * R(theta) penalty
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip_norm = 1.0;
    Schedule schedule = Schedule::cosine_warm_restarts;
    int period_epochs = 50;

    void validate() const;
};

struct OptimizerState {
    LayerTensors<double> first_moment;
    LayerTensors<double> second_moment;
    std::int64_t step = 0;
};

OptimizerState make_optimizer_state(const Decoder& params);

/// Learning rate at a position within the current restart period
/// (`period_fraction` in [0, 1]).
double scheduled_learning_rate(const OptimizerConfig& config, double period_fraction);

double global_norm(const LayerTensors<double>& grads);

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(LayerTensors<double>& grads, double max_norm);

/// One AdamW update: clip, update moments, bias-correct, then apply the
/// step and the decoupled decay at the scheduled learning rate. Throws
/// NumericError naming the offending tensor when a gradient is not finite.
void adamw_step(Decoder& params, OptimizerState& state, LayerTensors<double> grads,
                const OptimizerConfig& config, double period_fraction);

struct EarlyStop {
    double best_loss = std::numeric_limits<double>::infinity();
    int counter = 0;
    bool should_stop = false;
};

/// Resets the counter on strict improvement, otherwise increments it.
EarlyStop early_stop_update(double best_loss, double current_loss, int patience_counter, int patience);

} // namespace nsql
