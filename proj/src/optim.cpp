#include "nsql/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nsql {

void OptimizerConfig::validate() const
{
    // Zero is accepted: it freezes the decoder.
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("optimizer.learning_rate must be >= 0 and finite");
    }
    if (!(weight_decay >= 0.0)) {
        throw ConfigError("optimizer.weight_decay must be >= 0");
    }
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw ConfigError("optimizer betas must lie in (0, 1)");
    }
    if (!(eps > 0.0)) {
        throw ConfigError("optimizer.eps must be > 0");
    }
    if (!(grad_clip_norm > 0.0)) {
        throw ConfigError("optimizer.grad_clip_norm must be > 0");
    }
    if (schedule == Schedule::cosine_warm_restarts && period_epochs < 1) {
        throw ConfigError("optimizer.period_epochs must be >= 1");
    }
}

OptimizerState make_optimizer_state(const Decoder& params)
{
    return {zeros_like(params), zeros_like(params), 0};
}

double scheduled_learning_rate(const OptimizerConfig& config, double period_fraction)
{
    if (config.schedule == Schedule::constant) {
        return config.learning_rate;
    }
    const double f = std::clamp(period_fraction, 0.0, 1.0);
    return config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
}

double global_norm(const LayerTensors<double>& grads)
{
    double sum = 0.0;
    for (const auto& g : grads) {
        sum += g.weight.squaredNorm();
        sum += g.bias.squaredNorm();
    }
    return std::sqrt(sum);
}

double clip_global_norm(LayerTensors<double>& grads, double max_norm)
{
    const double norm = global_norm(grads);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& g : grads) {
            g.weight *= scale;
            g.bias *= scale;
        }
    }
    return norm;
}

void adamw_step(Decoder& params, OptimizerState& state, LayerTensors<double> grads,
                const OptimizerConfig& config, double period_fraction)
{
    if (grads.size() != params.layers.size() || state.first_moment.size() != params.layers.size()) {
        throw ShapeError("adamw_step: gradient/state layer count does not match the decoder");
    }
    for (std::size_t l = 0; l < grads.size(); ++l) {
        if (grads[l].weight.rows() != params.layers[l].out() || grads[l].weight.cols() != params.layers[l].in() ||
            grads[l].bias.size() != params.layers[l].out()) {
            throw ShapeError("adamw_step: gradient shape mismatch at layer " + std::to_string(l));
        }
        if (!grads[l].weight.allFinite()) {
            throw NumericError("non-finite gradient in layer " + std::to_string(l) + " weight");
        }
        if (!grads[l].bias.allFinite()) {
            throw NumericError("non-finite gradient in layer " + std::to_string(l) + " bias");
        }
    }
    clip_global_norm(grads, config.grad_clip_norm);

    state.step += 1;
    const double lr = scheduled_learning_rate(config, period_fraction);
    const double correction1 = 1.0 - std::pow(config.beta1, double(state.step));
    const double correction2 = 1.0 - std::pow(config.beta2, double(state.step));
    const double decay = 1.0 - lr * config.weight_decay;

    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m = config.beta1 * m + (1.0 - config.beta1) * g;
        v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
        param *= decay;
        param.array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + config.eps);
    };
    for (std::size_t l = 0; l < grads.size(); ++l) {
        update(params.layers[l].weight, state.first_moment[l].weight, state.second_moment[l].weight,
               grads[l].weight);
        update(params.layers[l].bias, state.first_moment[l].bias, state.second_moment[l].bias, grads[l].bias);
    }
}

EarlyStop early_stop_update(double best_loss, double current_loss, int patience_counter, int patience)
{
    if (patience < 1) {
        throw ConfigError("early stopping patience must be >= 1");
    }
    EarlyStop out;
    if (current_loss < best_loss) {
        out.best_loss = current_loss;
        out.counter = 0;
    } else {
        out.best_loss = best_loss;
        out.counter = patience_counter + 1;
    }
    out.should_stop = out.counter >= patience;
    return out;
}

} // namespace nsql
