#pragma once

// Shared training fixtures.

#include "nsql/prior.hpp"
#include "nsql/train.hpp"

#include <vector>

namespace nsql::test {

inline Decoder identity_decoder(Index d)
{
    Decoder params;
    params.layers.push_back({Matrix::Identity(d, d), Vector::Zero(d)});
    params.output_activation = OutputActivation::identity;
    return params;
}

// Data are lattice rows shuffled by sigma: data.row(i) == lattice.row(sigma[i]).
struct RecoveryInstance {
    RowMatrix lattice;
    RowMatrix data;
    std::vector<Index> sigma;
};

inline RecoveryInstance recovery_instance(Index n, Index d, std::uint64_t seed)
{
    RecoveryInstance inst;
    inst.lattice = build_lattice({PriorKind::uniform01, d}, n, LatticeSource::sobol, seed).points;
    inst.sigma = Rng(seed + 1000).permutation(n);
    inst.data.resize(n, d);
    for (Index i = 0; i < n; ++i) {
        inst.data.row(i) = inst.lattice.row(inst.sigma[std::size_t(i)]);
    }
    return inst;
}

// L2 loss, Hungarian, frozen decoder (learning rate 0), assignment every epoch.
inline TrainConfig recovery_config(Index n, double rho)
{
    TrainConfig config;
    config.max_epochs = 3;
    config.assignment_period = 1;
    config.momentum = rho;
    config.batch_size = n;
    config.assign_method = AssignChoice::hungarian;
    config.patience = 1000;
    config.loss.kind = LossKind::l2;
    config.optimizer.learning_rate = 0.0;
    config.optimizer.weight_decay = 0.0;
    config.decoder.output_activation = OutputActivation::identity;
    return config;
}

} // namespace nsql::test
