#include "nsql/decoder.hpp"

#include <cmath>

namespace nsql {

std::string to_string(Activation a)
{
    return a == Activation::relu ? "relu" : "tanh";
}

std::string to_string(OutputActivation a)
{
    return a == OutputActivation::sigmoid ? "sigmoid" : "identity";
}

Activation parse_activation(const std::string& name)
{
    if (name == "relu") {
        return Activation::relu;
    }
    if (name == "tanh") {
        return Activation::tanh;
    }
    throw ConfigError("unknown activation '" + name + "' (expected relu or tanh)");
}

OutputActivation parse_output_activation(const std::string& name)
{
    if (name == "sigmoid") {
        return OutputActivation::sigmoid;
    }
    if (name == "identity") {
        return OutputActivation::identity;
    }
    throw ConfigError("unknown output activation '" + name + "' (expected sigmoid or identity)");
}

Decoder make_decoder(Index input_dim, const std::vector<Index>& hidden, Index output_dim,
                     Activation activation, OutputActivation output_activation, std::uint64_t seed)
{
    if (input_dim < 1 || output_dim < 1) {
        throw ShapeError("decoder needs positive input and output widths");
    }
    std::vector<Index> widths{input_dim};
    for (Index w : hidden) {
        if (w < 1) {
            throw ShapeError("hidden width must be positive");
        }
        widths.push_back(w);
    }
    widths.push_back(output_dim);

    Rng rng(seed);
    Decoder params;
    params.activation = activation;
    params.output_activation = output_activation;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const Index fan_in = widths[l];
        const Index fan_out = widths[l + 1];
        const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
        DenseLayer<double> layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
        for (Index r = 0; r < fan_out; ++r) {
            for (Index c = 0; c < fan_in; ++c) {
                layer.weight(r, c) = limit * (2.0 * rng.uniform() - 1.0);
            }
        }
        params.layers.push_back(std::move(layer));
    }
    return params;
}

} // namespace nsql
