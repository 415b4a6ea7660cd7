#pragma once

// Fully connected decoder G(z) = W_L o act o ... o act o W_1 (z), with an
// optional sigmoid on the output, and its hand-derived reverse pass.

#include "nsql/core.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace nsql {

enum class Activation : std::uint8_t { relu = 0, tanh = 1 };
enum class OutputActivation : std::uint8_t { sigmoid = 0, identity = 1 };

std::string to_string(Activation a);
std::string to_string(OutputActivation a);
Activation parse_activation(const std::string& name);
OutputActivation parse_output_activation(const std::string& name);

template <typename Scalar>
struct DenseLayer {
    MatrixX<Scalar> weight; // out x in
    VectorX<Scalar> bias;   // out

    [[nodiscard]] Index in() const { return weight.cols(); }
    [[nodiscard]] Index out() const { return weight.rows(); }
};

template <typename Scalar>
struct DecoderParams {
    std::vector<DenseLayer<Scalar>> layers;
    Activation activation = Activation::relu;
    OutputActivation output_activation = OutputActivation::identity;

    [[nodiscard]] Index input_dim() const { return layers.empty() ? 0 : layers.front().in(); }
    [[nodiscard]] Index output_dim() const { return layers.empty() ? 0 : layers.back().out(); }

    [[nodiscard]] Index parameter_count() const
    {
        Index total = 0;
        for (const auto& layer : layers) {
            total += layer.weight.size() + layer.bias.size();
        }
        return total;
    }

    /// Throws ShapeError naming the first layer whose dimensions do not chain.
    void validate() const
    {
        if (layers.empty()) {
            throw ShapeError("decoder has no layers");
        }
        for (std::size_t l = 0; l < layers.size(); ++l) {
            if (layers[l].bias.size() != layers[l].out()) {
                throw ShapeError("layer " + std::to_string(l) + ": bias length " +
                                 std::to_string(layers[l].bias.size()) + " != output width " +
                                 std::to_string(layers[l].out()));
            }
            if (l > 0 && layers[l].in() != layers[l - 1].out()) {
                throw ShapeError("layer " + std::to_string(l) + ": input width " +
                                 std::to_string(layers[l].in()) + " != output width " +
                                 std::to_string(layers[l - 1].out()) + " of layer " +
                                 std::to_string(l - 1));
            }
        }
    }

    bool operator==(const DecoderParams& other) const
    {
        if (activation != other.activation || output_activation != other.output_activation ||
            layers.size() != other.layers.size()) {
            return false;
        }
        for (std::size_t l = 0; l < layers.size(); ++l) {
            if (layers[l].weight.rows() != other.layers[l].weight.rows() ||
                layers[l].weight.cols() != other.layers[l].weight.cols() ||
                layers[l].weight != other.layers[l].weight || layers[l].bias != other.layers[l].bias) {
                return false;
            }
        }
        return true;
    }
};

using Decoder = DecoderParams<double>;

/// Same layout as the decoder's layers; used for gradients and Adam moments.
template <typename Scalar>
using LayerTensors = std::vector<DenseLayer<Scalar>>;

template <typename Scalar>
LayerTensors<Scalar> zeros_like(const DecoderParams<Scalar>& params)
{
    LayerTensors<Scalar> out;
    out.reserve(params.layers.size());
    for (const auto& layer : params.layers) {
        out.push_back({MatrixX<Scalar>::Zero(layer.out(), layer.in()), VectorX<Scalar>::Zero(layer.out())});
    }
    return out;
}

/// Decoder with widths input_dim -> hidden... -> output_dim. Weights are
/// uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
Decoder make_decoder(Index input_dim, const std::vector<Index>& hidden, Index output_dim,
                     Activation activation, OutputActivation output_activation, std::uint64_t seed);

namespace detail {

template <typename Scalar>
Scalar sigmoid(Scalar x)
{
    using std::exp;
    return x >= Scalar(0) ? Scalar(1) / (Scalar(1) + exp(-x)) : exp(x) / (Scalar(1) + exp(x));
}

template <typename Derived>
void apply_hidden(Activation act, Eigen::MatrixBase<Derived>& h)
{
    using Scalar = typename Derived::Scalar;
    if (act == Activation::relu) {
        h = h.cwiseMax(Scalar(0));
    } else {
        h = h.array().tanh().matrix();
    }
}

} // namespace detail

/// Per-layer inputs and pre-activations of a batched forward pass.
template <typename Scalar>
struct ForwardTrace {
    std::vector<RowMatrixX<Scalar>> inputs;   // input to layer l (batch x in_l)
    std::vector<RowMatrixX<Scalar>> preacts;  // W_l x + b_l (batch x out_l)
    RowMatrixX<Scalar> output;                // batch x p
};

template <typename Scalar>
ForwardTrace<Scalar> forward_trace(const DecoderParams<Scalar>& params, const RowMatrixX<Scalar>& z)
{
    params.validate();
    if (z.cols() != params.input_dim()) {
        throw ShapeError("layer 0: latent width " + std::to_string(z.cols()) +
                         " != decoder input width " + std::to_string(params.input_dim()));
    }
    ForwardTrace<Scalar> trace;
    trace.inputs.reserve(params.layers.size());
    trace.preacts.reserve(params.layers.size());
    RowMatrixX<Scalar> h = z;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        RowMatrixX<Scalar> pre = h * layer.weight.transpose();
        pre.rowwise() += layer.bias.transpose();
        trace.inputs.push_back(std::move(h));
        trace.preacts.push_back(pre);
        if (l + 1 < params.layers.size()) {
            detail::apply_hidden(params.activation, pre);
        } else if (params.output_activation == OutputActivation::sigmoid) {
            pre = pre.unaryExpr([](Scalar x) { return detail::sigmoid(x); });
        }
        h = std::move(pre);
    }
    trace.output = std::move(h);
    return trace;
}

/// Decodes every row of z.
template <typename Scalar>
RowMatrixX<Scalar> forward(const DecoderParams<Scalar>& params, const RowMatrixX<Scalar>& z)
{
    return forward_trace(params, z).output;
}

/// Decodes a single latent vector.
template <typename Scalar>
VectorX<Scalar> forward(const DecoderParams<Scalar>& params, const VectorX<Scalar>& z)
{
    RowMatrixX<Scalar> row = z.transpose();
    return forward_trace(params, row).output.row(0).transpose();
}

template <typename Scalar>
struct Gradients {
    LayerTensors<Scalar> params;
    RowMatrixX<Scalar> latents; // d(objective)/dz, one row per input row
};

/// Reverse pass for sum_rows <grad_out_row, G(z_row)>. Parameter gradients
/// are summed over the batch.
template <typename Scalar>
Gradients<Scalar> backward(const DecoderParams<Scalar>& params, const ForwardTrace<Scalar>& trace,
                           const RowMatrixX<Scalar>& grad_out)
{
    if (grad_out.rows() != trace.output.rows() || grad_out.cols() != trace.output.cols()) {
        throw ShapeError("backward: upstream gradient is " + std::to_string(grad_out.rows()) + "x" +
                         std::to_string(grad_out.cols()) + ", output is " +
                         std::to_string(trace.output.rows()) + "x" + std::to_string(trace.output.cols()));
    }
    Gradients<Scalar> grads;
    grads.params.resize(params.layers.size());

    RowMatrixX<Scalar> delta = grad_out;
    if (params.output_activation == OutputActivation::sigmoid) {
        delta.array() *= trace.output.array() * (Scalar(1) - trace.output.array());
    }
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const auto& layer = params.layers[l];
        grads.params[l].weight = delta.transpose() * trace.inputs[l];
        grads.params[l].bias = delta.colwise().sum().transpose();
        RowMatrixX<Scalar> upstream = delta * layer.weight;
        if (l > 0) {
            // inputs[l] is the activated output of layer l-1.
            const auto& pre = trace.preacts[l - 1];
            if (params.activation == Activation::relu) {
                upstream.array() *= (pre.array() > Scalar(0)).template cast<Scalar>();
            } else {
                upstream.array() *= Scalar(1) - trace.inputs[l].array().square();
            }
        }
        delta = std::move(upstream);
    }
    grads.latents = std::move(delta);
    return grads;
}

template <typename Scalar>
Gradients<Scalar> backward(const DecoderParams<Scalar>& params, const RowMatrixX<Scalar>& z,
                           const RowMatrixX<Scalar>& grad_out)
{
    return backward(params, forward_trace(params, z), grad_out);
}

template <typename Scalar>
Gradients<Scalar> backward(const DecoderParams<Scalar>& params, const VectorX<Scalar>& z,
                           const VectorX<Scalar>& grad_out)
{
    RowMatrixX<Scalar> zr = z.transpose();
    RowMatrixX<Scalar> gr = grad_out.transpose();
    return backward(params, forward_trace(params, zr), gr);
}

} // namespace nsql
