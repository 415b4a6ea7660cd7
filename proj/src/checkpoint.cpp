#include "nsql/checkpoint.hpp"

#include "binary_io.hpp"

#include <fstream>

namespace nsql {

void save_checkpoint(const std::filesystem::path& path, const Decoder& params)
{
    params.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    out.write("NSQL", 4);
    detail::write_u32(out, checkpoint_version);
    detail::write_u32(out, std::uint32_t(params.layers.size()));
    for (const auto& layer : params.layers) {
        detail::write_u32(out, std::uint32_t(layer.out()));
        detail::write_u32(out, std::uint32_t(layer.in()));
        for (Index r = 0; r < layer.out(); ++r) {
            for (Index c = 0; c < layer.in(); ++c) {
                detail::write_f64(out, layer.weight(r, c));
            }
        }
        for (Index r = 0; r < layer.out(); ++r) {
            detail::write_f64(out, layer.bias(r));
        }
    }
    detail::write_u8(out, static_cast<std::uint8_t>(params.activation));
    detail::write_u8(out, static_cast<std::uint8_t>(params.output_activation));
    if (!out) {
        throw Error("write failed: " + path.string());
    }
}

Decoder load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open checkpoint " + path.string());
    }
    const std::string what = "checkpoint " + path.string();
    std::array<char, 4> magic{};
    detail::read_exact(in, magic.data(), 4, what);
    if (std::string(magic.data(), 4) != "NSQL") {
        throw FormatError(what + ": bad magic " + detail::hex_bytes(magic));
    }
    const std::uint32_t version = detail::read_u32(in, what);
    if (version != checkpoint_version) {
        throw FormatError(what + ": unsupported version " + std::to_string(version));
    }
    const std::uint32_t count = detail::read_u32(in, what);
    Decoder params;
    for (std::uint32_t l = 0; l < count; ++l) {
        const std::uint32_t rows = detail::read_u32(in, what);
        const std::uint32_t cols = detail::read_u32(in, what);
        DenseLayer<double> layer{Matrix(rows, cols), Vector(rows)};
        for (Index r = 0; r < rows; ++r) {
            for (Index c = 0; c < cols; ++c) {
                layer.weight(r, c) = detail::read_f64(in, what);
            }
        }
        for (Index r = 0; r < rows; ++r) {
            layer.bias(r) = detail::read_f64(in, what);
        }
        params.layers.push_back(std::move(layer));
    }
    const std::uint8_t act = detail::read_u8(in, what);
    const std::uint8_t out_act = detail::read_u8(in, what);
    if (act > 1 || out_act > 1) {
        throw FormatError(what + ": unknown activation code");
    }
    detail::expect_eof(in, what);
    params.activation = static_cast<Activation>(act);
    params.output_activation = static_cast<OutputActivation>(out_act);
    params.validate();
    return params;
}

} // namespace nsql
