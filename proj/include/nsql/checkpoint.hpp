#pragma once

#include "nsql/decoder.hpp"

#include <filesystem>

namespace nsql {

inline constexpr std::uint32_t checkpoint_version = 1;

/// Binary layout (little-endian): "NSQL", version u32, layer count u32, then
/// per layer rows u32, cols u32, row-major f64 weights, f64 biases; finally
/// the hidden and output activation enums as u8.
void save_checkpoint(const std::filesystem::path& path, const Decoder& params);
Decoder load_checkpoint(const std::filesystem::path& path);

} // namespace nsql
