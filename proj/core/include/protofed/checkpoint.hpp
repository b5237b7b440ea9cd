#pragma once

#include <string>

#include "protofed/param_store.hpp"

namespace protofed {

/// Writes every entry of the store (buffers included) as a flat binary
/// file: magic, a JSON header listing names/shapes/dtype, then raw
/// little-endian f64 data in header order.
void save_checkpoint(const std::string& path, const ParamStore& params);

/// Restores values into an existing store; names and shapes must match.
void load_checkpoint(const std::string& path, ParamStore& params);

}  // namespace protofed
