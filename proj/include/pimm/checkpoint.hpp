#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pimm/array.hpp"
#include "pimm/layers.hpp"

namespace pimm {

/// Flat binary checkpoint: a text header line `pimm-checkpoint <version>`,
/// then little-endian records of (name length u32, name bytes, ndim u32,
/// dims u64..., values f64...). Writes are atomic (temp file + rename).
void save_checkpoint(const ParameterStore& store, const std::string& path);

/// All named arrays from a checkpoint, in file order.
std::vector<std::pair<std::string, Array>> load_checkpoint(
    const std::string& path);

/// Loads a checkpoint into an existing store; every parameter must be
/// present with a matching shape.
void restore_checkpoint(ParameterStore& store, const std::string& path);

}  // namespace pimm
