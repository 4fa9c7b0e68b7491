#pragma once

#include <filesystem>

#include "lgrit/ad/optim.hpp"

namespace lgrit::ad {

// "LGRITCKP", u32 version, u32 entry count, then per entry: u32 name byte
// length, UTF-8 name, u32 rank, rank x u32 dims, float32 payload. All
// integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<T>& store);

/// Fills every parameter of `store` from the file. Missing entries, extra
/// entries and shape mismatches throw ValidationError naming the entry.
template <typename T>
void load_checkpoint(const std::filesystem::path& path, ParameterStore<T>& store);

}  // namespace lgrit::ad
