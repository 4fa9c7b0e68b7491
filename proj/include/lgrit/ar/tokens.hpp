#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace lgrit::ar {

/// h x w token indices, row-major.
struct TokenGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::int32_t> tokens;

    std::int32_t at(std::size_t r, std::size_t c) const { return tokens[r * width + c]; }
};

std::vector<std::int32_t> grid_to_sequence(const TokenGrid& grid);

/// Inverse of grid_to_sequence. A sequence of h*w + 1 entries whose first
/// entry is `sentinel` has the sentinel stripped; any other length throws.
TokenGrid tokens_to_grid(const std::vector<std::int32_t>& sequence, std::size_t height, std::size_t width,
                         std::int32_t sentinel = -1);

/// Token file: "LGRITTOK", u32 version, u32 count, u32 h, u32 w, then
/// count * h * w little-endian u16 indices.
struct TokenDataset {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::vector<std::int32_t>> sequences;
};

inline constexpr std::uint32_t kTokenFileVersion = 1;

void write_tokens(const std::filesystem::path& path, const TokenDataset& data);
TokenDataset read_tokens(const std::filesystem::path& path);

}  // namespace lgrit::ar
