#include "lgrit/ar/tokens.hpp"

#include <fstream>
#include <string>

#include "lgrit/core/binio.hpp"
#include "lgrit/core/error.hpp"

namespace lgrit::ar {

std::vector<std::int32_t> grid_to_sequence(const TokenGrid& grid) {
    if (grid.tokens.size() != grid.height * grid.width) {
        throw ValidationError("token grid: " + std::to_string(grid.tokens.size()) + " tokens for " +
                              std::to_string(grid.height) + "x" + std::to_string(grid.width));
    }
    return grid.tokens;
}

TokenGrid tokens_to_grid(const std::vector<std::int32_t>& sequence, std::size_t height, std::size_t width,
                         std::int32_t sentinel) {
    const std::size_t n = height * width;
    TokenGrid g{height, width, {}};
    if (sequence.size() == n + 1 && sentinel >= 0 && sequence.front() == sentinel) {
        g.tokens.assign(sequence.begin() + 1, sequence.end());
    } else if (sequence.size() == n) {
        g.tokens = sequence;
    } else {
        throw ValidationError("tokens_to_grid: sequence of " + std::to_string(sequence.size()) + " tokens for a " +
                              std::to_string(height) + "x" + std::to_string(width) + " grid");
    }
    return g;
}

void write_tokens(const std::filesystem::path& path, const TokenDataset& data) {
    const std::size_t n = data.height * data.width;
    for (std::size_t i = 0; i < data.sequences.size(); ++i) {
        if (data.sequences[i].size() != n) {
            throw ValidationError("write_tokens: sequence " + std::to_string(i) + " has " +
                                  std::to_string(data.sequences[i].size()) + " tokens, expected " + std::to_string(n));
        }
        for (auto t : data.sequences[i]) {
            if (t < 0 || t > 0xffff) throw ValidationError("write_tokens: token " + std::to_string(t) + " does not fit u16");
        }
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    binio::write_magic(os, "LGRITTOK");
    binio::write_u32(os, kTokenFileVersion);
    binio::write_u32(os, static_cast<std::uint32_t>(data.sequences.size()));
    binio::write_u32(os, static_cast<std::uint32_t>(data.height));
    binio::write_u32(os, static_cast<std::uint32_t>(data.width));
    for (const auto& s : data.sequences)
        for (auto t : s) binio::write_u16(os, static_cast<std::uint16_t>(t));
    if (!os) throw IoError("write failed for " + path.string());
}

TokenDataset read_tokens(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open token file " + path.string());
    binio::expect_magic(is, "LGRITTOK");
    const auto version = binio::read_u32(is, "token file version");
    if (version != kTokenFileVersion) {
        throw IoError("token file " + path.string() + " has unsupported version " + std::to_string(version));
    }
    const auto count = binio::read_u32(is, "token count");
    TokenDataset d;
    d.height = binio::read_u32(is, "token grid height");
    d.width = binio::read_u32(is, "token grid width");
    d.sequences.resize(count);
    for (auto& s : d.sequences) {
        s.resize(d.height * d.width);
        for (auto& t : s) t = binio::read_u16(is, "token payload");
    }
    if (is.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in token file " + path.string());
    return d;
}

}  // namespace lgrit::ar
