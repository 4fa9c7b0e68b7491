#include "lgrit/ad/checkpoint.hpp"

#include <fstream>
#include <map>

#include "lgrit/core/binio.hpp"
#include "lgrit/core/error.hpp"

namespace lgrit::ad {
namespace {
constexpr std::string_view kMagic = "LGRITCKP";
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<T>& store) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    binio::write_magic(os, kMagic);
    binio::write_u32(os, kCheckpointVersion);
    binio::write_u32(os, static_cast<std::uint32_t>(store.params().size()));
    for (const auto& p : store.params()) {
        binio::write_u32(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        binio::write_u32(os, static_cast<std::uint32_t>(p.tensor.rank()));
        for (auto d : p.tensor.shape()) binio::write_u32(os, static_cast<std::uint32_t>(d));
        for (T v : p.tensor.data()) binio::write_f32(os, static_cast<float>(v));
    }
    if (!os) throw IoError("write failed: " + path.string());
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, ParameterStore<T>& store) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint not found: " + path.string());
    binio::expect_magic(is, kMagic);
    const auto version = binio::read_u32(is, "checkpoint version");
    if (version != kCheckpointVersion) {
        throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = binio::read_u32(is, "entry count");
    std::map<std::string, bool> seen;
    for (std::uint32_t e = 0; e < count; ++e) {
        const auto len = binio::read_u32(is, "name length");
        if (len > 4096) throw IoError(path.string() + ": implausible entry name length");
        std::string name(len, '\0');
        binio::read_exact(is, name.data(), len, "entry name");
        const auto rank = binio::read_u32(is, "rank");
        if (rank > 8) throw IoError(path.string() + ": implausible rank for '" + name + "'");
        Shape shape(rank);
        for (auto& d : shape) d = binio::read_u32(is, "dims");
        auto* p = store.find(name);
        if (!p) {
            throw ValidationError(path.string() + ": checkpoint entry '" + name +
                                  "' does not exist in the model built from the config");
        }
        if (p->tensor.shape() != shape) {
            throw ValidationError(path.string() + ": checkpoint entry '" + name + "' has shape " + shape_str(shape) +
                                  " but the config builds " + shape_str(p->tensor.shape()) +
                                  "; the checkpoint was trained with different model settings");
        }
        auto out = p->tensor.mutable_data();
        for (auto& v : out) v = static_cast<T>(binio::read_f32(is, "payload"));
        seen[name] = true;
    }
    for (const auto& p : store.params()) {
        if (!seen.count(p.name)) {
            throw ValidationError(path.string() + ": checkpoint lacks parameter '" + p.name + "' required by the config");
        }
    }
}

template void save_checkpoint<float>(const std::filesystem::path&, const ParameterStore<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, const ParameterStore<double>&);
template void load_checkpoint<float>(const std::filesystem::path&, ParameterStore<float>&);
template void load_checkpoint<double>(const std::filesystem::path&, ParameterStore<double>&);

}  // namespace lgrit::ad
