#include <cstring>
#include <fstream>

#include "uad/denoiser.hpp"
#include "uad/io.hpp"

namespace uad {

namespace {

constexpr std::uint16_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error(std::string("UADC: truncated while reading ") + what);
    return v;
}

}  // namespace

void checkpoint_save(const DenoiserParams& params, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    os.write("UADC", 4);
    put<std::uint16_t>(os, kVersion);
    const UNetConfig& c = params.config;
    put<std::uint32_t>(os, c.in_channels);
    put<std::uint32_t>(os, c.base_channels);
    put<std::uint32_t>(os, c.depth);
    put<std::uint32_t>(os, c.blocks_per_level);
    put<std::uint32_t>(os, c.time_embed_dim);
    put<std::uint32_t>(os, c.groups);
    put<std::uint32_t>(os, c.pad_mode == PadMode::Periodic ? 1 : 0);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(params.tensors.size()));
    for (const auto& [name, tensor] : params.tensors) {
        put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_uadt(os, tensor);
    }
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

DenoiserParams checkpoint_load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "UADC", 4) != 0)
        throw std::runtime_error("UADC: bad magic bytes in " + path.string());
    auto version = get<std::uint16_t>(is, "version");
    if (version != kVersion)
        throw std::runtime_error("UADC: unsupported version " + std::to_string(version));
    DenoiserParams p;
    p.config.in_channels = static_cast<int>(get<std::uint32_t>(is, "in_channels"));
    p.config.base_channels = static_cast<int>(get<std::uint32_t>(is, "base_channels"));
    p.config.depth = static_cast<int>(get<std::uint32_t>(is, "depth"));
    p.config.blocks_per_level = static_cast<int>(get<std::uint32_t>(is, "blocks_per_level"));
    p.config.time_embed_dim = static_cast<int>(get<std::uint32_t>(is, "time_embed_dim"));
    p.config.groups = static_cast<int>(get<std::uint32_t>(is, "groups"));
    p.config.pad_mode = get<std::uint32_t>(is, "pad_mode") ? PadMode::Periodic : PadMode::Zero;
    auto count = get<std::uint32_t>(is, "tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        auto len = get<std::uint16_t>(is, "name length");
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (!is) throw std::runtime_error("UADC: truncated name");
        p.tensors.emplace(std::move(name), read_uadt(is));
    }

    // validate against the architecture the config describes
    auto specs = unet_param_specs(p.config);
    if (specs.size() != p.tensors.size())
        throw std::runtime_error("UADC: config mismatch: expected " +
                                 std::to_string(specs.size()) + " tensors, file has " +
                                 std::to_string(p.tensors.size()));
    for (const auto& spec : specs) {
        auto it = p.tensors.find(spec.name);
        if (it == p.tensors.end())
            throw std::runtime_error("UADC: missing tensor " + spec.name);
        if (it->second.shape != spec.shape)
            throw std::runtime_error("UADC: shape mismatch for " + spec.name);
        if (!it->second.all_finite())
            throw std::runtime_error("UADC: non-finite values in " + spec.name);
    }
    for (const auto& [name, tensor] : p.tensors) {
        bool known = false;
        for (const auto& spec : specs)
            if (spec.name == name) { known = true; break; }
        if (!known) throw std::runtime_error("UADC: unknown tensor name " + name);
    }
    return p;
}

DenoiserParams checkpoint_load_expect(const std::filesystem::path& path, const UNetConfig& cfg) {
    DenoiserParams p = checkpoint_load(path);
    if (!(p.config == cfg))
        throw std::runtime_error("UADC: config mismatch: checkpoint architecture differs from the "
                                 "requested configuration (" + path.string() + ")");
    return p;
}

}  // namespace uad
