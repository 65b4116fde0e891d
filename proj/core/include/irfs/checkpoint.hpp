#pragma once

#include <filesystem>
#include <optional>

#include "irfs/fusion_net.hpp"
#include "irfs/nn.hpp"
#include "irfs/sod_net.hpp"

namespace irfs::ckpt {

namespace fs = std::filesystem;

/// Single-file weight archive: magic + version tag, embedded config, named
/// parameter manifest, raw values, optional optimizer moments.
/// Loading validates that the archive's config equals the target net's.

void save_fusion(const fs::path& path, const FusionNet& net, const nn::Adam* opt = nullptr);
void load_fusion(const fs::path& path, FusionNet& net, nn::Adam* opt = nullptr);
FusionNetConfig read_fusion_config(const fs::path& path);

void save_sod(const fs::path& path, const SodNet& net, const nn::Adam* opt = nullptr);
void load_sod(const fs::path& path, SodNet& net, nn::Adam* opt = nullptr);
SodNetConfig read_sod_config(const fs::path& path);

} // namespace irfs::ckpt
