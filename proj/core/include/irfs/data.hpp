#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "irfs/rng.hpp"
#include "irfs/tensor.hpp"
#include "irfs/types.hpp"

namespace irfs::data {

namespace fs = std::filesystem;

// ---- image I/O (PNG canonical, JPEG read-only) ----

/// Decodes to (H,W,C) in [0,1], C = 1 or 3.
Tensor read_image(const fs::path& path);
/// 8-bit PNG from a (H,W,1) or (H,W,3) tensor in [0,1].
void write_png(const fs::path& path, const Tensor& img);

Tensor resize_bilinear(const Tensor& img, int64_t out_h, int64_t out_w);
Tensor resize_nearest(const Tensor& img, int64_t out_h, int64_t out_w);
Tensor flip_horizontal(const Tensor& img);

// ---- dataset manifest ----

enum class Split { train, test };

struct ManifestEntry {
    std::string id;
    fs::path visible, infrared, mask; // mask may be empty on test splits
    bool has_mask = false;
};

struct DirNames {
    std::string visible = "RGB";
    std::string infrared = "T";
    std::string mask = "GT";
};

struct DatasetManifest {
    fs::path root;
    Split split = Split::train;
    std::vector<ManifestEntry> entries;
    int resize_target = 352;

    size_t size() const { return entries.size(); }
};

/// Scans {root}/{RGB,T,GT}; deterministic id-sorted order. Throws DataError
/// naming every broken entry; train splits require masks. Scan results are
/// memoized in {root}/.manifest_cache.json keyed by a content hash of the
/// directory listing.
DatasetManifest load_manifest(const fs::path& root, Split split, const DirNames& dirs = {},
                              bool use_cache = true);

/// Decodes one entry at native resolution (no resize).
MultimodalSample load_sample(const ManifestEntry& entry);

/// Resized (bilinear images / nearest masks), optionally flip-augmented
/// batch; one shared flip decision per sample across all three arrays.
std::vector<MultimodalSample> make_batch(const DatasetManifest& manifest,
                                         const std::vector<size_t>& indices, bool train, int crop,
                                         Rng& rng);

// ---- synthetic generator ----

struct SynthConfig {
    int n_samples = 16;
    int size = 96;
    int min_shapes = 1;
    int max_shapes = 3;
    double ir_hotspot_gain = 0.6; // object brightness lift in the infrared plane
    double noise_sigma = 0.02;
    uint64_t seed = 0;
};

/// Writes a synthetic paired dataset under `root` in the standard directory
/// layout and returns its manifest. Deterministic per seed.
DatasetManifest generate_synthetic(const fs::path& root, const SynthConfig& cfg, Split split);

/// In-memory variant used by tests and the trainer's smoke paths.
std::vector<MultimodalSample> synthesize_samples(const SynthConfig& cfg);

} // namespace irfs::data
