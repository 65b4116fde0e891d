#pragma once

#include <filesystem>
#include <string>

#include "irfs/fusion_net.hpp"
#include "irfs/sod_net.hpp"
#include "irfs/types.hpp"

namespace irfs {

/// Merged view of every knob a run needs; serialized as a single JSON file
/// with a schema version. Unknown keys are rejected and round-trips are
/// lossless.
struct RunConfig {
    int schema_version = 1;
    FusionNetConfig fusion;
    SodNetConfig sod;
    LoopSchedule schedule;
    Guidance guidance = Guidance::fused;
    double lambda = 0.5;
    double gamma = 20.0;
    int wloss_pool = 15;
    bool average_coarse = false;
    std::string train_dir, test_dir;
    int synth_train = 0, synth_test = 0; // if > 0, generate synthetic data
    int synth_size = 96;
    uint64_t seed = 42;
    std::string out_dir = "runs/irfs";
    bool one_stage = false;

    std::string to_json_string() const;
    static RunConfig from_json_string(const std::string& text);
    static RunConfig from_file(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    /// FNV-1a over the canonical serialization; recorded in run manifests.
    uint64_t config_hash() const;
    void validate() const;
};

} // namespace irfs
