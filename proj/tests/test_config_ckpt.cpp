#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "irfs/checkpoint.hpp"
#include "irfs/run_config.hpp"
#include "test_util.hpp"

using namespace irfs;
namespace fs = std::filesystem;

TEST_CASE("run config round-trips losslessly") {
    RunConfig c;
    c.schedule.m = 3;
    c.schedule.lr_sod_init = 7.25e-5;
    c.sod.stage_channels = {8, 16, 32, 64, 128};
    c.sod.aggregation = FinalAggregation::learned;
    c.guidance = Guidance::average;
    c.lambda = 0.125;
    c.seed = 1234567890123ull;

    const std::string first = c.to_json_string();
    const RunConfig back = RunConfig::from_json_string(first);
    CHECK(back.to_json_string() == first);
    CHECK(back.schedule.lr_sod_init == c.schedule.lr_sod_init);
    CHECK(back.sod.aggregation == FinalAggregation::learned);
    CHECK(back.guidance == Guidance::average);
    CHECK(back.config_hash() == c.config_hash());
}

TEST_CASE("run config rejects unknown keys and bad values") {
    CHECK_THROWS_AS(RunConfig::from_json_string("{\"No_such_key\": 1}"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json_string("{\"sod\": {\"bogus\": true}}"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json_string("{\"schema_version\": 99}"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json_string("not json"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json_string("{\"guidance\": \"banana\"}"), ConfigError);

    RunConfig c;
    c.gamma = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("fusion checkpoint: save/load round trip with optimizer state") {
    const fs::path path = fs::temp_directory_path() / "irfs_fusion.ckpt";
    Rng rng(91);
    FusionNetConfig cfg;
    cfg.base_channels = 8;
    cfg.n_res_blocks = 2;
    FusionNet a(cfg, rng);
    nn::Adam opt_a(a.params().vars(), 1e-3);

    // one step so the optimizer has non-trivial moments
    const Tensor y = testutil::random_tensor({1, 8, 8}, rng);
    const Tensor ir = testutil::random_tensor({1, 8, 8}, rng);
    ag::backward(ag::mean(a.forward_y(ag::Var::constant(y), ag::Var::constant(ir))));
    opt_a.step();
    ckpt::save_fusion(path, a, &opt_a);

    Rng rng2(999);
    FusionNet b(cfg, rng2);
    nn::Adam opt_b(b.params().vars(), 1e-3);
    ckpt::load_fusion(path, b, &opt_b);
    CHECK(b.params().checksum() == a.params().checksum());
    CHECK(opt_b.t() == opt_a.t());

    const Tensor out_a = a.forward_y(ag::Var::constant(y), ag::Var::constant(ir)).value();
    const Tensor out_b = b.forward_y(ag::Var::constant(y), ag::Var::constant(ir)).value();
    for (int64_t i = 0; i < out_a.numel(); ++i) CHECK(out_a[i] == out_b[i]);

    CHECK(ckpt::read_fusion_config(path) == cfg);

    // config mismatch must be rejected
    FusionNetConfig other = cfg;
    other.base_channels = 16;
    Rng rng3(5);
    FusionNet c(other, rng3);
    CHECK_THROWS_AS(ckpt::load_fusion(path, c), CheckpointError);
    fs::remove(path);
}

TEST_CASE("sod checkpoint: round trip and corruption detection") {
    const fs::path path = fs::temp_directory_path() / "irfs_sod.ckpt";
    Rng rng(92);
    SodNetConfig cfg;
    cfg.stage_channels = {4, 8, 8, 8, 8};
    cfg.decoder_channels = 4;
    SodNet a(cfg, rng);
    ckpt::save_sod(path, a);

    Rng rng2(93);
    SodNet b(cfg, rng2);
    CHECK(a.params().checksum() != b.params().checksum());
    ckpt::load_sod(path, b);
    CHECK(a.params().checksum() == b.params().checksum());

    // wrong-kind archive
    Rng rng3(94);
    FusionNet f(FusionNetConfig{}, rng3);
    CHECK_THROWS_AS(ckpt::load_fusion(path, f), CheckpointError);

    // truncated archive
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "IRFSCKP1garbage";
    }
    CHECK_THROWS_AS(ckpt::load_sod(path, b), CheckpointError);
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "NOTACKPT";
    }
    CHECK_THROWS_AS(ckpt::load_sod(path, b), CheckpointError);
    fs::remove(path);
}

TEST_CASE("shipped run configs parse, validate, and round-trip") {
    for (const char* name : {"toy.json", "vt5000.json"}) {
        const fs::path path = fs::path(IRFS_CONFIGS_DIR) / name;
        REQUIRE(fs::exists(path));
        const RunConfig cfg = RunConfig::from_file(path);
        CHECK_NOTHROW(cfg.validate());
        CHECK(RunConfig::from_json_string(cfg.to_json_string()).config_hash() == cfg.config_hash());
    }
    const RunConfig toy = RunConfig::from_file(fs::path(IRFS_CONFIGS_DIR) / "toy.json");
    CHECK(toy.sod.backbone == Backbone::toy);
    CHECK(toy.schedule.crop == 96);
    const RunConfig full = RunConfig::from_file(fs::path(IRFS_CONFIGS_DIR) / "vt5000.json");
    CHECK(full.sod.backbone == Backbone::resnet34);
    CHECK(full.schedule.crop == 352);
    CHECK(full.schedule.lr_sod_init == 5e-5);
}
