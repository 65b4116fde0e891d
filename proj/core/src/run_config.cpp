#include "irfs/run_config.hpp"

#include <fstream>

#include "config_json.hpp"

namespace irfs {

namespace cj = cfgjson;
using nlohmann::json;

namespace cfgjson {

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [key, _] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown key \"" + key + "\" in " + where);
}

json to_json(const FusionNetConfig& c) {
    return {{"base_channels", c.base_channels}, {"n_res_blocks", c.n_res_blocks},
            {"sa_kernel", c.sa_kernel},         {"ca_reduction", c.ca_reduction},
            {"share_branch_weights", c.share_branch_weights}, {"leaky_slope", c.leaky_slope}};
}

FusionNetConfig fusion_from_json(const json& j) {
    reject_unknown_keys(j, {"base_channels", "n_res_blocks", "sa_kernel", "ca_reduction",
                            "share_branch_weights", "leaky_slope"},
                        "fusion config");
    FusionNetConfig c;
    c.base_channels = j.value("base_channels", c.base_channels);
    c.n_res_blocks = j.value("n_res_blocks", c.n_res_blocks);
    c.sa_kernel = j.value("sa_kernel", c.sa_kernel);
    c.ca_reduction = j.value("ca_reduction", c.ca_reduction);
    c.share_branch_weights = j.value("share_branch_weights", c.share_branch_weights);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    return c;
}

Backbone backbone_from_string(const std::string& s) {
    if (s == "toy") return Backbone::toy;
    if (s == "resnet34") return Backbone::resnet34;
    throw ConfigError("unknown backbone \"" + s + "\"");
}

Guidance guidance_from_string(const std::string& s) {
    if (s == "fused") return Guidance::fused;
    if (s == "average") return Guidance::average;
    if (s == "ir") return Guidance::ir;
    if (s == "vis") return Guidance::vis;
    throw ConfigError("unknown guidance \"" + s + "\"");
}

FinalAggregation aggregation_from_string(const std::string& s) {
    if (s == "mean") return FinalAggregation::mean;
    if (s == "max") return FinalAggregation::max;
    if (s == "learned") return FinalAggregation::learned;
    throw ConfigError("unknown aggregation \"" + s + "\"");
}

json to_json(const SodNetConfig& c) {
    return {{"backbone", to_string(c.backbone)},
            {"stage_channels", c.stage_channels},
            {"attn_heads", c.attn_heads},
            {"msgd_stages", c.msgd_stages},
            {"gcm_dilations", c.gcm_dilations},
            {"fgse_stages", c.fgse_stages},
            {"token_cap", c.token_cap},
            {"use_c2ftl", c.use_c2ftl},
            {"use_lfs", c.use_lfs},
            {"tie_fgse_branches", c.tie_fgse_branches},
            {"aggregation", to_string(c.aggregation)},
            {"decoder_channels", c.decoder_channels},
            {"lfs_reduction", c.lfs_reduction}};
}

SodNetConfig sod_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"backbone", "stage_channels", "attn_heads", "msgd_stages", "gcm_dilations",
                         "fgse_stages", "token_cap", "use_c2ftl", "use_lfs", "tie_fgse_branches",
                         "aggregation", "decoder_channels", "lfs_reduction"},
                        "sod config");
    SodNetConfig c;
    if (j.contains("backbone")) c.backbone = backbone_from_string(j["backbone"]);
    if (j.contains("stage_channels")) c.stage_channels = j["stage_channels"].get<std::vector<int64_t>>();
    c.attn_heads = j.value("attn_heads", c.attn_heads);
    if (j.contains("msgd_stages")) c.msgd_stages = j["msgd_stages"].get<std::vector<int>>();
    if (j.contains("gcm_dilations")) c.gcm_dilations = j["gcm_dilations"].get<std::vector<int>>();
    if (j.contains("fgse_stages")) c.fgse_stages = j["fgse_stages"].get<std::vector<int>>();
    c.token_cap = j.value("token_cap", c.token_cap);
    c.use_c2ftl = j.value("use_c2ftl", c.use_c2ftl);
    c.use_lfs = j.value("use_lfs", c.use_lfs);
    c.tie_fgse_branches = j.value("tie_fgse_branches", c.tie_fgse_branches);
    if (j.contains("aggregation")) c.aggregation = aggregation_from_string(j["aggregation"]);
    c.decoder_channels = j.value("decoder_channels", c.decoder_channels);
    c.lfs_reduction = j.value("lfs_reduction", c.lfs_reduction);
    return c;
}

json to_json(const LoopSchedule& s) {
    return {{"m", s.m},
            {"n_f", s.n_f},
            {"n_s", s.n_s},
            {"lr_fusion", s.lr_fusion},
            {"lr_sod_init", s.lr_sod_init},
            {"lr_sod_floor", s.lr_sod_floor},
            {"tau", s.tau},
            {"eta_start", s.eta_start},
            {"eta_end", s.eta_end},
            {"batch_size", s.batch_size},
            {"crop", s.crop}};
}

LoopSchedule schedule_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"m", "n_f", "n_s", "lr_fusion", "lr_sod_init", "lr_sod_floor", "tau",
                         "eta_start", "eta_end", "batch_size", "crop"},
                        "schedule");
    LoopSchedule s;
    s.m = j.value("m", s.m);
    s.n_f = j.value("n_f", s.n_f);
    s.n_s = j.value("n_s", s.n_s);
    s.lr_fusion = j.value("lr_fusion", s.lr_fusion);
    s.lr_sod_init = j.value("lr_sod_init", s.lr_sod_init);
    s.lr_sod_floor = j.value("lr_sod_floor", s.lr_sod_floor);
    s.tau = j.value("tau", s.tau);
    s.eta_start = j.value("eta_start", s.eta_start);
    s.eta_end = j.value("eta_end", s.eta_end);
    s.batch_size = j.value("batch_size", s.batch_size);
    s.crop = j.value("crop", s.crop);
    return s;
}

} // namespace cfgjson

std::string RunConfig::to_json_string() const {
    json j;
    j["schema_version"] = schema_version;
    j["fusion"] = cj::to_json(fusion);
    j["sod"] = cj::to_json(sod);
    j["schedule"] = cj::to_json(schedule);
    j["guidance"] = to_string(guidance);
    j["lambda"] = lambda;
    j["gamma"] = gamma;
    j["wloss_pool"] = wloss_pool;
    j["average_coarse"] = average_coarse;
    j["train_dir"] = train_dir;
    j["test_dir"] = test_dir;
    j["synth_train"] = synth_train;
    j["synth_test"] = synth_test;
    j["synth_size"] = synth_size;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["one_stage"] = one_stage;
    return j.dump(2);
}

RunConfig RunConfig::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    cj::reject_unknown_keys(j,
                            {"schema_version", "fusion", "sod", "schedule", "guidance", "lambda",
                             "gamma", "wloss_pool", "average_coarse", "train_dir", "test_dir",
                             "synth_train", "synth_test", "synth_size", "seed", "out_dir",
                             "one_stage"},
                            "run config");
    RunConfig c;
    c.schema_version = j.value("schema_version", 1);
    if (c.schema_version != 1)
        throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version));
    if (j.contains("fusion")) c.fusion = cj::fusion_from_json(j["fusion"]);
    if (j.contains("sod")) c.sod = cj::sod_from_json(j["sod"]);
    if (j.contains("schedule")) c.schedule = cj::schedule_from_json(j["schedule"]);
    if (j.contains("guidance")) c.guidance = cj::guidance_from_string(j["guidance"]);
    c.lambda = j.value("lambda", c.lambda);
    c.gamma = j.value("gamma", c.gamma);
    c.wloss_pool = j.value("wloss_pool", c.wloss_pool);
    c.average_coarse = j.value("average_coarse", c.average_coarse);
    c.train_dir = j.value("train_dir", c.train_dir);
    c.test_dir = j.value("test_dir", c.test_dir);
    c.synth_train = j.value("synth_train", c.synth_train);
    c.synth_test = j.value("synth_test", c.synth_test);
    c.synth_size = j.value("synth_size", c.synth_size);
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.one_stage = j.value("one_stage", c.one_stage);
    return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_string(text);
}

void RunConfig::save(const std::filesystem::path& path) const {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config file: " + path.string());
    out << to_json_string() << "\n";
}

uint64_t RunConfig::config_hash() const {
    const std::string s = to_json_string();
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

void RunConfig::validate() const {
    fusion.validate();
    sod.validate();
    schedule.validate();
    if (lambda < 0 || gamma <= 0) throw ConfigError("run config: need lambda >= 0 and gamma > 0");
    if (wloss_pool < 1 || wloss_pool % 2 == 0)
        throw ConfigError("run config: wloss_pool must be odd and positive");
    if (synth_train < 0 || synth_test < 0 || synth_size < 16)
        throw ConfigError("run config: bad synthetic dataset settings");
}

} // namespace irfs
