#include "cli_app.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"

#include "irfs/checkpoint.hpp"
#include "irfs/color.hpp"
#include "irfs/data.hpp"
#include "irfs/metrics.hpp"
#include "irfs/parallel.hpp"
#include "irfs/run_config.hpp"
#include "irfs/trainer.hpp"

namespace fs = std::filesystem;
using namespace irfs;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCheckpoint = 3;
constexpr int kExitNumeric = 4;

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kExitCheckpoint;
    } catch (const NumericError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}

bool dir_has_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) return false;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string ext = e.path().extension().string();
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") return true;
    }
    return false;
}

Tensor to_gray_plane(const Tensor& img) {
    return img.shape(2) == 3 ? rgb_to_gray(img).reshaped({img.shape(0), img.shape(1)})
                             : img.reshaped({img.shape(0), img.shape(1)});
}

std::vector<MultimodalSample> load_all(const data::DatasetManifest& manifest) {
    std::vector<MultimodalSample> out;
    out.reserve(manifest.size());
    for (const auto& e : manifest.entries) out.push_back(data::load_sample(e));
    return out;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    std::string config_path;
    RunConfig cfg;
    bool resume = false;
    bool verbose = false;
};

int cmd_train(TrainArgs& args) {
    args.cfg.validate();
    const RunConfig& cfg = args.cfg;

    std::vector<MultimodalSample> train_data, test_data;
    std::string dataset_name;
    if (cfg.synth_train > 0) {
        data::SynthConfig sc;
        sc.n_samples = cfg.synth_train;
        sc.size = cfg.synth_size;
        sc.seed = cfg.seed;
        train_data = data::synthesize_samples(sc);
        if (cfg.synth_test > 0) {
            sc.n_samples = cfg.synth_test;
            sc.seed = cfg.seed + 1;
            test_data = data::synthesize_samples(sc);
        }
        dataset_name = "synthetic";
    } else {
        if (cfg.train_dir.empty()) throw ConfigError("no dataset: set train_dir or synth_train");
        train_data = load_all(data::load_manifest(cfg.train_dir, data::Split::train));
        if (!cfg.test_dir.empty())
            test_data = load_all(data::load_manifest(cfg.test_dir, data::Split::test));
        dataset_name = fs::path(cfg.train_dir).filename().string();
    }

    train::Trainer::Options opt;
    opt.fusion_cfg = cfg.fusion;
    opt.sod_cfg = cfg.sod;
    opt.schedule = cfg.schedule;
    opt.lambda = cfg.lambda;
    opt.gamma = cfg.gamma;
    opt.wloss_pool = cfg.wloss_pool;
    opt.average_coarse = cfg.average_coarse;
    opt.guidance = cfg.guidance;
    opt.seed = cfg.seed;
    opt.out_dir = cfg.out_dir;
    opt.one_stage = cfg.one_stage;
    opt.verbose = args.verbose;
    opt.dataset_name = dataset_name;

    fs::create_directories(cfg.out_dir);
    cfg.save(fs::path(cfg.out_dir) / "config.json"); // exact resolved config

    train::Trainer trainer(opt, std::move(train_data), std::move(test_data));
    const train::TrainResult res = args.resume ? trainer.resume() : trainer.run();
    std::cout << "completed " << res.loops_run << " loop(s), " << res.trace.size()
              << " epoch(s); artifacts under " << cfg.out_dir << "\n";
    if (!res.loop_reports.empty()) {
        const MetricReport& last = res.loop_reports.back();
        std::cout << "final: MI=" << last.fusion.mi << " VIF=" << last.fusion.vif
                  << " CC=" << last.fusion.cc << " S=" << last.sod.s_alpha
                  << " F=" << last.sod.f_beta << " E=" << last.sod.e_xi << " MAE=" << last.sod.mae
                  << "\n";
    }
    return kExitOk;
}

// ---- fuse -------------------------------------------------------------------

int cmd_fuse(const std::string& ckpt_path, const std::string& input_dir,
             const std::string& output_dir) {
    if (!dir_has_images(fs::path(input_dir) / "RGB")) {
        std::cerr << "warning: no image pairs under " << input_dir << ", nothing to do\n";
        return kExitOk;
    }
    const FusionNetConfig cfg = ckpt::read_fusion_config(ckpt_path);
    Rng rng(0);
    FusionNet net(cfg, rng);
    ckpt::load_fusion(ckpt_path, net);

    const auto manifest = data::load_manifest(input_dir, data::Split::test);
    for (const auto& entry : manifest.entries) {
        const MultimodalSample sample = data::load_sample(entry);
        const FusedImage fused = net.fuse_pair(sample);
        data::write_png(fs::path(output_dir) / (entry.id + ".png"), fused.rgb);
    }
    std::cout << "fused " << manifest.size() << " pair(s) into " << output_dir << "\n";
    return kExitOk;
}

// ---- detect ----------------------------------------------------------------

int cmd_detect(const std::string& fusion_ckpt, const std::string& sod_ckpt,
               const std::string& input_dir, const std::string& output_dir, bool dump_all) {
    if (!dir_has_images(fs::path(input_dir) / "RGB")) {
        std::cerr << "warning: no image pairs under " << input_dir << ", nothing to do\n";
        return kExitOk;
    }
    Rng rng(0);
    FusionNet fnet(ckpt::read_fusion_config(fusion_ckpt), rng);
    ckpt::load_fusion(fusion_ckpt, fnet);
    SodNet snet(ckpt::read_sod_config(sod_ckpt), rng);
    ckpt::load_sod(sod_ckpt, snet);

    const auto manifest = data::load_manifest(input_dir, data::Split::test);
    auto gray = [](const Tensor& plane) {
        return plane.reshaped({plane.shape(0), plane.shape(1), 1});
    };
    for (const auto& entry : manifest.entries) {
        const MultimodalSample sample = data::load_sample(entry);
        const FusedImage fused = fnet.fuse_pair(sample);
        const SaliencyOutputs maps = snet.detect(sample, fused);
        data::write_png(fs::path(output_dir) / (entry.id + ".png"), gray(maps.final_map));
        if (dump_all) {
            data::write_png(fs::path(output_dir) / (entry.id + "_coarse_vis.png"),
                            gray(maps.coarse_vis));
            data::write_png(fs::path(output_dir) / (entry.id + "_coarse_ir.png"),
                            gray(maps.coarse_ir));
            data::write_png(fs::path(output_dir) / (entry.id + "_coarse_fused.png"),
                            gray(maps.coarse_fused));
            data::write_png(fs::path(output_dir) / (entry.id + "_precise_vis.png"),
                            gray(maps.precise_vis));
            data::write_png(fs::path(output_dir) / (entry.id + "_precise_ir.png"),
                            gray(maps.precise_ir));
        }
    }
    std::cout << "wrote saliency maps for " << manifest.size() << " pair(s) into " << output_dir
              << "\n";
    return kExitOk;
}

// ---- evaluate ------------------------------------------------------------------

std::map<std::string, fs::path> stem_index(const fs::path& dir) {
    std::map<std::string, fs::path> out;
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string ext = e.path().extension().string();
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out[e.path().stem().string()] = e.path();
    }
    if (out.empty()) throw DataError("no images under " + dir.string());
    return out;
}

struct EvalArgs {
    std::string fused_dir, ir_dir, vis_dir; // fusion mode
    std::string pred_dir, gt_dir;           // sod mode
    std::string metrics_csv = "all";
    std::string out_path;
};

int cmd_evaluate(const EvalArgs& args) {
    const bool fusion_mode = !args.fused_dir.empty();
    const bool sod_mode = !args.pred_dir.empty();
    if (fusion_mode == sod_mode)
        throw ConfigError("evaluate needs either --fused/--ir/--vis or --pred/--gt");

    std::set<std::string> want;
    if (args.metrics_csv == "all") {
        want = fusion_mode ? std::set<std::string>{"mi", "vif", "cc"}
                           : std::set<std::string>{"s_alpha", "f_beta", "e_xi", "mae"};
    } else {
        std::string token;
        for (char c : args.metrics_csv + ",") {
            if (c == ',') {
                if (!token.empty()) want.insert(token);
                token.clear();
            } else {
                token += c;
            }
        }
    }

    metrics::EvaluationReport report;
    std::vector<std::string> unmatched;

    if (fusion_mode) {
        if (args.ir_dir.empty() || args.vis_dir.empty())
            throw ConfigError("fusion evaluation needs --fused, --ir and --vis");
        const auto fused_idx = stem_index(args.fused_dir);
        const auto ir_idx = stem_index(args.ir_dir);
        const auto vis_idx = stem_index(args.vis_dir);
        std::vector<std::pair<std::string, std::array<fs::path, 3>>> items;
        for (const auto& [id, path] : fused_idx) {
            const auto ir_it = ir_idx.find(id);
            const auto vis_it = vis_idx.find(id);
            if (ir_it == ir_idx.end() || vis_it == vis_idx.end())
                unmatched.push_back(id);
            else
                items.push_back({id, {path, ir_it->second, vis_it->second}});
        }
        if (!unmatched.empty()) {
            std::string list;
            for (const auto& u : unmatched) list += " " + u;
            throw DataError("unmatched fused images (no source pair):" + list);
        }
        std::vector<MetricReport> rows(items.size());
        parallel_for(int64_t(items.size()), [&](int64_t i) {
            const auto& [id, paths] = items[size_t(i)];
            const Tensor fused = to_gray_plane(data::read_image(paths[0]));
            const Tensor ir = to_gray_plane(data::read_image(paths[1]));
            const Tensor vis = to_gray_plane(data::read_image(paths[2]));
            MetricReport r;
            if (want.count("mi")) r.fusion.mi = metrics::mi(ir, vis, fused);
            if (want.count("vif")) r.fusion.vif = metrics::vif(ir, vis, fused);
            if (want.count("cc")) r.fusion.cc = metrics::cc(ir, vis, fused);
            rows[size_t(i)] = r;
        });
        for (size_t i = 0; i < items.size(); ++i) {
            report.per_sample.emplace_back(items[i].first, rows[i]);
            report.aggregate.fusion.mi += rows[i].fusion.mi;
            report.aggregate.fusion.vif += rows[i].fusion.vif;
            report.aggregate.fusion.cc += rows[i].fusion.cc;
        }
        report.aggregate.dataset = args.fused_dir;
        report.aggregate.n_samples = int(items.size());
        const double inv = 1.0 / double(items.size());
        report.aggregate.fusion.mi *= inv;
        report.aggregate.fusion.vif *= inv;
        report.aggregate.fusion.cc *= inv;
    } else {
        if (args.gt_dir.empty()) throw ConfigError("sod evaluation needs --pred and --gt");
        const auto pred_idx = stem_index(args.pred_dir);
        const auto gt_idx = stem_index(args.gt_dir);
        std::vector<std::pair<std::string, std::array<fs::path, 2>>> items;
        for (const auto& [id, path] : pred_idx) {
            const auto gt_it = gt_idx.find(id);
            if (gt_it == gt_idx.end())
                unmatched.push_back(id);
            else
                items.push_back({id, {path, gt_it->second}});
        }
        if (!unmatched.empty()) {
            std::string list;
            for (const auto& u : unmatched) list += " " + u;
            throw DataError("predictions without ground truth:" + list);
        }
        std::vector<MetricReport> rows(items.size());
        std::vector<std::string> flags(items.size());
        parallel_for(int64_t(items.size()), [&](int64_t i) {
            const auto& [id, paths] = items[size_t(i)];
            const Tensor pred = to_gray_plane(data::read_image(paths[0]));
            Tensor gt = to_gray_plane(data::read_image(paths[1]));
            for (int64_t p = 0; p < gt.numel(); ++p) gt[p] = gt[p] >= 0.5 ? 1.0 : 0.0;
            MetricReport r;
            if (want.count("s_alpha")) r.sod.s_alpha = metrics::s_measure(pred, gt);
            if (want.count("f_beta")) {
                const auto fb = metrics::f_beta_checked(pred, gt);
                r.sod.f_beta = fb.value;
                if (fb.empty_prediction) flags[size_t(i)] = id + ": empty prediction";
            }
            if (want.count("e_xi")) r.sod.e_xi = metrics::e_measure(pred, gt);
            if (want.count("mae")) r.sod.mae = metrics::mae(pred, gt);
            rows[size_t(i)] = r;
        });
        for (size_t i = 0; i < items.size(); ++i) {
            report.per_sample.emplace_back(items[i].first, rows[i]);
            report.aggregate.sod.s_alpha += rows[i].sod.s_alpha;
            report.aggregate.sod.f_beta += rows[i].sod.f_beta;
            report.aggregate.sod.e_xi += rows[i].sod.e_xi;
            report.aggregate.sod.mae += rows[i].sod.mae;
            if (!flags[i].empty()) report.flags.push_back(flags[i]);
        }
        report.aggregate.dataset = args.pred_dir;
        report.aggregate.n_samples = int(items.size());
        const double inv = 1.0 / double(items.size());
        report.aggregate.sod.s_alpha *= inv;
        report.aggregate.sod.f_beta *= inv;
        report.aggregate.sod.e_xi *= inv;
        report.aggregate.sod.mae *= inv;
    }
    for (const auto& m : want) report.flags.push_back("computed:" + m);

    const std::string json = metrics::report_to_json(report, fusion_mode, sod_mode);
    if (args.out_path.empty()) {
        std::cout << json << "\n";
    } else {
        fs::create_directories(fs::path(args.out_path).parent_path().empty()
                                   ? "."
                                   : fs::path(args.out_path).parent_path());
        std::ofstream out(args.out_path);
        out << json << "\n";
        std::cout << "report written to " << args.out_path << "\n";
    }
    return kExitOk;
}

// ---- synth ----------------------------------------------------------------------

int cmd_synth(const std::string& out_dir, data::SynthConfig cfg) {
    const auto manifest = data::generate_synthetic(out_dir, cfg, data::Split::train);
    std::cout << "wrote " << manifest.size() << " synthetic pair(s) under " << out_dir << "\n";
    return kExitOk;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"interactively reinforced infrared-visible fusion and saliency detection"};
    app.require_subcommand(1);

    // train
    TrainArgs targs;
    auto* train = app.add_subcommand("train", "run the alternating (or one-stage) training loop");
    train->add_option("--config", targs.config_path, "JSON run config");
    int m = -1, n_f = -1, n_s = -1, batch = -1, crop = -1, synth = -1, synth_test = -1,
        synth_size = -1;
    double tau = -1, lr_fusion = -1, lr_sod = -1;
    uint64_t seed = 0;
    bool seed_set = false, one_stage = false, no_c2ftl = false, no_lfs = false;
    std::string out_dir, data_dir, test_dir, guidance, backbone;
    train->add_option("--m", m, "interaction loops");
    train->add_option("--n-f", n_f, "fusion epochs per loop");
    train->add_option("--n-s", n_s, "detection epochs per loop");
    train->add_option("--batch", batch, "batch size");
    train->add_option("--crop", crop, "train/test resolution");
    train->add_option("--synth", synth, "train on N generated synthetic pairs");
    train->add_option("--synth-test", synth_test, "generated synthetic test pairs");
    train->add_option("--synth-size", synth_size, "synthetic image side");
    train->add_option("--tau", tau, "fusion-loss weight in the joint objective");
    train->add_option("--lr-fusion", lr_fusion, "fusion learning rate");
    train->add_option("--lr-sod", lr_sod, "initial detection learning rate");
    train->add_option("--seed", seed, "global seed")->each([&](const std::string&) { seed_set = true; });
    train->add_option("--out", out_dir, "artifact directory");
    train->add_option("--data", data_dir, "training dataset root (RGB/T/GT)");
    train->add_option("--test-data", test_dir, "test dataset root");
    train->add_option("--guidance", guidance, "third encoder stream: fused|average|ir|vis");
    train->add_option("--backbone", backbone, "encoder backbone: toy|resnet34");
    train->add_flag("--one-stage", one_stage, "joint single-phase baseline");
    train->add_flag("--no-c2ftl", no_c2ftl, "ablation: disable the cross-modal transformer layer");
    train->add_flag("--no-lfs", no_lfs, "ablation: disable the learnable feature selector");
    train->add_flag("--resume", targs.resume, "continue from the last complete loop in --out");
    train->add_flag("--verbose,-v", targs.verbose, "per-epoch progress");

    // fuse
    std::string f_ckpt, f_in, f_out;
    auto* fuse = app.add_subcommand("fuse", "batch fusion inference");
    fuse->add_option("--checkpoint", f_ckpt, "fusion checkpoint")->required();
    fuse->add_option("--input", f_in, "directory with RGB/ and T/ pairs")->required();
    fuse->add_option("--output", f_out, "output directory")->required();

    // detect
    std::string d_fckpt, d_sckpt, d_in, d_out;
    bool dump_all = false;
    auto* detect = app.add_subcommand("detect", "fusion-guided saliency inference");
    detect->add_option("--fusion-ckpt", d_fckpt, "fusion checkpoint")->required();
    detect->add_option("--sod-ckpt", d_sckpt, "detector checkpoint")->required();
    detect->add_option("--input", d_in, "directory with RGB/ and T/ pairs")->required();
    detect->add_option("--output", d_out, "output directory")->required();
    detect->add_flag("--dump-all", dump_all, "also write the five auxiliary maps");

    // evaluate
    EvalArgs eargs;
    auto* evaluate = app.add_subcommand("evaluate", "fusion or saliency metric reports");
    evaluate->add_option("--fused", eargs.fused_dir, "fused images");
    evaluate->add_option("--ir", eargs.ir_dir, "infrared sources");
    evaluate->add_option("--vis", eargs.vis_dir, "visible sources");
    evaluate->add_option("--pred", eargs.pred_dir, "predicted saliency maps");
    evaluate->add_option("--gt", eargs.gt_dir, "ground-truth masks");
    evaluate->add_option("--metrics", eargs.metrics_csv, "comma list or 'all'");
    evaluate->add_option("--out", eargs.out_path, "write the JSON report here");

    // synth
    std::string s_out;
    data::SynthConfig scfg;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic paired dataset");
    synth_cmd->add_option("--out", s_out, "output root")->required();
    synth_cmd->add_option("--n", scfg.n_samples, "number of pairs");
    synth_cmd->add_option("--size", scfg.size, "image side");
    synth_cmd->add_option("--seed", scfg.seed, "generator seed");
    synth_cmd->add_option("--min-shapes", scfg.min_shapes, "minimum objects per image");
    synth_cmd->add_option("--max-shapes", scfg.max_shapes, "maximum objects per image");
    synth_cmd->add_option("--hotspot-gain", scfg.ir_hotspot_gain, "infrared object lift");
    synth_cmd->add_option("--noise-sigma", scfg.noise_sigma, "infrared noise level");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    if (train->parsed()) {
        return run_guarded([&] {
            targs.cfg = targs.config_path.empty() ? RunConfig{} : RunConfig::from_file(targs.config_path);
            // command-line overrides win over the config file
            if (m > 0) targs.cfg.schedule.m = m;
            if (n_f > 0) targs.cfg.schedule.n_f = n_f;
            if (n_s > 0) targs.cfg.schedule.n_s = n_s;
            if (batch > 0) targs.cfg.schedule.batch_size = batch;
            if (crop > 0) targs.cfg.schedule.crop = crop;
            if (synth >= 0) targs.cfg.synth_train = synth;
            if (synth_test >= 0) targs.cfg.synth_test = synth_test;
            if (synth_size > 0) targs.cfg.synth_size = synth_size;
            if (tau > 0) targs.cfg.schedule.tau = tau;
            if (lr_fusion > 0) targs.cfg.schedule.lr_fusion = lr_fusion;
            if (lr_sod > 0) targs.cfg.schedule.lr_sod_init = lr_sod;
            if (seed_set) targs.cfg.seed = seed;
            if (!out_dir.empty()) targs.cfg.out_dir = out_dir;
            if (!data_dir.empty()) targs.cfg.train_dir = data_dir;
            if (!test_dir.empty()) targs.cfg.test_dir = test_dir;
            if (!guidance.empty()) {
                if (guidance == "fused") targs.cfg.guidance = Guidance::fused;
                else if (guidance == "average") targs.cfg.guidance = Guidance::average;
                else if (guidance == "ir") targs.cfg.guidance = Guidance::ir;
                else if (guidance == "vis") targs.cfg.guidance = Guidance::vis;
                else throw ConfigError("unknown guidance \"" + guidance + "\"");
            }
            if (!backbone.empty()) {
                if (backbone == "toy") targs.cfg.sod.backbone = Backbone::toy;
                else if (backbone == "resnet34") {
                    targs.cfg.sod.backbone = Backbone::resnet34;
                    targs.cfg.sod.stage_channels = {64, 64, 128, 256, 512};
                } else throw ConfigError("unknown backbone \"" + backbone + "\"");
            }
            if (one_stage) targs.cfg.one_stage = true;
            if (no_c2ftl) targs.cfg.sod.use_c2ftl = false;
            if (no_lfs) targs.cfg.sod.use_lfs = false;
            return cmd_train(targs);
        });
    }
    if (fuse->parsed()) return run_guarded([&] { return cmd_fuse(f_ckpt, f_in, f_out); });
    if (detect->parsed())
        return run_guarded([&] { return cmd_detect(d_fckpt, d_sckpt, d_in, d_out, dump_all); });
    if (evaluate->parsed()) return run_guarded([&] { return cmd_evaluate(eargs); });
    if (synth_cmd->parsed()) return run_guarded([&] { return cmd_synth(s_out, scfg); });
    return kExitUsage;
}
