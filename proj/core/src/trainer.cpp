#include "irfs/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include "config_json.hpp"
#include "irfs/checkpoint.hpp"
#include "irfs/color.hpp"
#include "irfs/data.hpp"
#include "irfs/losses.hpp"

namespace irfs::train {

using ag::Var;

namespace {

constexpr double kKr = 0.299;
constexpr double kKg = 0.587;
constexpr double kKb = 0.114;

std::string phase_name(Phase p) { return p == Phase::fusion ? "fusion" : "sod"; }

uint64_t stream_id(int loop, Phase phase, int epoch) {
    return uint64_t(loop) * 1000003ull + (phase == Phase::fusion ? 0ull : 500000ull) +
           uint64_t(epoch) + 17ull;
}

} // namespace

Trainer::Trainer(Options opt, std::vector<MultimodalSample> train_data,
                 std::vector<MultimodalSample> test_data)
    : opt_(std::move(opt)), train_data_(std::move(train_data)), test_data_(std::move(test_data)) {
    opt_.schedule.validate();
    opt_.fusion_cfg.validate();
    opt_.sod_cfg.validate();
    if (train_data_.empty()) throw DataError("trainer: empty training set");

    const int crop = opt_.schedule.crop;
    auto fit = [&](MultimodalSample& s) {
        if (s.height() != crop || s.width() != crop) {
            s.visible = data::resize_bilinear(s.visible, crop, crop);
            s.infrared = data::resize_bilinear(s.infrared, crop, crop);
            if (s.mask) s.mask = data::resize_nearest(*s.mask, crop, crop);
        }
        validate_sample(s);
    };
    for (auto& s : train_data_) {
        fit(s);
        if (!s.mask) throw DataError("trainer: training sample " + s.id + " lacks a mask");
    }
    for (auto& s : test_data_) fit(s);

    Rng seed_rng(opt_.seed);
    Rng fusion_rng = seed_rng.fork(1);
    Rng sod_rng = seed_rng.fork(2);
    fusion_ = std::make_unique<FusionNet>(opt_.fusion_cfg, fusion_rng);
    sod_ = std::make_unique<SodNet>(opt_.sod_cfg, sod_rng);
    fusion_opt_ = std::make_unique<nn::Adam>(fusion_->params().vars(), opt_.schedule.lr_fusion);
    sod_opt_ = std::make_unique<nn::Adam>(sod_->params().vars(), opt_.schedule.lr_sod_init);
}

Trainer::SampleTensors Trainer::prep(const MultimodalSample& s, bool flip) const {
    const MultimodalSample* src = &s;
    MultimodalSample flipped;
    if (flip) {
        flipped.visible = data::flip_horizontal(s.visible);
        flipped.infrared = data::flip_horizontal(s.infrared);
        if (s.mask) flipped.mask = data::flip_horizontal(*s.mask);
        flipped.id = s.id;
        src = &flipped;
    }
    SampleTensors st;
    const YCbCr planes = to_ycbcr(src->visible);
    const int64_t h = src->height(), w = src->width();
    st.y_vis = planes.y.reshaped({1, h, w});
    st.cb = planes.cb;
    st.cr = planes.cr;
    st.ir_plane = src->infrared.reshaped({1, h, w});
    st.vis3 = SodNet::to_chw3(src->visible);
    st.ir3 = SodNet::to_chw3(src->infrared);
    if (src->mask) st.mask = *src->mask;
    return st;
}

ag::Var Trainer::fused_rgb_graph(const Var& fused_y, const Tensor& cb, const Tensor& cr) const {
    // chroma recombination is affine per channel: each output plane is the
    // fused luma plus a per-pixel constant offset, clamped to [0,1]
    const int64_t h = cb.shape(0), w = cb.shape(1);
    Tensor off_r({1, h, w}), off_g({1, h, w}), off_b({1, h, w});
    for (int64_t p = 0; p < h * w; ++p) {
        const double dcr = cr[p] - 0.5, dcb = cb[p] - 0.5;
        const double orr = 2.0 * (1.0 - kKr) * dcr;
        const double ob = 2.0 * (1.0 - kKb) * dcb;
        off_r[p] = orr;
        off_b[p] = ob;
        off_g[p] = -(kKr * orr + kKb * ob) / kKg;
    }
    const Var r = ag::clamp(ag::add(fused_y, Var::constant(off_r)), 0.0, 1.0);
    const Var g = ag::clamp(ag::add(fused_y, Var::constant(off_g)), 0.0, 1.0);
    const Var b = ag::clamp(ag::add(fused_y, Var::constant(off_b)), 0.0, 1.0);
    return ag::concat_ch({r, g, b});
}

Tensor Trainer::guidance_tensor(const SampleTensors& st, const Tensor& fused_y_plain) const {
    const int64_t h = st.cb.shape(0), w = st.cb.shape(1);
    switch (opt_.guidance) {
    case Guidance::fused: {
        const Tensor rgb = ycbcr_to_rgb({fused_y_plain.reshaped({h, w, 1}), st.cb, st.cr});
        return SodNet::to_chw3(rgb);
    }
    case Guidance::ir: return st.ir3;
    case Guidance::vis: return st.vis3;
    case Guidance::average: {
        Tensor out = st.vis3;
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = 0.5 * (st.vis3[i] + st.ir3[i]);
        return out;
    }
    }
    throw ConfigError("bad guidance mode");
}

Trainer::LossBundle Trainer::sample_overall_loss(const SampleTensors& st, double eta,
                                                 bool detach_fused) {
    const Var y_vis = Var::constant(st.y_vis);
    const Var ir = Var::constant(st.ir_plane);
    Var fused_y = fusion_->forward_y(y_vis, ir);
    const losses::FusionLossVars floss =
        losses::fusion_loss(st.ir_plane, st.y_vis, fused_y, opt_.lambda, opt_.gamma);

    if (detach_fused) fused_y = ag::stop_gradient(fused_y);
    Var guide;
    if (opt_.guidance == Guidance::fused)
        guide = fused_rgb_graph(fused_y, st.cb, st.cr);
    else
        guide = Var::constant(guidance_tensor(st, fused_y.value()));

    const SaliencyVars maps = sod_->forward(Var::constant(st.ir3), guide, Var::constant(st.vis3));
    const losses::SodLossVars sloss =
        losses::sod_loss(maps, st.mask, opt_.wloss_pool, opt_.average_coarse);
    LossBundle out;
    out.total = losses::overall_loss(floss.total, sloss.total, opt_.schedule.tau, eta);
    out.fusion_value = floss.total.scalar();
    out.sod_value = sloss.total.scalar();
    return out;
}

ag::Var Trainer::sample_sod_loss(const SampleTensors& st) {
    // gradients are truncated at the fusion output: the guidance stream is a
    // plain tensor, so no path reaches the fusion parameters
    const Var y_vis = Var::constant(st.y_vis);
    const Var ir = Var::constant(st.ir_plane);
    const Var fused_y = fusion_->forward_y(y_vis, ir);
    const Var guide = Var::constant(guidance_tensor(st, fused_y.value()));
    const SaliencyVars maps = sod_->forward(Var::constant(st.ir3), guide, Var::constant(st.vis3));
    return losses::sod_loss(maps, st.mask, opt_.wloss_pool, opt_.average_coarse).total;
}

std::vector<std::vector<size_t>> Trainer::epoch_batches(int loop, Phase phase, int epoch,
                                                        std::vector<bool>& flips) const {
    Rng rng = Rng(opt_.seed).fork(stream_id(loop, phase, epoch));
    std::vector<size_t> order(train_data_.size());
    std::iota(order.begin(), order.end(), size_t(0));
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[size_t(rng.uniform_int(0, int64_t(i) - 1))]);
    flips.assign(train_data_.size(), false);
    for (size_t i = 0; i < flips.size(); ++i) flips[i] = rng.bernoulli(0.5);

    std::vector<std::vector<size_t>> batches;
    for (size_t i = 0; i < order.size(); i += size_t(opt_.schedule.batch_size)) {
        const size_t end = std::min(order.size(), i + size_t(opt_.schedule.batch_size));
        batches.emplace_back(order.begin() + long(i), order.begin() + long(end));
    }
    return batches;
}

void Trainer::check_finite(double loss, int loop, Phase phase, int epoch) const {
    if (std::isfinite(loss)) return;
    if (!opt_.out_dir.empty()) {
        fs::create_directories(opt_.out_dir);
        std::ofstream snap(opt_.out_dir / "numeric_abort.json");
        snap << "{\"loop\":" << loop << ",\"phase\":\"" << phase_name(phase)
             << "\",\"epoch\":" << epoch << ",\"loss\":\"" << loss << "\"}\n";
    }
    throw NumericError("non-finite loss in " + phase_name(phase) + " phase, loop " +
                       std::to_string(loop) + ", epoch " + std::to_string(epoch));
}

std::vector<EpochLog> Trainer::run_fusion_phase(int loop) {
    std::vector<EpochLog> logs;
    const double eta = opt_.schedule.eta(loop);
    state_.loop_index = loop;
    state_.phase = Phase::fusion;
    state_.eta_current = eta;
    state_.rng_seed = opt_.seed;
    sod_->params().set_trainable(false); // frozen: no updates, no gradient buffers
    fusion_->params().set_trainable(true);
    fusion_opt_->set_lr(opt_.schedule.lr_fusion);

    for (int epoch = 0; epoch < opt_.schedule.n_f; ++epoch) {
        std::vector<bool> flips;
        const auto batches = epoch_batches(loop, Phase::fusion, epoch, flips);
        double loss_sum = 0, fusion_sum = 0, sod_sum = 0;
        for (const auto& batch : batches) {
            fusion_->params().zero_grads();
            const double inv_b = 1.0 / double(batch.size());
            for (size_t idx : batch) {
                const SampleTensors st = prep(train_data_[idx], flips[idx]);
                const LossBundle loss = sample_overall_loss(st, eta, false);
                check_finite(loss.total.scalar(), loop, Phase::fusion, epoch);
                loss_sum += loss.total.scalar();
                fusion_sum += loss.fusion_value;
                sod_sum += loss.sod_value;
                ag::backward(ag::mul_scalar(loss.total, inv_b));
            }
            fusion_opt_->step();
        }
        const double inv_n = 1.0 / double(train_data_.size());
        logs.push_back({loop, Phase::fusion, epoch, loss_sum * inv_n, fusion_sum * inv_n,
                        sod_sum * inv_n, opt_.schedule.lr_fusion});
        ++state_.fusion_epochs_done;
        if (opt_.verbose)
            std::cout << "[loop " << loop << "] fusion epoch " << epoch
                      << " loss=" << logs.back().mean_loss << " eta=" << eta << "\n";
    }
    return logs;
}

std::vector<EpochLog> Trainer::run_sod_phase(int loop) {
    std::vector<EpochLog> logs;
    state_.loop_index = loop;
    state_.phase = Phase::sod;
    state_.eta_current = opt_.schedule.eta(loop);
    state_.rng_seed = opt_.seed;
    fusion_->params().set_trainable(false);
    sod_->params().set_trainable(true);

    for (int epoch = 0; epoch < opt_.schedule.n_s; ++epoch) {
        const double lr = opt_.schedule.lr_sod(epoch);
        sod_opt_->set_lr(lr);
        std::vector<bool> flips;
        const auto batches = epoch_batches(loop, Phase::sod, epoch, flips);
        double loss_sum = 0;
        for (const auto& batch : batches) {
            sod_->params().zero_grads();
            const double inv_b = 1.0 / double(batch.size());
            for (size_t idx : batch) {
                const SampleTensors st = prep(train_data_[idx], flips[idx]);
                const Var loss = sample_sod_loss(st);
                check_finite(loss.scalar(), loop, Phase::sod, epoch);
                loss_sum += loss.scalar();
                ag::backward(ag::mul_scalar(loss, inv_b));
            }
            sod_opt_->step();
        }
        const double mean = loss_sum / double(train_data_.size());
        logs.push_back({loop, Phase::sod, epoch, mean, 0.0, mean, lr});
        ++state_.sod_epochs_done;
        if (opt_.verbose)
            std::cout << "[loop " << loop << "] sod epoch " << epoch
                      << " loss=" << logs.back().mean_loss << " lr=" << lr << "\n";
    }
    return logs;
}

double Trainer::sod_phase_fusion_grad_linf(size_t sample_index) {
    if (sample_index >= train_data_.size()) throw DataError("probe sample index out of range");
    fusion_->params().set_trainable(true); // would accumulate if any path existed
    sod_->params().set_trainable(true);
    fusion_->params().zero_grads();
    const SampleTensors st = prep(train_data_[sample_index], false);
    ag::backward(sample_sod_loss(st));
    double linf = 0;
    for (const auto& [_, v] : fusion_->params().items())
        if (v.has_grad())
            for (int64_t i = 0; i < v.grad().numel(); ++i)
                linf = std::max(linf, std::fabs(v.grad()[i]));
    fusion_->params().zero_grads();
    sod_->params().zero_grads();
    return linf;
}

MetricReport Trainer::evaluate_test() {
    MetricReport agg;
    agg.dataset = opt_.dataset_name;
    const auto& pool = test_data_.empty() ? train_data_ : test_data_;
    agg.n_samples = int(pool.size());
    int sod_count = 0;
    for (const auto& s : pool) {
        const FusedImage fused = fusion_->fuse_pair(s);
        const Tensor y_vis = rgb_to_gray(s.visible);
        agg.fusion.mi += metrics::mi(s.infrared, y_vis, fused.y_channel);
        agg.fusion.vif += metrics::vif(s.infrared, y_vis, fused.y_channel);
        agg.fusion.cc += metrics::cc(s.infrared, y_vis, fused.y_channel);
        if (s.mask) {
            const SaliencyOutputs maps = sod_->detect(s, fused, opt_.guidance);
            agg.sod.s_alpha += metrics::s_measure(maps.final_map, *s.mask);
            agg.sod.f_beta += metrics::f_beta(maps.final_map, *s.mask);
            agg.sod.e_xi += metrics::e_measure(maps.final_map, *s.mask);
            agg.sod.mae += metrics::mae(maps.final_map, *s.mask);
            ++sod_count;
        }
    }
    const double inv = 1.0 / double(pool.size());
    agg.fusion.mi *= inv;
    agg.fusion.vif *= inv;
    agg.fusion.cc *= inv;
    if (sod_count > 0) {
        agg.sod.s_alpha /= sod_count;
        agg.sod.f_beta /= sod_count;
        agg.sod.e_xi /= sod_count;
        agg.sod.mae /= sod_count;
    }
    return agg;
}

void Trainer::write_manifest() const {
    if (opt_.out_dir.empty()) return;
    fs::create_directories(opt_.out_dir);
    nlohmann::json j;
    j["mode"] = opt_.one_stage ? "one_stage" : "interactive";
    j["one_stage"] = opt_.one_stage;
    j["seed"] = opt_.seed;
    j["dataset"] = opt_.dataset_name;
    j["n_train"] = train_data_.size();
    j["n_test"] = test_data_.size();
    j["guidance"] = to_string(opt_.guidance);
    j["schedule"] = cfgjson::to_json(opt_.schedule);
    j["fusion_config"] = cfgjson::to_json(opt_.fusion_cfg);
    j["sod_config"] = cfgjson::to_json(opt_.sod_cfg);
    j["lambda"] = opt_.lambda;
    j["gamma"] = opt_.gamma;
    auto fnv = [](const std::string& text) {
        uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : text) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return h;
    };
    j["fusion_config_hash"] = fnv(cfgjson::to_json(opt_.fusion_cfg).dump());
    j["sod_config_hash"] = fnv(cfgjson::to_json(opt_.sod_cfg).dump());
    j["schedule_hash"] = fnv(cfgjson::to_json(opt_.schedule).dump());
    std::ofstream out(opt_.out_dir / "manifest.json");
    out << j.dump(2) << "\n";
}

void Trainer::append_trace(const std::vector<EpochLog>& logs) {
    if (opt_.out_dir.empty()) return;
    fs::create_directories(opt_.out_dir);
    const fs::path p = opt_.out_dir / "loss_trace.csv";
    const bool fresh = !fs::exists(p);
    std::ofstream out(p, std::ios::app);
    if (fresh) out << "loop,phase,epoch,mean_loss,fusion_term,sod_term,lr\n";
    out.precision(17);
    for (const auto& l : logs)
        out << l.loop << "," << phase_name(l.phase) << "," << l.epoch << "," << l.mean_loss << ","
            << l.mean_fusion_term << "," << l.mean_sod_term << "," << l.lr << "\n";
}

void Trainer::save_loop_artifacts(int loop, const MetricReport& report) {
    if (opt_.out_dir.empty()) return;
    const fs::path dir = opt_.out_dir / ("loop" + std::to_string(loop));
    fs::create_directories(dir);
    ckpt::save_fusion(dir / "fusion.ckpt", *fusion_, fusion_opt_.get());
    ckpt::save_sod(dir / "sod.ckpt", *sod_, sod_opt_.get());
    metrics::EvaluationReport er;
    er.aggregate = report;
    std::ofstream out(dir / "metrics.json");
    out << metrics::report_to_json(er, true, true) << "\n";
}

TrainResult Trainer::run_loops(int first_loop) {
    TrainResult res;
    for (int loop = first_loop; loop < opt_.schedule.m; ++loop) {
        auto flogs = run_fusion_phase(loop);
        auto slogs = run_sod_phase(loop);
        append_trace(flogs);
        append_trace(slogs);
        res.trace.insert(res.trace.end(), flogs.begin(), flogs.end());
        res.trace.insert(res.trace.end(), slogs.begin(), slogs.end());
        MetricReport report = evaluate_test();
        save_loop_artifacts(loop, report);
        res.loop_reports.push_back(report);
        ++res.loops_run;
        if (opt_.verbose)
            std::cout << "[loop " << loop << "] S=" << report.sod.s_alpha
                      << " F=" << report.sod.f_beta << " MAE=" << report.sod.mae
                      << " MI=" << report.fusion.mi << "\n";
    }
    return res;
}

TrainResult Trainer::run_one_stage() {
    TrainResult res;
    const int per_loop = opt_.schedule.n_f + opt_.schedule.n_s;
    const int total = opt_.schedule.m * per_loop; // same budget as interactive
    fusion_->params().set_trainable(true);
    sod_->params().set_trainable(true);
    fusion_opt_->set_lr(opt_.schedule.lr_fusion);

    for (int epoch = 0; epoch < total; ++epoch) {
        const int loop_eq = epoch / per_loop;
        const double eta = opt_.schedule.eta(loop_eq);
        const double t = total > 1 ? double(epoch) / double(total - 1) : 0.0;
        const double lr_sod = opt_.schedule.lr_sod_floor +
                              0.5 * (opt_.schedule.lr_sod_init - opt_.schedule.lr_sod_floor) *
                                  (1.0 + std::cos(M_PI * t));
        sod_opt_->set_lr(lr_sod);

        std::vector<bool> flips;
        const auto batches = epoch_batches(loop_eq, Phase::fusion, epoch, flips);
        double loss_sum = 0, fusion_sum = 0, sod_sum = 0;
        for (const auto& batch : batches) {
            fusion_->params().zero_grads();
            sod_->params().zero_grads();
            const double inv_b = 1.0 / double(batch.size());
            for (size_t idx : batch) {
                const SampleTensors st = prep(train_data_[idx], flips[idx]);
                const LossBundle loss = sample_overall_loss(st, eta, false);
                check_finite(loss.total.scalar(), loop_eq, Phase::fusion, epoch);
                loss_sum += loss.total.scalar();
                fusion_sum += loss.fusion_value;
                sod_sum += loss.sod_value;
                ag::backward(ag::mul_scalar(loss.total, inv_b));
            }
            fusion_opt_->step();
            sod_opt_->step();
        }
        const double inv_n = 1.0 / double(train_data_.size());
        EpochLog log{loop_eq, Phase::fusion, epoch, loss_sum * inv_n, fusion_sum * inv_n,
                     sod_sum * inv_n, lr_sod};
        res.trace.push_back(log);
        append_trace({log});
        if ((epoch + 1) % per_loop == 0) {
            MetricReport report = evaluate_test();
            save_loop_artifacts(loop_eq, report);
            res.loop_reports.push_back(report);
            ++res.loops_run;
            if (opt_.verbose)
                std::cout << "[one-stage " << loop_eq << "] S=" << report.sod.s_alpha
                          << " F=" << report.sod.f_beta << " MAE=" << report.sod.mae << "\n";
        }
    }
    return res;
}

TrainResult Trainer::run() {
    if (!opt_.out_dir.empty()) { // fresh run: drop any stale trace
        std::error_code ec;
        fs::remove(opt_.out_dir / "loss_trace.csv", ec);
        fs::remove(opt_.out_dir / "numeric_abort.json", ec);
    }
    write_manifest();
    return opt_.one_stage ? run_one_stage() : run_loops(0);
}

TrainResult Trainer::resume() {
    if (opt_.out_dir.empty()) throw ConfigError("resume requires an output directory");
    if (opt_.one_stage) throw ConfigError("resume is supported for interactive runs only");
    int last_complete = -1;
    for (int loop = 0; loop < opt_.schedule.m; ++loop) {
        const fs::path dir = opt_.out_dir / ("loop" + std::to_string(loop));
        if (fs::exists(dir / "fusion.ckpt") && fs::exists(dir / "sod.ckpt") &&
            fs::exists(dir / "metrics.json"))
            last_complete = loop;
        else
            break;
    }
    if (last_complete < 0) return run_loops(0);
    const fs::path dir = opt_.out_dir / ("loop" + std::to_string(last_complete));
    ckpt::load_fusion(dir / "fusion.ckpt", *fusion_, fusion_opt_.get());
    ckpt::load_sod(dir / "sod.ckpt", *sod_, sod_opt_.get());
    return run_loops(last_complete + 1);
}

TrainResult one_stage_baseline(Trainer::Options opt, std::vector<MultimodalSample> train_data,
                               std::vector<MultimodalSample> test_data) {
    opt.one_stage = true;
    Trainer t(std::move(opt), std::move(train_data), std::move(test_data));
    return t.run();
}

} // namespace irfs::train
