#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "irfs/fusion_net.hpp"
#include "irfs/metrics.hpp"
#include "irfs/run_config.hpp"
#include "irfs/sod_net.hpp"
#include "irfs/types.hpp"

namespace irfs::train {

namespace fs = std::filesystem;

enum class Phase { fusion, sod };

/// Progress of the alternating schedule, serializable at loop boundaries.
struct LoopState {
    int loop_index = 0;
    Phase phase = Phase::fusion;
    double eta_current = 1.0;
    int fusion_epochs_done = 0;
    int sod_epochs_done = 0;
    uint64_t rng_seed = 0;
};

struct EpochLog {
    int loop = 0;
    Phase phase = Phase::fusion;
    int epoch = 0;
    double mean_loss = 0;        // objective optimized in this phase
    double mean_fusion_term = 0; // fusion-loss component (fusion phases)
    double mean_sod_term = 0;    // detection-loss component
    double lr = 0;
};

struct TrainResult {
    std::vector<MetricReport> loop_reports; // one per loop boundary
    std::vector<EpochLog> trace;
    int loops_run = 0;
};

/// Alternating two-phase optimization: the fusion phase updates only the
/// fusion net under the joint objective with the detector frozen; the
/// detection phase updates only the detector with gradients truncated at the
/// fusion output. A one-stage baseline with the same epoch budget is
/// available for ablation comparisons.
class Trainer {
public:
    struct Options {
        FusionNetConfig fusion_cfg;
        SodNetConfig sod_cfg;
        LoopSchedule schedule;
        double lambda = 0.5;
        double gamma = 20.0;
        int wloss_pool = 15;
        bool average_coarse = false;
        Guidance guidance = Guidance::fused;
        uint64_t seed = 42;
        fs::path out_dir; // empty: keep everything in memory
        bool one_stage = false;
        bool verbose = false;
        std::string dataset_name = "synthetic";
    };

    Trainer(Options opt, std::vector<MultimodalSample> train_data,
            std::vector<MultimodalSample> test_data);

    /// Full run from scratch (interactive loops or the one-stage baseline).
    TrainResult run();

    /// Continues an interrupted run from the last complete loop checkpoint
    /// under out_dir; returns the remaining loops' logs and reports.
    TrainResult resume();

    // single phases, exposed for the loop-contract tests
    std::vector<EpochLog> run_fusion_phase(int loop);
    std::vector<EpochLog> run_sod_phase(int loop);

    MetricReport evaluate_test();

    /// Progress snapshot; eta_current always satisfies the ramp invariant.
    const LoopState& state() const { return state_; }

    FusionNet& fusion_net() { return *fusion_; }
    SodNet& sod_net() { return *sod_; }
    nn::Adam& fusion_optimizer() { return *fusion_opt_; }
    nn::Adam& sod_optimizer() { return *sod_opt_; }

    /// Analytic gradient of the detection loss w.r.t. every fusion
    /// parameter on one probe sample; the truncation contract makes it
    /// identically zero.
    double sod_phase_fusion_grad_linf(size_t sample_index = 0);

private:
    struct SampleTensors {
        Tensor y_vis, cb, cr, ir_plane; // (H,W,1) planes
        Tensor vis3, ir3;               // (3,H,W)
        Tensor mask;                    // (H,W)
    };

    struct LossBundle {
        ag::Var total;
        double fusion_value = 0;
        double sod_value = 0;
    };

    SampleTensors prep(const MultimodalSample& s, bool flip) const;
    ag::Var fused_rgb_graph(const ag::Var& fused_y, const Tensor& cb, const Tensor& cr) const;
    Tensor guidance_tensor(const SampleTensors& st, const Tensor& fused_y_plain) const;
    LossBundle sample_overall_loss(const SampleTensors& st, double eta, bool detach_fused);
    ag::Var sample_sod_loss(const SampleTensors& st);
    std::vector<std::vector<size_t>> epoch_batches(int loop, Phase phase, int epoch,
                                                   std::vector<bool>& flips) const;
    void check_finite(double loss, int loop, Phase phase, int epoch) const;
    TrainResult run_loops(int first_loop);
    TrainResult run_one_stage();
    void save_loop_artifacts(int loop, const MetricReport& report);
    void write_manifest() const;
    void append_trace(const std::vector<EpochLog>& logs);

    Options opt_;
    std::vector<MultimodalSample> train_data_, test_data_;
    std::unique_ptr<FusionNet> fusion_;
    std::unique_ptr<SodNet> sod_;
    std::unique_ptr<nn::Adam> fusion_opt_, sod_opt_;
    LoopState state_;
};

/// Joint-update baseline sharing the Trainer machinery; `schedule` supplies
/// the same total epoch budget m*(n_f+n_s).
TrainResult one_stage_baseline(Trainer::Options opt, std::vector<MultimodalSample> train_data,
                               std::vector<MultimodalSample> test_data);

} // namespace irfs::train
