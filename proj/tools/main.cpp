// Command-line front end: synth, run, train, eval, ablate, bench.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ref/ref_bridge.hpp"
#include "ref/reference.hpp"
#include "vidagg/config.hpp"
#include "vidagg/errors.hpp"
#include "vidagg/fam.hpp"
#include "vidagg/fam_train.hpp"
#include "vidagg/pipeline.hpp"
#include "vidagg/rng.hpp"
#include "vidagg/stream.hpp"
#include "vidagg/synth.hpp"

namespace {

using namespace vidagg;

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(
               std::chrono::steady_clock::now() - t0)
        .count();
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(ch))) {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

PipelineConfig resolve_pipeline_config(const std::string& path, const std::string& mode_override,
                                       int64_t seed_override) {
    PipelineConfig cfg;
    if (!path.empty()) cfg = load_pipeline_config(path);
    if (!mode_override.empty()) cfg.mode = pipeline_mode_from_string(mode_override);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    cfg.validate();
    return cfg;
}

int cmd_synth(const std::string& config_path, int64_t seed_override, const std::string& out_path) {
    SynthConfig cfg;
    if (!config_path.empty()) cfg = load_synth_config(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    cfg.validate();

    const StreamData stream = generate(cfg);
    write_feature_stream(stream, out_path);
    save_synth_config(cfg, out_path + ".config.json");
    std::cout << "wrote " << stream.records.size() << " frames (" << cfg.num_videos << " videos, "
              << cfg.num_classes << " classes, d_q=" << cfg.d_q << ") to " << out_path << "\n";
    return 0;
}

int cmd_run(const std::string& stream_path, const std::string& weights_path,
            const std::string& config_path, const std::string& mode_override, int64_t seed_override,
            const std::string& out_path, const std::string& diag_path) {
    const PipelineConfig cfg = resolve_pipeline_config(config_path, mode_override, seed_override);
    const StreamData stream = read_feature_stream(stream_path);

    FamWeights weights;
    const FamWeights* wptr = nullptr;
    if (cfg.mode == PipelineMode::affinity || cfg.mode == PipelineMode::qk) {
        if (weights_path.empty()) throw ConfigError("mode " + to_string(cfg.mode) + " requires --weights");
        weights = load_fam_weights(weights_path);
        wptr = &weights;
    }

    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<Detection> dets = run_stream(stream, wptr, cfg);
    const double ms = elapsed_ms(t0);

    write_detections(dets, out_path);
    save_pipeline_config(cfg, out_path + ".config.json");
    if (cfg.mode == PipelineMode::cosine_diag && !diag_path.empty())
        write_cosine_diagnostics(stream, cfg, 4, diag_path);

    std::cout << dets.size() << " detections over " << stream.records.size() << " frames, "
              << ms / std::max<size_t>(1, stream.records.size()) << " ms/frame -> " << out_path
              << "\n";
    return 0;
}

int cmd_train(const std::string& stream_path, const std::string& val_path,
              const std::string& config_path, const std::string& mode_override,
              int epochs, double lr, int64_t seed_override, const std::string& out_path,
              std::string log_path) {
    const PipelineConfig cfg = resolve_pipeline_config(config_path, mode_override, seed_override);
    const StreamData stream = read_feature_stream(stream_path);
    const StreamData val = val_path.empty() ? stream : read_feature_stream(val_path);
    const std::vector<FrameGt> val_gts = collect_ground_truth(val);
    if (log_path.empty()) log_path = out_path + ".log";

    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw DataError("data error: cannot open " + log_path + " for writing");

    TrainOptions opts;
    opts.epochs = epochs;
    opts.lr = lr;
    opts.seed = seed_override >= 0 ? static_cast<uint64_t>(seed_override) : cfg.seed;
    opts.on_epoch = [&](int epoch, double mean_loss, const FamWeights& w) {
        const double ap = ap50(run_stream(val, &w, cfg), val_gts);
        char line[128];
        std::snprintf(line, sizeof(line), "epoch=%d loss=%.6f ap50=%.6f", epoch, mean_loss, ap);
        log << line << '\n';
        std::cout << line << std::endl;
    };

    const FamWeights w = train(stream, cfg, opts);
    save_fam_weights(w, out_path);
    save_pipeline_config(cfg, out_path + ".config.json");
    std::cout << "wrote weights to " << out_path << " (log: " << log_path << ")\n";
    return 0;
}

int cmd_eval(const std::string& stream_path, const std::string& dets_path,
             const std::string& report_path) {
    const StreamData stream = read_feature_stream(stream_path);
    const std::vector<FrameGt> gts = collect_ground_truth(stream);
    if (gts.empty()) throw DataError("data error: stream carries no ground truth to evaluate against");
    const std::vector<Detection> dets = read_detections(dets_path);

    const double overall = ap50(dets, gts);
    const std::map<int, double> per_class = ap50_per_class(dets, gts);

    std::string report;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "ap50 %.6f\n", overall);
    report += buf;
    for (const auto& [cls, ap] : per_class) {
        std::snprintf(buf, sizeof(buf), "class %d ap50 %.6f\n", cls, ap);
        report += buf;
    }
    std::cout << report;
    if (!report_path.empty()) {
        std::ofstream out(report_path, std::ios::trunc);
        if (!out) throw DataError("data error: cannot open " + report_path + " for writing");
        out << report;
    }
    return 0;
}

int cmd_ablate(const std::string& stream_path, const std::string& weights_path,
               const std::string& config_path, const std::string& param,
               const std::string& values_csv, const std::string& out_path, std::string plot_path) {
    const PipelineConfig cfg = resolve_pipeline_config(config_path, "", -1);
    const StreamData stream = read_feature_stream(stream_path);
    const std::vector<std::string> values = split_csv(values_csv);
    if (plot_path.empty()) plot_path = out_path + ".plot";

    FamWeights weights;
    const FamWeights* wptr = nullptr;
    if (!weights_path.empty()) {
        weights = load_fam_weights(weights_path);
        wptr = &weights;
    }

    const std::vector<AblationRow> rows = ablate(stream, wptr, cfg, param, values);
    write_ablation_table(rows, out_path);
    write_ablation_plot(rows, plot_path);
    save_pipeline_config(cfg, out_path + ".config.json");

    std::printf("%-12s %-10s %s\n", param.c_str(), "ap50", "ms/frame");
    for (const AblationRow& r : rows)
        std::printf("%-12s %-10.4f %.3f\n", r.value.c_str(), r.ap50, r.mean_ms_per_frame);
    return 0;
}

int cmd_bench(const std::string& sizes_csv, int m, int d_head, int d_q, int classes,
              uint64_t seed, bool skip_serial) {
    PipelineConfig cfg;
    cfg.m = m;
    cfg.d_head = d_head;
    cfg.validate();

    std::printf("%-8s %-14s %-12s %-12s %-9s %s\n", "N", "total_macs", "serial_ms", "parallel_ms",
                "speedup", "max_diff");
    for (const std::string& ns : split_csv(sizes_csv)) {
        const int n = std::stoi(ns);
        const OpCounts ops = count_ops(cfg, n, d_q, classes);

        std::mt19937_64 rng(mix64(seed ^ static_cast<uint64_t>(n)));
        AggregationBatch batch;
        batch.C = Matrix(n, d_q);
        batch.R = Matrix(n, d_q);
        batch.P = Matrix(n, 2);
        for (size_t i = 0; i < batch.C.size(); ++i) batch.C.data()[i] = 2.0 * unit_uniform(rng) - 1.0;
        for (size_t i = 0; i < batch.R.size(); ++i) batch.R.data()[i] = 2.0 * unit_uniform(rng) - 1.0;
        for (size_t i = 0; i < batch.P.size(); ++i) batch.P.data()[i] = unit_uniform(rng);
        batch.frame_of_row.assign(n, 0);
        const FamWeights w = init_fam_weights(m, d_head, d_q, classes, mix64(seed));

        const auto t0 = std::chrono::steady_clock::now();
        const FamOutputs outs = fam_forward(batch, w, AttentionMode::affinity, 0.75);
        const double par_ms = elapsed_ms(t0);

        double ser_ms = 0.0;
        double diff = 0.0;
        if (!skip_serial) {
            const ref::Mat c = ref::to_mat(batch.C);
            const ref::Mat r = ref::to_mat(batch.R);
            const ref::Mat p = ref::to_mat(batch.P);
            const ref::RefWeights rw = ref::to_ref_weights(w);
            const auto t1 = std::chrono::steady_clock::now();
            const ref::RefResult res = ref::fam_forward(c, r, p, rw, true, 0.75);
            ser_ms = elapsed_ms(t1);
            diff = std::max(ref::max_abs_diff(outs.probs, res.probs),
                            ref::max_abs_diff(outs.sa_f, res.sa_f));
        }
        std::printf("%-8d %-14lld %-12.2f %-12.2f %-9.2f %.2e\n", n, ops.total_macs(), ser_ms,
                    par_ms, skip_serial ? 0.0 : ser_ms / par_ms, diff);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Post-detection cross-frame feature aggregation engine"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic feature stream");
    std::string synth_config, synth_out;
    int64_t synth_seed = -1;
    synth->add_option("--config", synth_config, "Synth config json");
    synth->add_option("--seed", synth_seed, "Seed override");
    synth->add_option("--out", synth_out, "Output stream path")->required();

    // run
    auto* run = app.add_subcommand("run", "Detect over a feature stream");
    std::string run_stream_p, run_weights, run_config, run_mode, run_out, run_diag;
    int64_t run_seed = -1;
    run->add_option("--stream", run_stream_p, "Feature stream")->required();
    run->add_option("--weights", run_weights, "Weights file");
    run->add_option("--config", run_config, "Pipeline config json");
    run->add_option("--mode", run_mode, "Mode override (affinity|qk|cosine_diag|baseline)");
    run->add_option("--seed", run_seed, "Seed override");
    run->add_option("--out", run_out, "Detections output")->required();
    run->add_option("--diag", run_diag, "Cosine diagnostics output (cosine_diag mode)");

    // train
    auto* tr = app.add_subcommand("train", "Fine-tune aggregation weights");
    std::string tr_stream, tr_val, tr_config, tr_mode, tr_out, tr_log;
    int tr_epochs = 3;
    double tr_lr = 0.5;
    int64_t tr_seed = -1;
    tr->add_option("--stream", tr_stream, "Training feature stream (with ground truth)")->required();
    tr->add_option("--val", tr_val, "Validation stream (defaults to training stream)");
    tr->add_option("--config", tr_config, "Pipeline config json");
    tr->add_option("--mode", tr_mode, "Mode override (affinity|qk)");
    tr->add_option("--epochs", tr_epochs, "Epochs");
    tr->add_option("--lr", tr_lr, "Learning rate");
    tr->add_option("--seed", tr_seed, "Seed override");
    tr->add_option("--out", tr_out, "Weights output")->required();
    tr->add_option("--log", tr_log, "Metrics log path (default <out>.log)");

    // eval
    auto* ev = app.add_subcommand("eval", "Score detections against ground truth");
    std::string ev_stream, ev_dets, ev_report;
    ev->add_option("--stream", ev_stream, "Feature stream with ground truth")->required();
    ev->add_option("--dets", ev_dets, "Detections file")->required();
    ev->add_option("--report", ev_report, "Report output path");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Sweep one parameter and evaluate each value");
    std::string ab_stream, ab_weights, ab_config, ab_param, ab_values, ab_out, ab_plot;
    ab->add_option("--stream", ab_stream, "Feature stream with ground truth")->required();
    ab->add_option("--weights", ab_weights, "Weights file");
    ab->add_option("--config", ab_config, "Pipeline config json");
    ab->add_option("--param", ab_param, "Sweep parameter (f_g|f_l|a|tau|mode)")->required();
    ab->add_option("--values", ab_values, "Comma-separated sweep values")->required();
    ab->add_option("--out", ab_out, "Table output (csv)")->required();
    ab->add_option("--plot", ab_plot, "Plot-data output (default <out>.plot)");

    // bench
    auto* be = app.add_subcommand("bench", "Op counts and serial-vs-parallel timing");
    std::string be_sizes = "64,128,256,512";
    int be_m = 4, be_dh = 16, be_dq = 64, be_classes = 6;
    uint64_t be_seed = 1;
    bool be_no_serial = false;
    be->add_option("--sizes", be_sizes, "Comma-separated N values");
    be->add_option("--m", be_m, "Heads");
    be->add_option("--d_head", be_dh, "Per-head dim");
    be->add_option("--d_q", be_dq, "Input feature dim");
    be->add_option("--classes", be_classes, "Classifier outputs");
    be->add_option("--seed", be_seed, "Seed");
    be->add_flag("--no-serial", be_no_serial, "Skip the serial reference timing");

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(synth_config, synth_seed, synth_out);
        if (run->parsed()) return cmd_run(run_stream_p, run_weights, run_config, run_mode, run_seed,
                                          run_out, run_diag);
        if (tr->parsed()) return cmd_train(tr_stream, tr_val, tr_config, tr_mode, tr_epochs, tr_lr,
                                           tr_seed, tr_out, tr_log);
        if (ev->parsed()) return cmd_eval(ev_stream, ev_dets, ev_report);
        if (ab->parsed()) return cmd_ablate(ab_stream, ab_weights, ab_config, ab_param, ab_values,
                                            ab_out, ab_plot);
        if (be->parsed()) return cmd_bench(be_sizes, be_m, be_dh, be_dq, be_classes, be_seed,
                                           be_no_serial);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
