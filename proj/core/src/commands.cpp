#include "rulkit/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "rulkit/checkpoint.hpp"
#include "rulkit/errors.hpp"
#include "rulkit/ingest.hpp"
#include "rulkit/metrics.hpp"
#include "rulkit/plot.hpp"
#include "rulkit/preprocess.hpp"
#include "rulkit/train.hpp"
#include "rulkit/transfer.hpp"

namespace rulkit {

namespace {

namespace fs = std::filesystem;

TrajectorySet parse_trajectory_path(const fs::path& path,
                                    const std::string& name) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    return parse_trajectory_file(in, name);
}

std::vector<std::uint32_t> parse_truth_path(const fs::path& path,
                                            std::size_t expected) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    return parse_rul_truth(in, expected);
}

struct SubsetData {
    TrajectorySet train;
    TrajectorySet test;
    std::vector<std::uint32_t> truth;
};

SubsetData load_subset(const ExperimentConfig& cfg) {
    SubsetData d;
    d.train = parse_trajectory_path(cfg.train_file(), cfg.subset);
    d.test = parse_trajectory_path(cfg.test_file(), cfg.subset);
    d.truth = parse_truth_path(cfg.truth_file(), d.test.unit_count());
    return d;
}

/// Builtin subsets carry their own condition count; custom names fall back
/// to the configured expectation.
PipelineConfig pipeline_for_subset(const ExperimentConfig& cfg) {
    PipelineConfig p = cfg.pipeline;
    if (has_builtin_subset_spec(cfg.subset))
        p.expected_conditions = builtin_subset_spec(cfg.subset).conditions;
    return p;
}

void print_report(const ValidationReport& rep, std::ostream& log) {
    const char* role = rep.role == SubsetRole::train ? "train" : "test ";
    log << rep.subset_name << ' ' << role << ": units " << rep.units_found << '/'
        << rep.units_expected << (rep.unit_count_ok ? " pass" : " FAIL")
        << " | finite " << (rep.all_finite ? "pass" : "FAIL") << " | conditions "
        << rep.conditions_found << '/' << rep.conditions_expected
        << (rep.condition_count_ok ? " pass" : " FAIL") << '\n';
}

constexpr const char* kMetricsHeader =
    "subset\tseed\tL\talpha\teta\tlambda\tp\tn_frozen\tterminal_epoch\trmse\t"
    "score\n";

struct MetricsRow {
    std::string subset;
    std::string seed = "-";
    std::string L = "-";
    std::string alpha = "-";
    std::string eta = "-";
    std::string lambda = "-";
    std::string p = "-";
    std::string n_frozen = "-";
    std::string terminal_epoch = "-";
    double rmse = 0;
    double score = 0;
};

void append_metrics_row(const fs::path& path, const MetricsRow& row) {
    const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot open for append: " + path.string());
    if (fresh) out << kMetricsHeader;
    out << row.subset << '\t' << row.seed << '\t' << row.L << '\t' << row.alpha
        << '\t' << row.eta << '\t' << row.lambda << '\t' << row.p << '\t'
        << row.n_frozen << '\t' << row.terminal_epoch << '\t'
        << format_double(row.rmse) << '\t' << format_double(row.score) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

/// Loss log: "epoch<TAB>loss<TAB>rolling_variance", variance blank before
/// epoch 5.
EpochCallback loss_log_writer(std::ofstream& out) {
    return [&out](const FitProgress& p) {
        out << p.epoch << '\t' << format_double(p.loss) << '\t';
        if (p.variance) out << format_double(*p.variance);
        out << '\n';
    };
}

void dump_windows_text(const std::vector<WindowSample>& windows,
                       const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path.string());
    for (const auto& w : windows) {
        for (std::size_t i = 0; i < w.matrix.size(); ++i)
            out << format_double(w.matrix(i)) << ' ';
        out << format_double(w.target) << '\n';
    }
}

void dump_windows_binary(const std::vector<WindowSample>& windows,
                         const ModelConfig& model, const PipelineConfig& pipeline,
                         const fs::path& path) {
    ParameterStore<double> store;
    TensorD targets = TensorD::zeros({windows.size()});
    for (std::size_t i = 0; i < windows.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "windows.%06zu", i);
        store.insert(name, windows[i].matrix);
        targets(i) = windows[i].target;
    }
    store.insert("targets", std::move(targets));
    save_checkpoint(store, model, pipeline, path);
}

void maybe_dump_windows(const ExperimentConfig& cfg,
                        const std::vector<WindowSample>& windows,
                        const PipelineConfig& pipeline, std::ostream& log) {
    if (cfg.dump_windows.empty()) return;
    if (cfg.dump_format == "text")
        dump_windows_text(windows, cfg.dump_windows);
    else
        dump_windows_binary(windows, cfg.model, pipeline, cfg.dump_windows);
    log << "windows dumped to " << cfg.dump_windows << " (" << windows.size()
        << " samples)\n";
}

std::string fraction_tag(double p) {
    return "p" + std::to_string(int(std::lround(p * 100)));
}

template <typename T>
void train_impl(const ExperimentConfig& cfg, const SubsetData& data,
                const FittedPipeline& fitted,
                const std::vector<WindowSample>& windows, std::ostream& log) {
    ParameterStore<T> params;
    if (!cfg.init_checkpoint.empty()) {
        const auto ckpt = load_checkpoint(cfg.init_checkpoint);
        require_model_config(ckpt, cfg.model);
        params = expect_params<T>(ckpt);
        log << "initialized from " << cfg.init_checkpoint << '\n';
    } else {
        params = init_params<T>(cfg.model, cfg.train.seed);
    }
    const auto samples = to_train_samples<T>(windows);

    const fs::path out_dir = cfg.out_dir;
    fs::create_directories(out_dir);
    std::ofstream loss_log(out_dir / "loss.tsv", std::ios::trunc);
    if (!loss_log) throw IoError("cannot open loss log for write");

    auto result = fit<T>(std::move(params), samples, cfg.train, cfg.model,
                         StopRule::variance_plateau, nullptr,
                         loss_log_writer(loss_log));

    const fs::path ckpt_path = out_dir / "checkpoint.bin";
    save_checkpoint(result.best_params, cfg.model, fitted.config, ckpt_path);

    const Metrics m = evaluate_model<T>(result.best_params, cfg.model, fitted,
                                        data.test, data.truth);
    MetricsRow row;
    row.subset = cfg.subset;
    row.seed = std::to_string(cfg.train.seed);
    row.L = std::to_string(cfg.pipeline.window_len);
    row.alpha = format_double(cfg.pipeline.alpha);
    row.eta = format_double(cfg.train.eta);
    row.lambda = format_double(cfg.train.lambda);
    row.p = "1";
    row.n_frozen = "0";
    row.terminal_epoch =
        result.terminal_epoch ? std::to_string(*result.terminal_epoch) : "-";
    row.rmse = m.rmse;
    row.score = m.score;
    append_metrics_row(out_dir / "metrics.tsv", row);

    if (cfg.emit_plots) {
        write_loss_curve_svg(result.history, out_dir / "loss.svg");
        write_scatter_svg(m.truths, m.predictions, out_dir / "scatter.svg");
    }

    log << "subset=" << cfg.subset << " epochs=" << result.history.size()
        << " terminal=" << row.terminal_epoch
        << (result.stopped_by_rule ? "" : " (epoch cap)")
        << " rmse=" << format_double(m.rmse)
        << " score=" << format_double(m.score) << '\n'
        << "checkpoint: " << ckpt_path.string() << '\n';
}

template <typename T>
void finetune_impl(const ExperimentConfig& cfg, const LoadedCheckpoint& source,
                   const SubsetData& data, std::ostream& log) {
    const auto& source_params = expect_params<T>(source);
    const FreezeMask mask = build_freeze_mask(cfg.model, cfg.n_frozen);
    const fs::path out_dir = cfg.out_dir;
    fs::create_directories(out_dir);

    for (double p : cfg.fractions) {
        const TrajectorySet part = select_fraction(data.train, p);
        const PipelineConfig pcfg = pipeline_for_subset(cfg);
        const FittedPipeline fitted = fit_pipeline(part, pcfg);
        const auto windows = transform_training_set(fitted, part);
        maybe_dump_windows(cfg, windows, pcfg, log);
        const auto samples = to_train_samples<T>(windows);

        const std::string tag = fraction_tag(p);
        std::ofstream loss_log(out_dir / ("loss_" + tag + ".tsv"),
                               std::ios::trunc);
        if (!loss_log) throw IoError("cannot open loss log for write");

        auto result = finetune<T>(source_params, cfg.model, samples, mask,
                                  cfg.train, loss_log_writer(loss_log));

        const fs::path ckpt_path = out_dir / ("checkpoint_" + tag + ".bin");
        save_checkpoint(result.best_params, cfg.model, fitted.config, ckpt_path);

        const Metrics m = evaluate_model<T>(result.best_params, cfg.model,
                                            fitted, data.test, data.truth);
        MetricsRow row;
        row.subset = cfg.subset;
        row.seed = std::to_string(cfg.train.seed);
        row.L = std::to_string(cfg.pipeline.window_len);
        row.alpha = format_double(cfg.pipeline.alpha);
        row.eta = format_double(cfg.train.eta);
        row.lambda = format_double(cfg.train.lambda);
        row.p = format_double(p);
        row.n_frozen = std::to_string(cfg.n_frozen);
        row.terminal_epoch =
            result.terminal_epoch ? std::to_string(*result.terminal_epoch) : "-";
        row.rmse = m.rmse;
        row.score = m.score;
        append_metrics_row(out_dir / "metrics.tsv", row);

        if (cfg.emit_plots) {
            write_loss_curve_svg(result.history, out_dir / ("loss_" + tag + ".svg"));
            write_scatter_svg(m.truths, m.predictions,
                              out_dir / ("scatter_" + tag + ".svg"));
        }

        log << "subset=" << cfg.subset << " p=" << format_double(p)
            << " n_frozen=" << cfg.n_frozen << " terminal=" << row.terminal_epoch
            << (result.stopped_by_rule ? "" : " (epoch cap)")
            << " rmse=" << format_double(m.rmse)
            << " score=" << format_double(m.score) << '\n';
    }
}

} // namespace

bool cmd_validate(const ExperimentConfig& cfg, std::ostream& log) {
    const SubsetSpec spec = builtin_subset_spec(cfg.subset);
    const auto train = parse_trajectory_path(cfg.train_file(), cfg.subset);
    const auto test = parse_trajectory_path(cfg.test_file(), cfg.subset);

    const auto train_rep = validate_subset(train, spec, SubsetRole::train);
    const auto test_rep = validate_subset(test, spec, SubsetRole::test);
    print_report(train_rep, log);
    print_report(test_rep, log);

    bool truth_ok = true;
    try {
        const auto truth = parse_truth_path(cfg.truth_file(), spec.test_units);
        log << cfg.subset << " truth: " << truth.size() << " values pass\n";
    } catch (const std::exception& e) {
        truth_ok = false;
        log << cfg.subset << " truth: FAIL (" << e.what() << ")\n";
    }

    const bool ok = train_rep.pass() && test_rep.pass() && truth_ok;
    log << (ok ? "RESULT PASS" : "RESULT FAIL") << '\n';
    return ok;
}

void cmd_synth(const SynthSpec& spec, const std::filesystem::path& out_dir,
               std::ostream& log) {
    const GenResult gen = generate(spec);
    fs::create_directories(out_dir);
    const auto write = [&](const std::string& prefix, const auto& writer) {
        const fs::path path = out_dir / (prefix + spec.name + ".txt");
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot open for write: " + path.string());
        writer(out);
        if (!out) throw IoError("write failed: " + path.string());
        log << "wrote " << path.string() << '\n';
    };
    write("train_", [&](std::ostream& o) { write_trajectory_file(gen.train, o); });
    write("test_", [&](std::ostream& o) { write_trajectory_file(gen.test, o); });
    write("RUL_", [&](std::ostream& o) { write_rul_file(gen.truth, o); });
}

void cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
    cfg.validate();
    const SubsetData data = load_subset(cfg);
    const PipelineConfig pcfg = pipeline_for_subset(cfg);
    const FittedPipeline fitted = fit_pipeline(data.train, pcfg);
    const auto windows = transform_training_set(fitted, data.train);
    maybe_dump_windows(cfg, windows, pcfg, log);
    if (cfg.model.dtype == Dtype::f32)
        train_impl<float>(cfg, data, fitted, windows, log);
    else
        train_impl<double>(cfg, data, fitted, windows, log);
}

void cmd_finetune(const ExperimentConfig& cfg, std::ostream& log) {
    cfg.validate();
    if (cfg.source_checkpoint.empty())
        throw ConfigError("finetune requires source_checkpoint");
    const LoadedCheckpoint source = load_checkpoint(cfg.source_checkpoint);
    require_model_config(source, cfg.model);
    const SubsetData data = load_subset(cfg);
    if (cfg.model.dtype == Dtype::f32)
        finetune_impl<float>(cfg, source, data, log);
    else
        finetune_impl<double>(cfg, source, data, log);
}

void cmd_evaluate(const ExperimentConfig& cfg,
                  const std::filesystem::path& checkpoint_path,
                  std::ostream& log) {
    const LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
    ExperimentConfig ecfg = cfg;
    ecfg.model = ckpt.model;
    ecfg.pipeline = ckpt.pipeline;
    const SubsetData data = load_subset(ecfg);
    const PipelineConfig pcfg = pipeline_for_subset(ecfg);
    const FittedPipeline fitted = fit_pipeline(data.train, pcfg);

    Metrics m;
    if (ckpt.dtype == Dtype::f32)
        m = evaluate_model<float>(ckpt.f32, ckpt.model, fitted, data.test,
                                  data.truth);
    else
        m = evaluate_model<double>(ckpt.f64, ckpt.model, fitted, data.test,
                                   data.truth);

    fs::create_directories(cfg.out_dir);
    MetricsRow row;
    row.subset = ecfg.subset;
    row.L = std::to_string(pcfg.window_len);
    row.alpha = format_double(pcfg.alpha);
    row.rmse = m.rmse;
    row.score = m.score;
    append_metrics_row(fs::path(cfg.out_dir) / "metrics.tsv", row);

    log << "subset=" << ecfg.subset << " n=" << m.n
        << " rmse=" << format_double(m.rmse)
        << " score=" << format_double(m.score) << '\n';
}

} // namespace rulkit
