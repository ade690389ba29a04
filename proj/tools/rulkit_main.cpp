#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rulkit/commands.hpp"
#include "rulkit/errors.hpp"
#include "rulkit/experiment.hpp"
#include "rulkit/synth.hpp"

namespace {

using rulkit::ExperimentConfig;

/// Shared --config/--set plumbing: file first, then individual overrides in
/// the order given.
struct ConfigArgs {
    std::string config_file;
    std::vector<std::string> overrides;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file,
                        "key = value configuration file");
        cmd->add_option("--set", overrides,
                        "override one key, e.g. --set eta=0.001")
            ->take_all();
    }

    ExperimentConfig build() const {
        ExperimentConfig cfg;
        if (!config_file.empty()) rulkit::load_config_file(cfg, config_file);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw rulkit::ConfigError("--set expects key=value, got '" + kv +
                                          "'");
            rulkit::apply_config_kv(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        return cfg;
    }
};

void add_common_data_options(CLI::App* cmd, std::string& data_dir,
                             std::string& subset, std::string& out_dir) {
    cmd->add_option("--data", data_dir, "data directory (default $RULKIT_DATA_DIR)");
    cmd->add_option("--subset", subset, "subset name, e.g. FD001 or SRC");
    cmd->add_option("--out", out_dir, "output directory");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"RUL prediction toolkit: preprocessing, transformer "
                 "regression, transfer learning and evaluation"};
    app.require_subcommand(1);

    // validate
    auto* validate = app.add_subcommand("validate", "check a subset's files");
    ConfigArgs validate_cfg;
    validate_cfg.attach(validate);
    std::string v_data, v_subset, v_out;
    add_common_data_options(validate, v_data, v_subset, v_out);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string s_preset = "source";
    std::string s_out = "data";
    std::uint64_t s_seed = 0;
    synth->add_option("--preset", s_preset, "source | target")
        ->check(CLI::IsMember({"source", "target"}));
    synth->add_option("--out", s_out, "output directory");
    synth->add_option("--seed", s_seed, "override the preset seed");

    // train
    auto* train = app.add_subcommand("train", "train on a subset's full data");
    ConfigArgs train_cfg;
    train_cfg.attach(train);
    std::string t_data, t_subset, t_out;
    add_common_data_options(train, t_data, t_subset, t_out);

    // finetune
    auto* finetune = app.add_subcommand(
        "finetune", "freeze-and-fine-tune a source checkpoint on a target subset");
    ConfigArgs finetune_cfg;
    finetune_cfg.attach(finetune);
    std::string f_data, f_subset, f_out, f_source, f_fractions;
    std::int64_t f_frozen = -1;
    add_common_data_options(finetune, f_data, f_subset, f_out);
    finetune->add_option("--source-checkpoint", f_source,
                         "checkpoint to start from");
    finetune->add_option("--n-frozen", f_frozen, "backbone layers to freeze");
    finetune->add_option("--fractions", f_fractions,
                         "comma-separated data fractions, e.g. 0.1,0.5,1.0");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate",
                                        "evaluate a checkpoint on a subset");
    ConfigArgs evaluate_cfg;
    evaluate_cfg.attach(evaluate);
    std::string e_data, e_subset, e_out, e_checkpoint;
    add_common_data_options(evaluate, e_data, e_subset, e_out);
    evaluate->add_option("--checkpoint", e_checkpoint, "checkpoint file")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) {
            ExperimentConfig cfg = validate_cfg.build();
            if (!v_data.empty()) cfg.data_dir = v_data;
            if (!v_subset.empty()) cfg.subset = v_subset;
            if (!v_out.empty()) cfg.out_dir = v_out;
            return cmd_validate(cfg, std::cout) ? 0 : 1;
        }
        if (synth->parsed()) {
            rulkit::SynthSpec spec = s_preset == "target"
                                         ? rulkit::SynthSpec::target()
                                         : rulkit::SynthSpec::source();
            if (s_seed != 0) spec.seed = s_seed;
            rulkit::cmd_synth(spec, s_out, std::cout);
            return 0;
        }
        if (train->parsed()) {
            ExperimentConfig cfg = train_cfg.build();
            if (!t_data.empty()) cfg.data_dir = t_data;
            if (!t_subset.empty()) cfg.subset = t_subset;
            if (!t_out.empty()) cfg.out_dir = t_out;
            rulkit::cmd_train(cfg, std::cout);
            return 0;
        }
        if (finetune->parsed()) {
            ExperimentConfig cfg = finetune_cfg.build();
            if (!f_data.empty()) cfg.data_dir = f_data;
            if (!f_subset.empty()) cfg.subset = f_subset;
            if (!f_out.empty()) cfg.out_dir = f_out;
            if (!f_source.empty()) cfg.source_checkpoint = f_source;
            if (f_frozen >= 0) cfg.n_frozen = std::size_t(f_frozen);
            if (!f_fractions.empty())
                rulkit::apply_config_kv(cfg, "fractions", f_fractions);
            rulkit::cmd_finetune(cfg, std::cout);
            return 0;
        }
        if (evaluate->parsed()) {
            ExperimentConfig cfg = evaluate_cfg.build();
            if (!e_data.empty()) cfg.data_dir = e_data;
            if (!e_subset.empty()) cfg.subset = e_subset;
            if (!e_out.empty()) cfg.out_dir = e_out;
            rulkit::cmd_evaluate(cfg, e_checkpoint, std::cout);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
