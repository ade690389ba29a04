#include "rulkit/experiment.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>

#include "rulkit/errors.hpp"

namespace rulkit {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& value) {
    double v = 0;
    const char* end = value.data() + value.size();
    auto [p, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc{} || p != end)
        throw ConfigError(key + ": expected a number, got '" + value + "'");
    return v;
}

std::size_t to_size(const std::string& key, const std::string& value) {
    const double v = to_double(key, value);
    if (v < 0 || v != std::floor(v))
        throw ConfigError(key + ": expected a non-negative integer");
    return std::size_t(v);
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on")
        return true;
    if (value == "false" || value == "0" || value == "no" || value == "off")
        return false;
    throw ConfigError(key + ": expected a boolean, got '" + value + "'");
}

std::vector<double> to_fractions(const std::string& key,
                                 const std::string& value) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= value.size()) {
        const auto comma = value.find(',', start);
        const std::string part =
            trim(value.substr(start, comma == std::string::npos
                                         ? std::string::npos
                                         : comma - start));
        if (!part.empty()) out.push_back(to_double(key, part));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw ConfigError(key + ": no fractions given");
    return out;
}

} // namespace

void ExperimentConfig::validate() const {
    model.validate();
    pipeline.validate();
    train.validate();
    if (model.window_len != pipeline.window_len)
        throw ConfigError("model and pipeline window_len disagree");
    if (model.n_channels != kNumSensors)
        throw ConfigError("n_channels must be " + std::to_string(kNumSensors) +
                          " for the trajectory pipeline");
    if (n_frozen > model.n_layers)
        throw ConfigError("n_frozen exceeds n_layers");
    for (double p : fractions)
        if (!(p > 0.0) || p > 1.0)
            throw ConfigError("fractions must lie in (0, 1]");
    if (dump_format != "text" && dump_format != "binary")
        throw ConfigError("dump_format must be 'text' or 'binary'");
}

std::filesystem::path ExperimentConfig::resolved_data_dir() const {
    if (!data_dir.empty()) return data_dir;
    if (const char* env = std::getenv("RULKIT_DATA_DIR"); env && *env)
        return env;
    return "data";
}

std::filesystem::path ExperimentConfig::train_file() const {
    return resolved_data_dir() / ("train_" + subset + ".txt");
}

std::filesystem::path ExperimentConfig::test_file() const {
    return resolved_data_dir() / ("test_" + subset + ".txt");
}

std::filesystem::path ExperimentConfig::truth_file() const {
    return resolved_data_dir() / ("RUL_" + subset + ".txt");
}

void apply_config_kv(ExperimentConfig& cfg, const std::string& key,
                     const std::string& value) {
    if (key == "dtype") {
        if (value == "f32")
            cfg.model.dtype = Dtype::f32;
        else if (value == "f64")
            cfg.model.dtype = Dtype::f64;
        else
            throw ConfigError("dtype must be f32 or f64");
    } else if (key == "d_model") {
        cfg.model.d_model = to_size(key, value);
    } else if (key == "n_layers") {
        cfg.model.n_layers = to_size(key, value);
    } else if (key == "n_heads") {
        cfg.model.n_heads = to_size(key, value);
    } else if (key == "d_ff") {
        cfg.model.d_ff = to_size(key, value);
    } else if (key == "window_len") {
        cfg.model.window_len = to_size(key, value);
        cfg.pipeline.window_len = cfg.model.window_len;
    } else if (key == "head_hidden1") {
        cfg.model.head_hidden1 = to_size(key, value);
    } else if (key == "head_hidden2") {
        cfg.model.head_hidden2 = to_size(key, value);
    } else if (key == "activation") {
        if (value == "relu")
            cfg.model.activation = Activation::relu;
        else if (value == "gelu")
            cfg.model.activation = Activation::gelu;
        else
            throw ConfigError("activation must be relu or gelu");
    } else if (key == "causal") {
        cfg.model.causal = to_bool(key, value);
    } else if (key == "norm_placement") {
        if (value == "post")
            cfg.model.norm_placement = NormPlacement::post;
        else if (value == "pre")
            cfg.model.norm_placement = NormPlacement::pre;
        else
            throw ConfigError("norm_placement must be post or pre");
    } else if (key == "rul_cap") {
        cfg.pipeline.rul_cap = std::uint32_t(to_size(key, value));
    } else if (key == "alpha") {
        cfg.pipeline.alpha = to_double(key, value);
    } else if (key == "stride") {
        cfg.pipeline.stride = to_size(key, value);
    } else if (key == "expected_conditions") {
        cfg.pipeline.expected_conditions = to_size(key, value);
    } else if (key == "eta") {
        cfg.train.eta = to_double(key, value);
    } else if (key == "lambda") {
        cfg.train.lambda = to_double(key, value);
    } else if (key == "batch_size") {
        cfg.train.batch_size = to_size(key, value);
    } else if (key == "min_epochs") {
        cfg.train.min_epochs = to_size(key, value);
    } else if (key == "patience") {
        cfg.train.patience = to_size(key, value);
    } else if (key == "seed") {
        cfg.train.seed = std::uint64_t(to_size(key, value));
    } else if (key == "max_epochs") {
        cfg.train.max_epochs = to_size(key, value);
    } else if (key == "data_dir") {
        cfg.data_dir = value;
    } else if (key == "subset") {
        cfg.subset = value;
    } else if (key == "out_dir") {
        cfg.out_dir = value;
    } else if (key == "source_checkpoint") {
        cfg.source_checkpoint = value;
    } else if (key == "init_checkpoint") {
        cfg.init_checkpoint = value;
    } else if (key == "n_frozen") {
        cfg.n_frozen = to_size(key, value);
    } else if (key == "fractions") {
        cfg.fractions = to_fractions(key, value);
    } else if (key == "emit_plots") {
        cfg.emit_plots = to_bool(key, value);
    } else if (key == "dump_windows") {
        cfg.dump_windows = value;
    } else if (key == "dump_format") {
        cfg.dump_format = value;
    } else {
        throw ConfigError("unknown config key: " + key);
    }
}

void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string text = trim(line);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                              ": expected 'key = value'");
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        try {
            apply_config_kv(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                              ": " + e.what());
        }
    }
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

} // namespace rulkit
