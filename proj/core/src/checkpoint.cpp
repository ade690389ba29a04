#include "rulkit/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "rulkit/errors.hpp"

namespace rulkit {

namespace {

using nlohmann::json;

void write_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw IoError("checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8))
        throw IoError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

template <typename T>
void write_values(std::ostream& out, std::span<const T> values) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    for (T v : values) {
        Bits bits;
        std::memcpy(&bits, &v, sizeof(T));
        if constexpr (sizeof(T) == 4)
            write_u32(out, bits);
        else
            write_u64(out, bits);
    }
}

template <typename T>
void read_values(std::istream& in, std::span<T> values) {
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    for (T& v : values) {
        Bits bits = sizeof(T) == 4 ? Bits(read_u32(in)) : Bits(read_u64(in));
        std::memcpy(&v, &bits, sizeof(T));
    }
}

json model_to_json(const ModelConfig& m) {
    return json{
        {"d_model", m.d_model},
        {"n_layers", m.n_layers},
        {"n_heads", m.n_heads},
        {"d_ff", m.d_ff},
        {"window_len", m.window_len},
        {"n_channels", m.n_channels},
        {"head_hidden1", m.head_hidden1},
        {"head_hidden2", m.head_hidden2},
        {"activation", m.activation == Activation::relu ? "relu" : "gelu"},
        {"causal", m.causal},
        {"norm_placement",
         m.norm_placement == NormPlacement::post ? "post" : "pre"},
        {"dtype", m.dtype == Dtype::f32 ? "f32" : "f64"},
        {"layer_norm_eps", m.layer_norm_eps},
    };
}

ModelConfig model_from_json(const json& j) {
    ModelConfig m;
    m.d_model = j.at("d_model").get<std::size_t>();
    m.n_layers = j.at("n_layers").get<std::size_t>();
    m.n_heads = j.at("n_heads").get<std::size_t>();
    m.d_ff = j.at("d_ff").get<std::size_t>();
    m.window_len = j.at("window_len").get<std::size_t>();
    m.n_channels = j.at("n_channels").get<std::size_t>();
    m.head_hidden1 = j.at("head_hidden1").get<std::size_t>();
    m.head_hidden2 = j.at("head_hidden2").get<std::size_t>();
    m.activation = j.at("activation").get<std::string>() == "gelu"
                       ? Activation::gelu
                       : Activation::relu;
    m.causal = j.at("causal").get<bool>();
    m.norm_placement = j.at("norm_placement").get<std::string>() == "pre"
                           ? NormPlacement::pre
                           : NormPlacement::post;
    m.dtype = j.at("dtype").get<std::string>() == "f64" ? Dtype::f64 : Dtype::f32;
    m.layer_norm_eps = j.at("layer_norm_eps").get<double>();
    return m;
}

json pipeline_to_json(const PipelineConfig& p) {
    return json{
        {"rul_cap", p.rul_cap},
        {"alpha", p.alpha},
        {"window_len", p.window_len},
        {"stride", p.stride},
        {"expected_conditions", p.expected_conditions},
    };
}

PipelineConfig pipeline_from_json(const json& j) {
    PipelineConfig p;
    p.rul_cap = j.at("rul_cap").get<std::uint32_t>();
    p.alpha = j.at("alpha").get<double>();
    p.window_len = j.at("window_len").get<std::size_t>();
    p.stride = j.at("stride").get<std::size_t>();
    p.expected_conditions = j.at("expected_conditions").get<std::size_t>();
    return p;
}

template <typename T>
void save_impl(const ParameterStore<T>& params, const ModelConfig& model,
               const PipelineConfig& pipeline,
               const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_u32(out, kCheckpointVersion);
    write_u32(out, std::uint32_t(dtype_bits(dtype_of<T>())));

    const std::string blob =
        json{{"model", model_to_json(model)},
             {"pipeline", pipeline_to_json(pipeline)}}
            .dump();
    write_u64(out, blob.size());
    out.write(blob.data(), std::streamsize(blob.size()));

    write_u64(out, params.tensor_count());
    for (const auto& [name, tensor] : params) {
        write_u64(out, name.size());
        out.write(name.data(), std::streamsize(name.size()));
        write_u64(out, tensor.rank());
        for (std::size_t d = 0; d < tensor.rank(); ++d)
            write_u64(out, tensor.dim(d));
        write_values<T>(out, tensor.data());
    }
    if (!out) throw IoError("write failed: " + path.string());
}

template <typename T>
ParameterStore<T> read_body(std::istream& in) {
    ParameterStore<T> params;
    const std::uint64_t count = read_u64(in);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint64_t name_len = read_u64(in);
        if (name_len > 4096) throw FormatError("checkpoint tensor name too long");
        std::string name(name_len, '\0');
        if (!in.read(name.data(), std::streamsize(name_len)))
            throw IoError("checkpoint truncated");
        const std::uint64_t rank = read_u64(in);
        if (rank > 8) throw FormatError("checkpoint tensor rank too large");
        std::vector<std::size_t> shape(rank);
        std::uint64_t total = 1;
        for (auto& d : shape) {
            d = std::size_t(read_u64(in));
            total *= d;
        }
        if (total > (std::uint64_t(1) << 33))
            throw FormatError("checkpoint tensor implausibly large");
        Tensor<T> t = Tensor<T>::zeros(shape);
        read_values<T>(in, t.data());
        params.insert(name, std::move(t));
    }
    return params;
}

} // namespace

void save_checkpoint(const ParameterStore<float>& params, const ModelConfig& model,
                     const PipelineConfig& pipeline,
                     const std::filesystem::path& path) {
    save_impl(params, model, pipeline, path);
}

void save_checkpoint(const ParameterStore<double>& params,
                     const ModelConfig& model, const PipelineConfig& pipeline,
                     const std::filesystem::path& path) {
    save_impl(params, model, pipeline, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    char magic[sizeof(kCheckpointMagic)];
    if (!in.read(magic, sizeof(magic)))
        throw IoError("checkpoint truncated: " + path.string());
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw FormatError("bad checkpoint magic: " + path.string());
    const std::uint32_t version = read_u32(in);
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " +
                          std::to_string(version));
    const std::uint32_t bits = read_u32(in);

    const std::uint64_t blob_len = read_u64(in);
    if (blob_len > (1u << 20)) throw FormatError("checkpoint config blob too large");
    std::string blob(blob_len, '\0');
    if (!in.read(blob.data(), std::streamsize(blob_len)))
        throw IoError("checkpoint truncated: " + path.string());

    LoadedCheckpoint ckpt;
    try {
        const json j = json::parse(blob);
        ckpt.model = model_from_json(j.at("model"));
        ckpt.pipeline = pipeline_from_json(j.at("pipeline"));
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint config blob invalid: ") +
                          e.what());
    }
    ckpt.dtype = dtype_from_bits(int(bits));
    if (ckpt.dtype == Dtype::f32)
        ckpt.f32 = read_body<float>(in);
    else
        ckpt.f64 = read_body<double>(in);

    // Trailing bytes mean the writer and reader disagree about the format.
    char extra;
    if (in.read(&extra, 1))
        throw FormatError("checkpoint has trailing bytes: " + path.string());
    return ckpt;
}

void require_model_config(const LoadedCheckpoint& ckpt,
                          const ModelConfig& expected) {
    if (!(ckpt.model == expected))
        throw ConfigError(
            "checkpoint model configuration does not match the requested one");
}

} // namespace rulkit
