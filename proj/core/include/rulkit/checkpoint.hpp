#pragma once

#include <filesystem>
#include <string>

#include "rulkit/model.hpp"
#include "rulkit/param_store.hpp"
#include "rulkit/preprocess.hpp"

namespace rulkit {

/// Binary checkpoint layout (all integers little-endian):
///   magic "RULKCKPT" | u32 version | u32 dtype bits |
///   u64 config-blob length | config JSON (model + pipeline) |
///   u64 tensor count | per tensor: u64 name length, name bytes,
///   u64 rank, u64 dims..., raw element bytes in the declared dtype.
/// Tensors are written in name order, so save -> load -> save is
/// byte-identical.
inline constexpr char kCheckpointMagic[8] = {'R', 'U', 'L', 'K',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParameterStore<float>& params, const ModelConfig& model,
                     const PipelineConfig& pipeline,
                     const std::filesystem::path& path);
void save_checkpoint(const ParameterStore<double>& params,
                     const ModelConfig& model, const PipelineConfig& pipeline,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
    Dtype dtype = Dtype::f32;
    ModelConfig model;
    PipelineConfig pipeline;
    ParameterStore<float> f32;   // populated when dtype == f32
    ParameterStore<double> f64;  // populated when dtype == f64
};

/// Load and verify magic/version/framing.  Throws IoError for a missing or
/// truncated file and FormatError for bad magic or version.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// The store in the requested precision; throws ConfigError when the file
/// was written in the other dtype.
template <typename T>
const ParameterStore<T>& expect_params(const LoadedCheckpoint& ckpt);

template <>
inline const ParameterStore<float>& expect_params<float>(
    const LoadedCheckpoint& ckpt) {
    if (ckpt.dtype != Dtype::f32)
        throw ConfigError("checkpoint stores f64 tensors, f32 requested");
    return ckpt.f32;
}

template <>
inline const ParameterStore<double>& expect_params<double>(
    const LoadedCheckpoint& ckpt) {
    if (ckpt.dtype != Dtype::f64)
        throw ConfigError("checkpoint stores f32 tensors, f64 requested");
    return ckpt.f64;
}

/// Reject a checkpoint whose architecture differs from the expected one.
void require_model_config(const LoadedCheckpoint& ckpt,
                          const ModelConfig& expected);

} // namespace rulkit
