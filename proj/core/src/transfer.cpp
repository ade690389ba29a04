#include "rulkit/transfer.hpp"

#include <cmath>

#include "rulkit/errors.hpp"

namespace rulkit {

FreezeMask build_freeze_mask(const ModelConfig& cfg, std::size_t n_frozen,
                             bool pool_trainable) {
    if (n_frozen > cfg.n_layers)
        throw ConfigError("n_frozen exceeds the layer count");
    FreezeMask mask;
    for (const auto& spec : parameter_shapes(cfg)) {
        bool frozen = false;
        if (spec.name.starts_with("embed.") || spec.name.starts_with("pos.")) {
            frozen = true;
        } else if (spec.name.starts_with("layers.")) {
            const std::size_t dot = spec.name.find('.', 7);
            const std::size_t layer = std::stoul(spec.name.substr(7, dot - 7));
            frozen = layer < n_frozen;
        } else if (spec.name == "pool.w") {
            frozen = !pool_trainable;
        }
        // head.* stays trainable
        mask.set(spec.name, frozen);
    }
    return mask;
}

std::size_t expected_trainable_tensors(const ModelConfig& cfg,
                                       std::size_t n_frozen,
                                       bool pool_trainable) {
    if (n_frozen > cfg.n_layers)
        throw ConfigError("n_frozen exceeds the layer count");
    constexpr std::size_t tensors_per_layer = 16;  // 8 attn + 4 ffn + 4 norm
    constexpr std::size_t head_tensors = 6;
    return (cfg.n_layers - n_frozen) * tensors_per_layer + head_tensors +
           (pool_trainable ? 1 : 0);
}

TrajectorySet select_fraction(const TrajectorySet& set, double p) {
    if (!(p > 0.0) || p > 1.0)
        throw ConfigError("fraction p must lie in (0, 1]");
    const auto keep = static_cast<std::size_t>(
        std::ceil(p * double(set.unit_count())));
    TrajectorySet out;
    out.subset_name = set.subset_name;
    out.trajectories.assign(set.trajectories.begin(),
                            set.trajectories.begin() + std::min(keep, set.unit_count()));
    return out;
}

} // namespace rulkit
