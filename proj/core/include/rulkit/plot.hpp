#pragma once

#include <filesystem>
#include <span>

#include "rulkit/train.hpp"

namespace rulkit {

/// Loss-per-epoch curve as a standalone SVG image.
void write_loss_curve_svg(const LossHistory& history,
                          const std::filesystem::path& path);

/// Predicted-vs-true RUL scatter (cycles) with the identity diagonal.
void write_scatter_svg(std::span<const double> truths,
                       std::span<const double> preds,
                       const std::filesystem::path& path);

} // namespace rulkit
