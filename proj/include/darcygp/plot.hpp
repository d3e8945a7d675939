#pragma once

#include <optional>
#include <ostream>
#include <span>

#include "darcygp/calibration.hpp"
#include "darcygp/confidence.hpp"

namespace darcygp::plot {

/// Confidence against extraction rate, with an optional target line.
void curve_svg(std::ostream& out, std::span<const confidence::ConfidenceResult> curve,
               std::optional<double> target = std::nullopt);

/// Rate on the horizontal axis, threshold on the vertical, grey level = confidence.
void heatmap_svg(std::ostream& out, const confidence::Heatmap& heatmap);

/// log2 level norms against log2 s and log2 d with the fitted lines.
void calibration_svg(std::ostream& out, const calibration::CalibrationReport& report);

}  // namespace darcygp::plot
