#pragma once

#include <span>
#include <utility>
#include <vector>

#include "csd/data/trace.hpp"

namespace csd::data {

// Per-feature min-max statistics observed on the fitting split.
struct NormalizationStats {
    std::vector<float> min;
    std::vector<float> max;
    std::vector<bool> degenerate;  // constant on the fitting split

    std::size_t feature_count() const noexcept { return min.size(); }
    bool operator==(const NormalizationStats&) const = default;
};

NormalizationStats fit_stats(std::span<const SensorTrace> traces);

// Fits on `trace` and maps it into [0, 1]. Constant features map to 0.
std::pair<SensorTrace, NormalizationStats> fit_normalize(const SensorTrace& trace);

// Applies previously fitted stats; values outside the fitted range are clipped.
SensorTrace apply_normalize(const SensorTrace& trace, const NormalizationStats& stats);

// Inverse affine map (degenerate features come back as their constant).
SensorTrace denormalize(const SensorTrace& trace, const NormalizationStats& stats);

}  // namespace csd::data
