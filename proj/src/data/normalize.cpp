#include "csd/data/normalize.hpp"

#include <algorithm>
#include <limits>

#include "csd/error.hpp"

namespace csd::data {

NormalizationStats fit_stats(std::span<const SensorTrace> traces)
{
    if (traces.empty() || traces.front().frame_count() == 0)
        throw ContractViolation("fit_normalize: empty trace");
    const std::size_t n = traces.front().feature_count();
    NormalizationStats stats;
    stats.min.assign(n, std::numeric_limits<float>::infinity());
    stats.max.assign(n, -std::numeric_limits<float>::infinity());
    for (const auto& tr : traces) {
        if (tr.feature_count() != n) throw ContractViolation("fit_normalize: traces disagree on feature count");
        for (std::size_t t = 0; t < tr.frame_count(); ++t)
            for (std::size_t i = 0; i < n; ++i) {
                stats.min[i] = std::min(stats.min[i], tr.value(t, i));
                stats.max[i] = std::max(stats.max[i], tr.value(t, i));
            }
    }
    stats.degenerate.resize(n);
    for (std::size_t i = 0; i < n; ++i) stats.degenerate[i] = !(stats.max[i] > stats.min[i]);
    return stats;
}

std::pair<SensorTrace, NormalizationStats> fit_normalize(const SensorTrace& trace)
{
    auto stats = fit_stats(std::span<const SensorTrace>(&trace, 1));
    return {apply_normalize(trace, stats), stats};
}

SensorTrace apply_normalize(const SensorTrace& trace, const NormalizationStats& stats)
{
    if (trace.frame_count() == 0) throw ContractViolation("apply_normalize: empty trace");
    if (trace.feature_count() != stats.feature_count())
        throw ContractViolation("apply_normalize: trace has " + std::to_string(trace.feature_count()) +
                                " features, stats have " + std::to_string(stats.feature_count()));
    SensorTrace out = trace;
    const std::size_t n = trace.feature_count();
    for (std::size_t t = 0; t < trace.frame_count(); ++t)
        for (std::size_t i = 0; i < n; ++i) {
            float& v = out.value(t, i);
            if (stats.degenerate[i]) {
                v = 0.0f;
                continue;
            }
            const double range = static_cast<double>(stats.max[i]) - stats.min[i];
            const double z = (static_cast<double>(v) - stats.min[i]) / range;
            v = static_cast<float>(std::clamp(z, 0.0, 1.0));
        }
    return out;
}

SensorTrace denormalize(const SensorTrace& trace, const NormalizationStats& stats)
{
    SensorTrace out = trace;
    const std::size_t n = trace.feature_count();
    for (std::size_t t = 0; t < trace.frame_count(); ++t)
        for (std::size_t i = 0; i < n; ++i) {
            float& v = out.value(t, i);
            const double range = static_cast<double>(stats.max[i]) - stats.min[i];
            v = stats.degenerate[i] ? stats.min[i] : static_cast<float>(stats.min[i] + static_cast<double>(v) * range);
        }
    return out;
}

}  // namespace csd::data
