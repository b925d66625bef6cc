#include "csd/data/synth.hpp"

#include <cmath>
#include <numbers>

#include "csd/error.hpp"
#include "csd/numerics/rng.hpp"

namespace csd::data {

std::vector<double> default_feature_scale(std::size_t n_features)
{
    std::vector<double> scale(n_features);
    for (std::size_t i = 0; i < n_features; ++i) scale[i] = 1.0 + 0.5 * static_cast<double>(i);
    return scale;
}

std::vector<std::vector<double>> default_class_means(std::size_t n_features)
{
    static constexpr double rising[kNumClasses] = {0.0, 0.25, 0.5, 0.75};
    static constexpr double falling[kNumClasses] = {0.6, 0.4, 0.2, 0.0};
    static constexpr double bumpy[kNumClasses] = {0.1, 0.5, 0.3, 0.7};
    const auto scale = default_feature_scale(n_features);
    std::vector<std::vector<double>> mu(kNumClasses, std::vector<double>(n_features));
    for (std::size_t c = 0; c < kNumClasses; ++c)
        for (std::size_t i = 0; i < n_features; ++i) {
            const double* pattern = i % 3 == 0 ? rising : (i % 3 == 1 ? falling : bumpy);
            mu[c][i] = 2.0 * static_cast<double>(i) + scale[i] * pattern[c];
        }
    return mu;
}

namespace {

struct Resolved {
    std::vector<std::vector<double>> mu;
    std::vector<double> scale;
};

Resolved resolve(const SynthConfig& cfg)
{
    Resolved r;
    r.mu = cfg.class_means.empty() ? default_class_means(cfg.n_features) : cfg.class_means;
    r.scale = cfg.feature_scale.empty() ? std::vector<double>(cfg.n_features, 1.0) : cfg.feature_scale;
    if (cfg.class_means.empty() && cfg.feature_scale.empty()) r.scale = default_feature_scale(cfg.n_features);
    return r;
}

}  // namespace

void validate(const SynthConfig& cfg)
{
    if (cfg.n_features == 0) throw ConfigError("synth: n_features must be positive");
    if (cfg.segments.empty() && (cfg.frames_per_segment == 0 || cfg.cycles == 0))
        throw ConfigError("synth: empty trace requested");
    for (const auto& [level, frames] : cfg.segments)
        if (frames == 0) throw ConfigError("synth: every segment needs at least one frame");
    if (!(cfg.sample_rate > 0.0)) throw ConfigError("synth: sample_rate must be positive");
    if (!(cfg.rho >= 0.0 && cfg.rho < 1.0)) throw ConfigError("synth: rho must lie in [0, 1)");
    if (cfg.noise_scale < 0.0) throw ConfigError("synth: noise_scale must be non-negative");
    if (cfg.oscillating_feature >= static_cast<int>(cfg.n_features))
        throw ConfigError("synth: oscillating_feature out of range");
    const auto r = resolve(cfg);
    if (r.mu.size() != kNumClasses) throw ConfigError("synth: class_means needs one row per class");
    for (const auto& row : r.mu)
        if (row.size() != cfg.n_features) throw ConfigError("synth: class_means row has wrong width");
    if (r.scale.size() != cfg.n_features) throw ConfigError("synth: feature_scale has wrong width");
    for (std::size_t a = 0; a < kNumClasses; ++a)
        for (std::size_t b = a + 1; b < kNumClasses; ++b) {
            std::size_t distinct = 0;
            for (std::size_t i = 0; i < cfg.n_features; ++i)
                if (std::abs(r.mu[a][i] - r.mu[b][i]) > 1e-9) ++distinct;
            if (distinct < 2)
                throw ConfigError("synth: classes " + std::string(to_string(severity_from_index(static_cast<int>(a)))) +
                                  " and " + std::string(to_string(severity_from_index(static_cast<int>(b)))) +
                                  " differ on fewer than two features");
        }
}

SensorTrace synth_generate(const SynthConfig& cfg)
{
    validate(cfg);
    const auto r = resolve(cfg);
    const std::size_t n = cfg.n_features;
    std::vector<Severity> schedule;
    if (cfg.segments.empty()) {
        for (std::size_t t = 0; t < cfg.frames_per_segment * kNumClasses * cfg.cycles; ++t)
            schedule.push_back(severity_from_index(static_cast<int>((t / cfg.frames_per_segment) % kNumClasses)));
    } else {
        for (const auto& [level, frames] : cfg.segments) schedule.insert(schedule.end(), frames, level);
    }
    const std::size_t total = schedule.size();

    SensorTrace trace;
    trace.id = cfg.trace_id;
    trace.sample_rate = cfg.sample_rate;
    for (std::size_t i = 0; i < n; ++i) trace.feature_names.push_back("f" + std::to_string(i + 1));
    trace.frames.resize(total * n);
    trace.labels.resize(total);
    trace.timestamps.resize(total);

    num::SeededRng rng(cfg.seed);
    // AR state excludes the sinusoid so the oscillation does not feed back.
    std::vector<double> state(r.mu[0]);
    for (std::size_t t = 0; t < total; ++t) {
        const auto c = static_cast<std::size_t>(index_of(schedule[t]));
        trace.labels[t] = schedule[t];
        trace.timestamps[t] = static_cast<double>(t) / cfg.sample_rate;
        for (std::size_t i = 0; i < n; ++i) {
            const double noise = rng.normal();
            state[i] = r.mu[c][i] + cfg.rho * (state[i] - r.mu[c][i]) + cfg.noise_scale * r.scale[i] * noise;
            double v = state[i];
            if (static_cast<int>(i) == cfg.oscillating_feature)
                v += cfg.oscillation_amplitude * r.scale[i] *
                     std::sin(2.0 * std::numbers::pi * cfg.oscillation_hz[c] * trace.timestamps[t]);
            trace.frames[t * n + i] = static_cast<float>(v);
        }
    }
    return trace;
}

}  // namespace csd::data
