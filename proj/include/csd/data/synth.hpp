#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "csd/data/trace.hpp"

namespace csd::data {

// Deterministic stand-in for recorded eye/head-tracking sessions. Segments
// cycle none -> low -> medium -> high; within a segment of class c feature i
// follows the AR(1) process
//     x_t = mu[c][i] + rho * (x_{t-1} - mu[c][i]) + sigma_i * eta_t
// with eta_t standard normal and sigma_i = noise_scale * feature_scale[i].
// One designated feature additionally carries a sinusoid whose frequency
// depends on the class.
struct SynthConfig {
    std::size_t n_features = 6;
    std::size_t frames_per_segment = 200;
    std::size_t cycles = 4;  // passes through all four classes
    // Explicit (class, frames) episodes; when non-empty they replace the cycle above.
    std::vector<std::pair<Severity, std::size_t>> segments;
    double sample_rate = 10.0;
    // class_means[c][i] in raw sensor units; empty -> default_class_means(n_features)
    std::vector<std::vector<double>> class_means;
    std::vector<double> feature_scale;  // empty -> all 1
    double rho = 0.8;
    double noise_scale = 0.06;
    int oscillating_feature = 0;  // -1 disables the sinusoid
    double oscillation_amplitude = 0.05;
    std::array<double, kNumClasses> oscillation_hz{0.2, 0.4, 0.6, 0.8};
    std::uint64_t seed = 1;
    std::string trace_id = "synth";
};

// Heterogeneous default means: feature i has its own offset/scale and one of
// three class patterns (rising, falling, non-monotone).
std::vector<std::vector<double>> default_class_means(std::size_t n_features);
std::vector<double> default_feature_scale(std::size_t n_features);

// Throws ConfigError for degenerate configurations (any pair of classes whose
// means differ on fewer than two features, rho outside [0,1), ...).
void validate(const SynthConfig& config);

SensorTrace synth_generate(const SynthConfig& config);

}  // namespace csd::data
