#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "csd/data/trace.hpp"
#include "csd/numerics/tensor.hpp"

namespace csd::data {

inline constexpr std::size_t kFullTimestep = 90;

// A [timestep, features] slice of a trace labelled by its final frame.
struct TimeSeriesWindow {
    num::Tensor values;  // [T, N]
    Severity label = Severity::None;
    std::string source;  // trace id
    std::size_t end_frame = 0;

    std::size_t timestep() const { return values.dim(0); }
    std::size_t feature_count() const { return values.dim(1); }
    // Identifier unique within a corpus: "<source>:<end_frame>".
    std::string id() const { return source + ":" + std::to_string(end_frame); }
};

// Windows ending at frames timestep-1, timestep-1+stride, ...
// Throws InsufficientDataError when the trace is shorter than one window.
std::vector<TimeSeriesWindow> window(const SensorTrace& trace, std::size_t timestep = kFullTimestep,
                                     std::size_t stride = 1);

// Single window ending at `end_frame` (inclusive).
TimeSeriesWindow window_at(const SensorTrace& trace, std::size_t timestep, std::size_t end_frame);

// Stack windows into a [B, T, N] batch.
num::Tensor stack(std::span<const TimeSeriesWindow> windows);
num::Tensor stack(std::span<const TimeSeriesWindow> windows, std::span<const std::size_t> indices);
std::vector<int> labels_of(std::span<const TimeSeriesWindow> windows);

// Window container CSV: one row per (window, step) with columns
// window,source,end_frame,label,step,<features...>.
void write_windows(std::ostream& out, std::span<const TimeSeriesWindow> windows,
                   const std::vector<std::string>& feature_names, const std::string& header_comment = {});
std::vector<TimeSeriesWindow> read_windows(std::istream& in, std::vector<std::string>* feature_names = nullptr);

}  // namespace csd::data
