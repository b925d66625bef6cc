#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csd/data/window.hpp"

namespace csd::data {

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

enum class SplitMode {
    Random,      // shuffle all windows
    Stratified,  // allocate each class separately
    Grouped,     // whole source traces go to one split
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

struct DatasetSplit {
    std::vector<TimeSeriesWindow> train, val, test;
};

// Disjoint, exhaustive partition of window indices. Each split's indices are
// returned in ascending order. Throws ConfigError for negative fractions and
// ContractViolation when fractions do not sum to 1 (within 1e-9).
SplitIndices split_indices(std::span<const TimeSeriesWindow> windows, SplitFractions fractions, std::uint64_t seed,
                           SplitMode mode);

DatasetSplit split(std::span<const TimeSeriesWindow> windows, SplitFractions fractions, std::uint64_t seed,
                   SplitMode mode);

}  // namespace csd::data
