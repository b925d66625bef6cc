#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "csd/numerics/tape.hpp"

namespace csd::num {

// Scalar function recorded on a float64 tape; `x` is the differentiated leaf.
using ScalarFunction = std::function<VarD(TapeD& tape, const VarD& x)>;

struct FiniteDiffOptions {
    double step = 1e-3;
    // Check this many coordinates drawn without replacement (all when unset
    // or larger than the point).
    std::optional<std::size_t> coordinates;
    std::uint64_t seed = 0;
    // Denominator floor for the relative error; both derivatives below this
    // magnitude are compared absolutely.
    double scale_floor = 1e-8;
};

struct FiniteDiffReport {
    bool passed = false;
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coordinates_checked = 0;
};

// Compares reverse-mode gradients against central differences
// (f(x+h e_i) - f(x-h e_i)) / 2h. Throws NumericError if f is non-finite at
// any evaluated point.
FiniteDiffReport finite_diff_check(const ScalarFunction& f, const TensorD& point, double tolerance,
                                   const FiniteDiffOptions& options = {});

double relative_error(double analytic, double numeric, double floor = 1e-8);

}  // namespace csd::num
