#include "csd/numerics/finite_diff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csd/numerics/rng.hpp"

namespace csd::num {

double relative_error(double analytic, double numeric, double floor)
{
    const double diff = std::abs(analytic - numeric);
    if (diff == 0.0) return 0.0;
    return diff / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace {

double evaluate(const ScalarFunction& f, const TensorD& x)
{
    TapeD tape;
    auto leaf = tape.constant(x);
    const double v = f(tape, leaf).value().item();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: function returned a non-finite value");
    return v;
}

}  // namespace

FiniteDiffReport finite_diff_check(const ScalarFunction& f, const TensorD& point, double tolerance,
                                   const FiniteDiffOptions& options)
{
    if (options.step <= 0.0) throw ContractViolation("finite_diff_check: step must be positive");
    TapeD tape;
    auto x = tape.leaf(point);
    auto y = f(tape, x);
    if (!std::isfinite(y.value().item()))
        throw NumericError("finite_diff_check: function returned a non-finite value");
    const auto grads = tape.backward(y);
    const TensorD analytic = grads[x];

    std::vector<std::size_t> coords(point.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.coordinates && *options.coordinates < coords.size()) {
        SeededRng rng(options.seed);
        rng.shuffle(coords);
        coords.resize(*options.coordinates);
        std::sort(coords.begin(), coords.end());
    }

    FiniteDiffReport report;
    report.coordinates_checked = coords.size();
    TensorD probe = point;
    for (std::size_t i : coords) {
        const double orig = probe[i];
        probe[i] = orig + options.step;
        const double up = evaluate(f, probe);
        probe[i] = orig - options.step;
        const double down = evaluate(f, probe);
        probe[i] = orig;
        const double numeric = (up - down) / (2.0 * options.step);
        const double err = relative_error(analytic[i], numeric, options.scale_floor);
        if (i == coords.front() || err > report.max_relative_error) {
            report.max_relative_error = err;
            report.worst_index = i;
            report.worst_analytic = analytic[i];
            report.worst_numeric = numeric;
        }
    }
    report.passed = report.max_relative_error <= tolerance;
    return report;
}

}  // namespace csd::num
