#include "csd/data/split.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "csd/error.hpp"
#include "csd/numerics/rng.hpp"

namespace csd::data {

namespace {

void check(const SplitFractions& f)
{
    if (f.train < 0.0 || f.val < 0.0 || f.test < 0.0) throw ConfigError("split: fractions must be non-negative");
    if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) throw ContractViolation("split: fractions must sum to 1");
}

// Deals the first round(train*n) indices to train, the next round(val*n) to
// val, the remainder to test.
void deal(const std::vector<std::size_t>& shuffled, const SplitFractions& f, SplitIndices& out)
{
    const std::size_t n = shuffled.size();
    const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n))));
    const auto n_val =
        std::min(n - n_train, static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n))));
    for (std::size_t i = 0; i < n; ++i) {
        auto& dst = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
        dst.push_back(shuffled[i]);
    }
}

}  // namespace

SplitIndices split_indices(std::span<const TimeSeriesWindow> windows, SplitFractions fractions, std::uint64_t seed,
                           SplitMode mode)
{
    check(fractions);
    num::SeededRng rng(seed);
    SplitIndices out;
    switch (mode) {
    case SplitMode::Random: {
        std::vector<std::size_t> idx(windows.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        rng.shuffle(idx);
        deal(idx, fractions, out);
        break;
    }
    case SplitMode::Stratified: {
        std::array<std::vector<std::size_t>, kNumClasses> by_class;
        for (std::size_t i = 0; i < windows.size(); ++i)
            by_class[static_cast<std::size_t>(index_of(windows[i].label))].push_back(i);
        for (auto& cls : by_class) {
            rng.shuffle(cls);
            deal(cls, fractions, out);
        }
        break;
    }
    case SplitMode::Grouped: {
        std::map<std::string, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < windows.size(); ++i) groups[windows[i].source].push_back(i);
        std::vector<const std::vector<std::size_t>*> order;
        for (const auto& [name, members] : groups) order.push_back(&members);
        rng.shuffle(order);
        // Fill train, then val, then test by cumulative window count.
        const double n = static_cast<double>(windows.size());
        const double train_target = fractions.train * n;
        const double val_target = (fractions.train + fractions.val) * n;
        double assigned = 0.0;
        for (const auto* members : order) {
            const double mid = assigned + 0.5 * static_cast<double>(members->size());
            auto& dst = mid <= train_target ? out.train : (mid <= val_target ? out.val : out.test);
            dst.insert(dst.end(), members->begin(), members->end());
            assigned += static_cast<double>(members->size());
        }
        break;
    }
    }
    for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
    return out;
}

DatasetSplit split(std::span<const TimeSeriesWindow> windows, SplitFractions fractions, std::uint64_t seed,
                   SplitMode mode)
{
    const auto idx = split_indices(windows, fractions, seed, mode);
    DatasetSplit out;
    for (std::size_t i : idx.train) out.train.push_back(windows[i]);
    for (std::size_t i : idx.val) out.val.push_back(windows[i]);
    for (std::size_t i : idx.test) out.test.push_back(windows[i]);
    return out;
}

}  // namespace csd::data
