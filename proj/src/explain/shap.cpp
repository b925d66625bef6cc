#include "csd/explain/shap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "csd/error.hpp"
#include "csd/numerics/rng.hpp"

namespace csd::xai {

using num::Shape;
using num::Tensor;

namespace {

constexpr std::uint64_t kBackgroundStream = 0xb6;
constexpr std::uint64_t kPermutationStream = 0x5a4b;
// Masked windows evaluated per forward call.
constexpr std::size_t kEvalChunk = 1024;

Tensor as_batch(const clf::Model& model, const Tensor& window)
{
    if (window.rank() != 2)
        throw ContractViolation("expected a [T, N] window, got " + num::shape_string(window.shape()));
    Tensor batch = window.reshaped(Shape{1, window.dim(0), window.dim(1)});
    model.check_batch(batch);
    return batch;
}

// Writes `window` into slot `slot` of `out` with the columns whose bit in
// `mask` is clear replaced by the baseline column.
void fill_masked(Tensor& out, std::size_t slot, const Tensor& window, const Tensor& baseline, std::uint64_t mask)
{
    const std::size_t t = window.dim(0), n = window.dim(1);
    float* dst = out.vec().data() + slot * t * n;
    for (std::size_t s = 0; s < t; ++s)
        for (std::size_t f = 0; f < n; ++f)
            dst[s * n + f] = (mask >> f) & 1u ? window.at(s, f) : baseline.at(s, f);
}

// Logit `cls` for a list of coalitions, given as column masks.
std::vector<double> coalition_values(const clf::Model& model, const Tensor& window, const Tensor& baseline,
                                     int cls, const std::vector<std::uint64_t>& masks)
{
    const std::size_t t = window.dim(0), n = window.dim(1), c = model.n_classes();
    std::vector<double> values(masks.size());
    for (std::size_t start = 0; start < masks.size(); start += kEvalChunk) {
        const std::size_t count = std::min(kEvalChunk, masks.size() - start);
        Tensor batch(Shape{count, t, n});
        for (std::size_t i = 0; i < count; ++i) fill_masked(batch, i, window, baseline, masks[start + i]);
        const Tensor z = clf::logits(model, batch);
        for (std::size_t i = 0; i < count; ++i) values[start + i] = z[i * c + static_cast<std::size_t>(cls)];
    }
    return values;
}

AttributionVector exact_shapley(const clf::Model& model, const Tensor& window, const Tensor& baseline, int cls)
{
    const std::size_t n = window.dim(1);
    const std::uint64_t subsets = std::uint64_t{1} << n;
    std::vector<std::uint64_t> masks(subsets);
    std::iota(masks.begin(), masks.end(), std::uint64_t{0});
    const std::vector<double> v = coalition_values(model, window, baseline, cls, masks);

    // weight[s] = s! (n - s - 1)! / n!
    std::vector<double> weight(n);
    for (std::size_t s = 0; s < n; ++s) {
        double w = 1.0 / static_cast<double>(n);
        for (std::size_t k = 1; k <= s; ++k) w *= static_cast<double>(k) / static_cast<double>(n - k);
        weight[s] = w;
    }

    AttributionVector out;
    out.values.assign(n, 0.0);
    out.standard_error.assign(n, 0.0);
    out.explained_class = cls;
    out.exact = true;
    for (std::uint64_t mask = 0; mask < subsets; ++mask) {
        const auto size = static_cast<std::size_t>(std::popcount(mask));
        for (std::size_t i = 0; i < n; ++i) {
            if ((mask >> i) & 1u) continue;
            out.values[i] += weight[size] * (v[mask | (std::uint64_t{1} << i)] - v[mask]);
        }
    }
    return out;
}

AttributionVector sampled_shapley(const clf::Model& model, const Tensor& window, const Tensor& baseline, int cls,
                                  std::size_t n_perm, std::uint64_t seed)
{
    const std::size_t n = window.dim(1);
    auto rng = num::SeededRng::derive(seed, kPermutationStream);

    std::vector<double> mean(n, 0.0), m2(n, 0.0);
    std::vector<std::size_t> order(n);
    // One stream drawn in order, so chunk size does not affect the result.
    const std::size_t perms_per_chunk = std::max<std::size_t>(1, kEvalChunk / (n + 1));
    std::size_t done = 0;
    while (done < n_perm) {
        const std::size_t count = std::min(perms_per_chunk, n_perm - done);
        std::vector<std::vector<std::size_t>> orders(count);
        std::vector<std::uint64_t> masks;
        masks.reserve(count * (n + 1));
        for (auto& o : orders) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            rng.shuffle(order);
            o = order;
            std::uint64_t mask = 0;
            masks.push_back(mask);
            for (std::size_t f : o) {
                mask |= std::uint64_t{1} << f;
                masks.push_back(mask);
            }
        }
        const std::vector<double> v = coalition_values(model, window, baseline, cls, masks);
        for (std::size_t p = 0; p < count; ++p) {
            const double* vp = v.data() + p * (n + 1);
            const double k = static_cast<double>(done + p + 1);
            for (std::size_t step = 0; step < n; ++step) {
                const std::size_t f = orders[p][step];
                const double delta = vp[step + 1] - vp[step];
                const double d = delta - mean[f];
                mean[f] += d / k;
                m2[f] += d * (delta - mean[f]);
            }
        }
        done += count;
    }

    AttributionVector out;
    out.values = mean;
    out.standard_error.assign(n, 0.0);
    if (n_perm > 1)
        for (std::size_t f = 0; f < n; ++f)
            out.standard_error[f] =
                std::sqrt(m2[f] / static_cast<double>(n_perm - 1)) / std::sqrt(static_cast<double>(n_perm));
    out.explained_class = cls;
    out.permutations = n_perm;
    out.exact = false;
    return out;
}

}  // namespace

BackgroundSet make_background(const clf::Model& model, const Tensor& benign, std::size_t k, std::uint64_t seed)
{
    if (k == 0) throw ConfigError("background size must be at least 1");
    model.check_batch(benign);
    const std::size_t pool = benign.dim(0);
    if (pool == 0) throw ContractViolation("background pool is empty");

    std::vector<std::size_t> idx(pool);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto rng = num::SeededRng::derive(seed, kBackgroundStream);
    rng.shuffle(idx);
    idx.resize(std::min(k, pool));

    const std::size_t t = benign.dim(1), n = benign.dim(2), per = t * n;
    BackgroundSet bg;
    bg.windows = Tensor(Shape{idx.size(), t, n});
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(benign.vec().begin() + static_cast<long>(idx[i] * per), per,
                    bg.windows.vec().begin() + static_cast<long>(i * per));

    std::vector<double> mean(per, 0.0);
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t e = 0; e < per; ++e) mean[e] += bg.windows[i * per + e];
    bg.mean_window = Tensor(Shape{t, n});
    for (std::size_t e = 0; e < per; ++e) bg.mean_window[e] = static_cast<float>(mean[e] / static_cast<double>(idx.size()));

    if (model.has_dense_head()) {
        const Tensor h = model.penultimate(bg.windows);
        const std::size_t p = h.dim(1);
        std::vector<double> acc(p, 0.0);
        for (std::size_t i = 0; i < h.dim(0); ++i)
            for (std::size_t j = 0; j < p; ++j) acc[j] += h.at(i, j);
        bg.mean_penultimate.resize(p);
        for (std::size_t j = 0; j < p; ++j)
            bg.mean_penultimate[j] = static_cast<float>(acc[j] / static_cast<double>(h.dim(0)));
    }
    return bg;
}

std::string to_string(SignatureMode m)
{
    return m == SignatureMode::AllClasses ? "all-classes" : "predicted-class";
}

SignatureMode parse_signature_mode(const std::string& s)
{
    if (s == "all-classes") return SignatureMode::AllClasses;
    if (s == "predicted-class") return SignatureMode::PredictedClass;
    throw ConfigError("unknown signature mode '" + s + "' (expected all-classes or predicted-class)");
}

std::string signature_fingerprint(const clf::Model& model, SignatureMode mode)
{
    return model.fingerprint() + "/penultimate-shap-" + to_string(mode);
}

std::vector<XaiSignature> signatures(const clf::Model& model, const Tensor& batch, const BackgroundSet& background,
                                     SignatureMode mode)
{
    if (!model.has_dense_head()) throw ArchitectureError("signatures need a model with a dense final layer");
    model.check_batch(batch);
    const Tensor& w = model.head_weight();  // [P, C]
    const std::size_t p = w.dim(0), c = w.dim(1);
    if (background.mean_penultimate.size() != p)
        throw ArchitectureError("background was built for a different architecture (penultimate width " +
                                std::to_string(background.mean_penultimate.size()) + " vs " + std::to_string(p) +
                                ")");

    const Tensor h = model.penultimate(batch);
    std::vector<int> predicted;
    if (mode == SignatureMode::PredictedClass) predicted = clf::predict_labels(model, batch);

    const std::string fp = signature_fingerprint(model, mode);
    std::vector<XaiSignature> out(batch.dim(0));
    for (std::size_t b = 0; b < out.size(); ++b) {
        auto& sig = out[b];
        sig.model_fingerprint = fp;
        auto phi = [&](std::size_t cls, std::size_t j) {
            return static_cast<float>(static_cast<double>(w.at(j, cls)) *
                                      (static_cast<double>(h.at(b, j)) - background.mean_penultimate[j]));
        };
        if (mode == SignatureMode::AllClasses) {
            sig.values.resize(p * c);
            for (std::size_t cls = 0; cls < c; ++cls)
                for (std::size_t j = 0; j < p; ++j) sig.values[cls * p + j] = phi(cls, j);
        } else {
            sig.values.resize(p);
            for (std::size_t j = 0; j < p; ++j) sig.values[j] = phi(static_cast<std::size_t>(predicted[b]), j);
        }
    }
    return out;
}

XaiSignature signature(const clf::Model& model, const Tensor& window, const BackgroundSet& background,
                       SignatureMode mode)
{
    return signatures(model, as_batch(model, window), background, mode).front();
}

AttributionVector shap_input_sampled(const clf::Model& model, const Tensor& window, const BackgroundSet& background,
                                     int cls, std::size_t n_perm, std::uint64_t seed, ShapMode mode)
{
    if (n_perm < 1) throw ConfigError("input attributions need at least one permutation");
    as_batch(model, window);
    if (cls < 0 || static_cast<std::size_t>(cls) >= model.n_classes())
        throw ContractViolation("class " + std::to_string(cls) + " out of range");
    if (background.mean_window.shape() != window.shape())
        throw ContractViolation("background windows do not match the window shape");

    const std::size_t n = window.dim(1);
    if (n > 63) throw ContractViolation("at most 63 feature columns are supported");
    const bool exact = mode == ShapMode::Exact || (mode == ShapMode::Auto && n <= kExactPlayerLimit);
    if (exact && n > 20) throw ContractViolation("exact enumeration over " + std::to_string(n) + " features is infeasible");
    return exact ? exact_shapley(model, window, background.mean_window, cls)
                 : sampled_shapley(model, window, background.mean_window, cls, n_perm, seed);
}

namespace {

std::vector<FeatureImportance> rank(const std::vector<double>& sums, std::size_t count)
{
    std::vector<FeatureImportance> out(sums.size());
    for (std::size_t f = 0; f < sums.size(); ++f) out[f] = {f, sums[f] / static_cast<double>(count)};
    std::stable_sort(out.begin(), out.end(),
                     [](const FeatureImportance& a, const FeatureImportance& b) { return a.mean_abs > b.mean_abs; });
    return out;
}

}  // namespace

std::vector<FeatureImportance> global_importance(const std::vector<std::vector<double>>& attributions)
{
    if (attributions.empty()) throw ContractViolation("global importance needs at least one attribution");
    const std::size_t n = attributions.front().size();
    std::vector<double> sums(n, 0.0);
    for (std::size_t i = 0; i < attributions.size(); ++i) {
        if (attributions[i].size() != n)
            throw ContractViolation("attribution " + std::to_string(i) + " has " +
                                    std::to_string(attributions[i].size()) + " features, expected " +
                                    std::to_string(n));
        for (std::size_t f = 0; f < n; ++f) sums[f] += std::abs(attributions[i][f]);
    }
    return rank(sums, attributions.size());
}

std::vector<FeatureImportance> global_importance(const std::vector<AttributionVector>& attributions)
{
    std::vector<std::vector<double>> values;
    values.reserve(attributions.size());
    for (const auto& a : attributions) values.push_back(a.values);
    return global_importance(values);
}

}  // namespace csd::xai
