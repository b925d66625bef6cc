#include "csd/detector/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "csd/error.hpp"
#include "csd/version.hpp"
#include "csd/io/container.hpp"
#include "csd/io/hash.hpp"
#include "csd/numerics/adam.hpp"
#include "csd/numerics/ops.hpp"
#include "csd/numerics/rng.hpp"

namespace csd::detect {

using num::Shape;
using num::Tensor;

std::string to_string(Kind k)
{
    switch (k) {
    case Kind::RF: return "rf";
    case Kind::GBT: return "gbt";
    case Kind::FFNN: return "ffnn";
    }
    return "?";
}

Kind parse_kind(const std::string& s)
{
    std::string lower;
    for (char ch : s) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (lower == "rf" || lower == "random-forest") return Kind::RF;
    if (lower == "gbt" || lower == "xgb" || lower == "gradient-boosting") return Kind::GBT;
    if (lower == "ffnn" || lower == "mlp") return Kind::FFNN;
    throw ConfigError("unknown detector kind '" + s + "' (expected rf, gbt or ffnn)");
}

void DetectorSpec::validate() const
{
    if (n_trees < 1) throw ConfigError("random forest needs at least one tree");
    if (n_estimators < 1) throw ConfigError("gradient boosting needs at least one estimator");
    if (!(gbt_learning_rate > 0.0)) throw ConfigError("gradient boosting learning rate must be positive");
    if (gbt_max_depth < 1) throw ConfigError("gradient boosting depth must be at least 1");
    if (!(l2_leaf >= 0.0)) throw ConfigError("l2_leaf must be non-negative");
    if (!(min_child_weight >= 0.0)) throw ConfigError("min_child_weight must be non-negative");
    if (hidden.empty() || std::find(hidden.begin(), hidden.end(), 0u) != hidden.end())
        throw ConfigError("network hidden widths must be positive");
    if (!(ffnn_learning_rate > 0.0)) throw ConfigError("network learning rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
}

nlohmann::json to_json(const DetectorSpec& s)
{
    return {
        {"kind", to_string(s.kind)},
        {"n_trees", s.n_trees},
        {"rf_max_depth", s.rf_max_depth},
        {"max_features", s.max_features},
        {"bootstrap", s.bootstrap},
        {"n_estimators", s.n_estimators},
        {"gbt_learning_rate", s.gbt_learning_rate},
        {"gbt_max_depth", s.gbt_max_depth},
        {"l2_leaf", s.l2_leaf},
        {"min_child_weight", s.min_child_weight},
        {"hidden", s.hidden},
        {"ffnn_learning_rate", s.ffnn_learning_rate},
        {"epochs", s.epochs},
        {"batch_size", s.batch_size},
        {"threshold", s.threshold},
        {"seed", s.seed},
    };
}

std::string DetectorSpec::hash() const
{
    return io::to_hex(io::fnv1a(to_json(*this).dump()));
}

DetectorSpec detector_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) throw ConfigError("detector spec must be a JSON object");
    const nlohmann::json defaults = to_json(DetectorSpec{});
    for (const auto& [key, value] : j.items())
        if (!defaults.contains(key)) throw ConfigError("unknown detector key '" + key + "'");
    nlohmann::json merged = defaults;
    merged.update(j);
    try {
        DetectorSpec s;
        s.kind = parse_kind(merged.at("kind").get<std::string>());
        s.n_trees = merged.at("n_trees").get<std::size_t>();
        s.rf_max_depth = merged.at("rf_max_depth").get<std::size_t>();
        s.max_features = merged.at("max_features").get<std::size_t>();
        s.bootstrap = merged.at("bootstrap").get<bool>();
        s.n_estimators = merged.at("n_estimators").get<std::size_t>();
        s.gbt_learning_rate = merged.at("gbt_learning_rate").get<double>();
        s.gbt_max_depth = merged.at("gbt_max_depth").get<std::size_t>();
        s.l2_leaf = merged.at("l2_leaf").get<double>();
        s.min_child_weight = merged.at("min_child_weight").get<double>();
        s.hidden = merged.at("hidden").get<std::vector<std::size_t>>();
        s.ffnn_learning_rate = merged.at("ffnn_learning_rate").get<double>();
        s.epochs = merged.at("epochs").get<std::size_t>();
        s.batch_size = merged.at("batch_size").get<std::size_t>();
        s.threshold = merged.at("threshold").get<double>();
        s.seed = merged.at("seed").get<std::uint64_t>();
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed detector spec: ") + e.what());
    }
}

std::size_t Tree::depth() const
{
    if (feature.empty()) return 0;
    std::size_t deepest = 0;
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [node, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        if (feature[static_cast<std::size_t>(node)] >= 0) {
            stack.emplace_back(left[static_cast<std::size_t>(node)], d + 1);
            stack.emplace_back(right[static_cast<std::size_t>(node)], d + 1);
        }
    }
    return deepest;
}

double Tree::evaluate(std::span<const float> x) const
{
    std::size_t node = 0;
    while (feature[node] >= 0)
        node = static_cast<std::size_t>(x[static_cast<std::size_t>(feature[node])] <= threshold[node] ? left[node]
                                                                                                        : right[node]);
    return value[node];
}

namespace {

constexpr std::uint64_t kNetworkInitStream = 0xff;
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kTreeStreamBase = 0x7ee0000;

// Threshold strictly separating two adjacent distinct values lo < hi.
float split_point(float lo, float hi)
{
    const auto mid = static_cast<float>(0.5 * (static_cast<double>(lo) + static_cast<double>(hi)));
    return mid >= lo && mid < hi ? mid : lo;
}

struct Split {
    int feature = -1;
    float threshold = 0.0f;
    double gain = 0.0;
};

// Node statistics for one split criterion.
//   Gini:   a = weighted count of class 1, b = total weight.
//   Newton: a = gradient sum, b = hessian sum.
struct Stats {
    double a = 0.0, b = 0.0;
};

class TreeBuilder {
public:
    enum class Criterion { Gini, Newton };

    TreeBuilder(const Tensor& x, Criterion criterion, std::size_t max_depth, double l2, double min_child)
        : x_(x), d_(x.dim(1)), criterion_(criterion), max_depth_(max_depth), l2_(l2), min_child_(min_child)
    {
    }

    // `rows` may repeat (bootstrap); a[i], b[i] are the per-row statistics.
    // `features_per_split` == d tries every feature in index order.
    Tree build(std::vector<std::size_t> rows, const std::vector<double>& a, const std::vector<double>& b,
               std::size_t features_per_split, num::SeededRng* rng)
    {
        a_ = &a;
        b_ = &b;
        tree_ = Tree{};
        grow(rows, 0, features_per_split, rng);
        return std::move(tree_);
    }

private:
    Stats total(const std::vector<std::size_t>& rows) const
    {
        Stats s;
        for (std::size_t r : rows) {
            s.a += (*a_)[r];
            s.b += (*b_)[r];
        }
        return s;
    }

    double leaf_value(const Stats& s) const
    {
        if (criterion_ == Criterion::Gini) return s.b > 0.0 ? s.a / s.b : 0.0;
        return -s.a / (s.b + l2_);
    }

    // Criterion-specific score; the split gain is score(L) + score(R) - score(parent).
    double score(const Stats& s) const
    {
        if (criterion_ == Criterion::Gini) return s.b > 0.0 ? (s.a * s.a + (s.b - s.a) * (s.b - s.a)) / s.b : 0.0;
        return s.a * s.a / (s.b + l2_);
    }

    bool child_ok(const Stats& s) const
    {
        return criterion_ == Criterion::Gini ? s.b > 0.0 : s.b >= min_child_;
    }

    bool pure(const Stats& s) const
    {
        return criterion_ == Criterion::Gini && (s.a <= 0.0 || s.a >= s.b);
    }

    Split best_split(const std::vector<std::size_t>& rows, const Stats& parent, std::size_t features_per_split,
                     num::SeededRng* rng)
    {
        std::vector<std::size_t> order(d_);
        std::iota(order.begin(), order.end(), std::size_t{0});
        if (rng && features_per_split < d_) rng->shuffle(order);

        const double parent_score = score(parent);
        Split best;
        std::vector<std::pair<float, std::size_t>> col(rows.size());
        std::size_t tried = 0;
        for (std::size_t f : order) {
            if (tried >= features_per_split) break;
            for (std::size_t i = 0; i < rows.size(); ++i) col[i] = {x_.at(rows[i], f), rows[i]};
            std::sort(col.begin(), col.end());
            if (col.front().first == col.back().first) continue;  // constant here; does not count as tried
            ++tried;
            Stats left;
            for (std::size_t i = 0; i + 1 < col.size(); ++i) {
                left.a += (*a_)[col[i].second];
                left.b += (*b_)[col[i].second];
                if (col[i].first == col[i + 1].first) continue;
                const Stats right{parent.a - left.a, parent.b - left.b};
                if (!child_ok(left) || !child_ok(right)) continue;
                const double gain = score(left) + score(right) - parent_score;
                if (gain > best.gain + 1e-12) {
                    best.feature = static_cast<int>(f);
                    best.threshold = split_point(col[i].first, col[i + 1].first);
                    best.gain = gain;
                }
            }
        }
        return best;
    }

    int add_node()
    {
        tree_.feature.push_back(-1);
        tree_.threshold.push_back(0.0f);
        tree_.left.push_back(-1);
        tree_.right.push_back(-1);
        tree_.value.push_back(0.0);
        return static_cast<int>(tree_.feature.size() - 1);
    }

    int grow(const std::vector<std::size_t>& rows, std::size_t depth, std::size_t features_per_split,
             num::SeededRng* rng)
    {
        const int node = add_node();
        const Stats s = total(rows);
        tree_.value[static_cast<std::size_t>(node)] = leaf_value(s);
        if ((max_depth_ > 0 && depth >= max_depth_) || rows.size() < 2 || pure(s)) return node;

        const Split split = best_split(rows, s, features_per_split, rng);
        if (split.feature < 0) return node;

        std::vector<std::size_t> lrows, rrows;
        for (std::size_t r : rows)
            (x_.at(r, static_cast<std::size_t>(split.feature)) <= split.threshold ? lrows : rrows).push_back(r);
        const auto n = static_cast<std::size_t>(node);
        tree_.feature[n] = split.feature;
        tree_.threshold[n] = split.threshold;
        const int l = grow(lrows, depth + 1, features_per_split, rng);
        tree_.left[n] = l;
        const int r = grow(rrows, depth + 1, features_per_split, rng);
        tree_.right[n] = r;
        return node;
    }

    const Tensor& x_;
    std::size_t d_;
    Criterion criterion_;
    std::size_t max_depth_;
    double l2_, min_child_;
    const std::vector<double>* a_ = nullptr;
    const std::vector<double>* b_ = nullptr;
    Tree tree_;
};

double sigmoid(double z)
{
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

std::string data_hash(const Tensor& x, const std::vector<int>& y)
{
    std::uint64_t h = io::fnv1a(std::span(reinterpret_cast<const unsigned char*>(x.vec().data()),
                                          x.vec().size() * sizeof(float)));
    for (int label : y) h = io::fnv1a(std::string_view(label ? "1" : "0"), h);
    return io::to_hex(h);
}

std::vector<Tree> fit_forest(const Tensor& x, const std::vector<int>& y, const DetectorSpec& spec)
{
    const std::size_t n = x.dim(0), d = x.dim(1);
    const std::size_t per_split =
        spec.max_features > 0 ? spec.max_features
                              : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
    if (per_split > d)
        throw ConfigError("max_features " + std::to_string(per_split) + " exceeds signature dimension " +
                          std::to_string(d));
    std::vector<double> ones(n, 1.0), positives(n);
    for (std::size_t i = 0; i < n; ++i) positives[i] = y[i];

    std::vector<Tree> trees(spec.n_trees);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t t = 0; t < spec.n_trees; ++t) {
        auto rng = num::SeededRng::derive(spec.seed, kTreeStreamBase + t);
        std::vector<std::size_t> rows(n);
        if (spec.bootstrap)
            for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
        else
            std::iota(rows.begin(), rows.end(), std::size_t{0});
        TreeBuilder builder(x, TreeBuilder::Criterion::Gini, spec.rf_max_depth, 0.0, 0.0);
        trees[t] = builder.build(std::move(rows), positives, ones, per_split, &rng);
    }
    return trees;
}

std::vector<Tree> fit_boosting(const Tensor& x, const std::vector<int>& y, const DetectorSpec& spec, double& base)
{
    const std::size_t n = x.dim(0), d = x.dim(1);
    const double prior = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    base = std::log(prior / (1.0 - prior));

    std::vector<double> margin(n, base), g(n), h(n);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    TreeBuilder builder(x, TreeBuilder::Criterion::Newton, spec.gbt_max_depth, spec.l2_leaf, spec.min_child_weight);

    std::vector<Tree> trees;
    for (std::size_t round = 0; round < spec.n_estimators; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(margin[i]);
            g[i] = p - y[i];
            h[i] = p * (1.0 - p);
        }
        Tree tree = builder.build(all, g, h, d, nullptr);
        for (std::size_t i = 0; i < n; ++i)
            margin[i] += spec.gbt_learning_rate * tree.evaluate(x.data().subspan(i * d, d));
        trees.push_back(std::move(tree));
    }
    return trees;
}

// Network logits [B] for a standardized [B, d] batch.
num::Var network(const num::Var& x, const std::vector<num::Var>& w)
{
    num::Var h = x;
    const std::size_t layers = w.size() / 2;
    for (std::size_t l = 0; l < layers; ++l) {
        h = num::add_bias(num::matmul(h, w[2 * l]), w[2 * l + 1]);
        if (l + 1 < layers) h = num::relu(h);
    }
    return num::reshape(h, {h.shape()[0]});
}

Tensor standardize(const Tensor& x, const std::vector<float>& mean, const std::vector<float>& scale)
{
    Tensor out = x;
    const std::size_t d = mean.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mean[i % d]) / scale[i % d];
    return out;
}

void fit_network(const Tensor& x, const std::vector<int>& y, const DetectorSpec& spec, std::vector<Tensor>& weights,
                 std::vector<float>& mean, std::vector<float>& scale)
{
    const std::size_t n = x.dim(0), d = x.dim(1);
    mean.assign(d, 0.0f);
    scale.assign(d, 1.0f);
    for (std::size_t f = 0; f < d; ++f) {
        double m = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += x.at(i, f);
        m /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) sq += (x.at(i, f) - m) * (x.at(i, f) - m);
        const double sd = std::sqrt(sq / static_cast<double>(n));
        mean[f] = static_cast<float>(m);
        scale[f] = sd > 1e-12 ? static_cast<float>(sd) : 1.0f;
    }
    const Tensor xs = standardize(x, mean, scale);

    auto init = num::SeededRng::derive(spec.seed, kNetworkInitStream);
    weights.clear();
    std::size_t in = d;
    std::vector<std::size_t> widths = spec.hidden;
    widths.push_back(1);
    for (std::size_t l = 0; l < widths.size(); ++l) {
        const bool head = l + 1 == widths.size();
        const double limit = head ? 1.0 / std::sqrt(static_cast<double>(in)) : std::sqrt(6.0 / static_cast<double>(in));
        Tensor w(Shape{in, widths[l]});
        for (auto& v : w.vec()) v = static_cast<float>(init.uniform(-limit, limit));
        weights.push_back(std::move(w));
        weights.emplace_back(Shape{widths[l]});
        in = widths[l];
    }

    num::AdamState adam(num::AdamConfig{spec.ffnn_learning_rate});
    auto order_rng = num::SeededRng::derive(spec.seed, kShuffleStream);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 1; epoch <= spec.epochs; ++epoch) {
        order_rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += spec.batch_size) {
            const std::size_t b = std::min(spec.batch_size, n - start);
            Tensor xb(Shape{b, d});
            std::vector<float> yb(b);
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t src = order[start + i];
                std::copy_n(xs.vec().begin() + static_cast<long>(src * d), d, xb.vec().begin() + static_cast<long>(i * d));
                yb[i] = static_cast<float>(y[src]);
            }
            num::Tape tape;
            std::vector<num::Var> leaves;
            for (const auto& w : weights) leaves.push_back(tape.leaf(w));
            const auto loss = num::bce_with_logits(network(tape.constant(std::move(xb)), leaves), yb);
            if (!std::isfinite(loss.value().item()))
                throw DivergenceError("detector network loss became non-finite at epoch " + std::to_string(epoch),
                                      static_cast<int>(epoch));
            const auto grads = tape.backward(loss);
            std::vector<Tensor> g;
            for (const auto& leaf : leaves) g.push_back(grads[leaf]);
            num::adam_step(weights, g, adam);
        }
    }
}

}  // namespace

bool flag(double score, double threshold)
{
    return score > threshold;
}

AttackDetector train_detector(const Tensor& x, const std::vector<int>& y, const DetectorSpec& spec,
                              const std::string& signature_fingerprint)
{
    spec.validate();
    if (x.rank() != 2 || x.dim(0) == 0 || x.dim(1) == 0)
        throw ContractViolation("detector training needs a nonempty [n, d] signature matrix, got " +
                                num::shape_string(x.shape()));
    if (y.size() != x.dim(0))
        throw ContractViolation(std::to_string(y.size()) + " labels for " + std::to_string(x.dim(0)) + " signatures");
    std::size_t positives = 0;
    for (int label : y) {
        if (label != 0 && label != 1) throw ContractViolation("detector labels must be 0 or 1");
        positives += static_cast<std::size_t>(label);
    }
    if (positives == 0 || positives == y.size())
        throw DegenerateTrainingError("detector training set contains only label " + std::to_string(y.front()));
    if (!x.all_finite()) throw NumericError("signature matrix contains non-finite values");

    AttackDetector d;
    d.spec_ = spec;
    d.dimension_ = x.dim(1);
    d.signature_fingerprint_ = signature_fingerprint;
    d.data_hash_ = data_hash(x, y);
    switch (spec.kind) {
    case Kind::RF: d.trees_ = fit_forest(x, y, spec); break;
    case Kind::GBT: d.trees_ = fit_boosting(x, y, spec, d.base_score_); break;
    case Kind::FFNN: fit_network(x, y, spec, d.weights_, d.feature_mean_, d.feature_scale_); break;
    }
    return d;
}

std::string AttackDetector::fingerprint() const
{
    return to_string(spec_.kind) + "-" +
           io::to_hex(io::fnv1a(spec_.hash() + "|" + data_hash_ + "|" + signature_fingerprint_));
}

std::vector<double> AttackDetector::scores(const Tensor& signatures) const
{
    if (signatures.rank() != 2 || signatures.dim(1) != dimension_)
        throw ContractViolation("expected [n, " + std::to_string(dimension_) + "] signatures, got " +
                                num::shape_string(signatures.shape()));
    const std::size_t n = signatures.dim(0);
    std::vector<double> out(n);
    switch (spec_.kind) {
    case Kind::RF:
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = signatures.data().subspan(i * dimension_, dimension_);
            std::size_t votes = 0;
            for (const auto& t : trees_) votes += t.evaluate(row) > 0.5;
            out[i] = static_cast<double>(votes) / static_cast<double>(trees_.size());
        }
        break;
    case Kind::GBT:
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = signatures.data().subspan(i * dimension_, dimension_);
            double sum = 0.0;
            for (const auto& t : trees_) sum += t.evaluate(row);
            out[i] = sigmoid(base_score_ + spec_.gbt_learning_rate * sum);
        }
        break;
    case Kind::FFNN: {
        if (n == 0) break;
        num::Tape tape;
        std::vector<num::Var> w;
        for (const auto& t : weights_) w.push_back(tape.constant(t));
        const auto z = network(tape.constant(standardize(signatures, feature_mean_, feature_scale_)), w);
        for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid(z.value()[i]);
        break;
    }
    }
    return out;
}

double AttackDetector::score(std::span<const float> signature) const
{
    if (signature.size() != dimension_)
        throw ContractViolation("signature has " + std::to_string(signature.size()) + " values, detector expects " +
                                std::to_string(dimension_));
    return scores(Tensor(Shape{1, dimension_}, std::vector<float>(signature.begin(), signature.end()))).front();
}

DetectionVerdict AttackDetector::detect(std::span<const float> signature, const std::string& id) const
{
    const double s = score(signature);
    return {flag(s, spec_.threshold), s, id};
}

DetectionMetrics binary_metrics(const std::vector<int>& labels, const std::vector<int>& predicted)
{
    if (labels.size() != predicted.size()) throw ContractViolation("label and prediction counts differ");
    DetectionMetrics m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if ((labels[i] != 0 && labels[i] != 1) || (predicted[i] != 0 && predicted[i] != 1))
            throw ContractViolation("binary metrics need labels in {0, 1}");
        ++m.confusion[labels[i]][predicted[i]];
    }
    m.total = labels.size();
    if (m.total == 0) return m;
    m.accuracy = static_cast<double>(m.confusion[0][0] + m.confusion[1][1]) / static_cast<double>(m.total);
    auto f1 = [&](int c) {
        const double tp = static_cast<double>(m.confusion[c][c]);
        const double fp = static_cast<double>(m.confusion[1 - c][c]);
        const double fn = static_cast<double>(m.confusion[c][1 - c]);
        return tp > 0.0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
    };
    m.f1_normal = f1(0);
    m.f1_attack = f1(1);
    const double tp = static_cast<double>(m.confusion[1][1]);
    const double flagged = tp + static_cast<double>(m.confusion[0][1]);
    const double actual = tp + static_cast<double>(m.confusion[1][0]);
    m.precision_attack = flagged > 0.0 ? tp / flagged : 0.0;
    m.recall_attack = actual > 0.0 ? tp / actual : 0.0;
    return m;
}

DetectionMetrics evaluate_detector(const AttackDetector& d, const Tensor& x, const std::vector<int>& y)
{
    if (x.rank() != 2 || x.dim(0) == 0) throw ContractViolation("detector evaluation needs a nonempty set");
    if (y.size() != x.dim(0)) throw ContractViolation("label count does not match signature count");
    const auto s = d.scores(x);
    std::vector<int> predicted(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) predicted[i] = flag(s[i], d.spec().threshold);
    return binary_metrics(y, predicted);
}

std::vector<SweepPoint> threshold_sweep(const std::vector<double>& scores, const std::vector<int>& labels)
{
    if (scores.size() != labels.size()) throw ContractViolation("score and label counts differ");
    if (scores.empty()) throw ContractViolation("threshold sweep needs at least one score");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    const auto n = static_cast<double>(scores.size());
    const auto attacks = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    // Walking up the sorted scores, everything at or below tau is called normal.
    std::size_t normal_below = 0, attack_below = 0, i = 0;
    std::vector<SweepPoint> out;
    auto emit = [&](double tau) {
        const std::size_t correct = normal_below + (attacks - attack_below);
        out.push_back({tau, static_cast<double>(correct) / n});
    };
    if (scores[idx.front()] > 0.0) emit(0.0);
    while (i < idx.size()) {
        const double tau = scores[idx[i]];
        while (i < idx.size() && scores[idx[i]] == tau) {
            (labels[idx[i]] == 1 ? attack_below : normal_below) += 1;
            ++i;
        }
        emit(tau);
    }
    return out;
}

namespace {

nlohmann::json tree_to_json(const Tree& t)
{
    return {{"feature", t.feature}, {"threshold", t.threshold}, {"left", t.left}, {"right", t.right}, {"value", t.value}};
}

Tree tree_from_json(const nlohmann::json& j, std::size_t dimension)
{
    Tree t;
    t.feature = j.at("feature").get<std::vector<int>>();
    t.threshold = j.at("threshold").get<std::vector<float>>();
    t.left = j.at("left").get<std::vector<int>>();
    t.right = j.at("right").get<std::vector<int>>();
    t.value = j.at("value").get<std::vector<double>>();
    const std::size_t n = t.feature.size();
    if (n == 0 || t.threshold.size() != n || t.left.size() != n || t.right.size() != n || t.value.size() != n)
        throw SchemaError("tree node arrays are empty or of unequal length");
    for (std::size_t i = 0; i < n; ++i) {
        if (t.feature[i] < 0) continue;
        const auto in_range = [&](int child) { return child > static_cast<int>(i) && child < static_cast<int>(n); };
        if (static_cast<std::size_t>(t.feature[i]) >= dimension || !in_range(t.left[i]) || !in_range(t.right[i]))
            throw SchemaError("tree node " + std::to_string(i) + " is malformed");
    }
    return t;
}

}  // namespace

void save(const AttackDetector& d, std::ostream& out)
{
    io::Container c;
    c.descriptor = {
        {"spec", to_json(d.spec_)},
        {"dimension", d.dimension_},
        {"signature_fingerprint", d.signature_fingerprint_},
        {"data_hash", d.data_hash_},
        {"config_hash", d.config_hash},
        {"tool_version", kToolVersion},
        {"fingerprint", d.fingerprint()},
        {"base_score", d.base_score_},
        {"feature_mean", d.feature_mean_},
        {"feature_scale", d.feature_scale_},
    };
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : d.trees_) trees.push_back(tree_to_json(t));
    c.descriptor["trees"] = std::move(trees);
    c.blocks = d.weights_;
    io::write_container(out, kDetectorMagic, kDetectorFormatVersion, c);
}

void save(const AttackDetector& d, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write detector file " + path.string());
    save(d, out);
    if (!out) throw IoError("failed writing detector file " + path.string());
}

AttackDetector load(std::istream& in)
{
    const io::Container c = io::read_container(in, kDetectorMagic, kDetectorFormatVersion);
    try {
        const auto& j = c.descriptor;
        AttackDetector d;
        d.spec_ = detector_from_json(j.at("spec"));
        d.dimension_ = j.at("dimension").get<std::size_t>();
        d.signature_fingerprint_ = j.at("signature_fingerprint").get<std::string>();
        d.data_hash_ = j.at("data_hash").get<std::string>();
        d.config_hash = j.value("config_hash", std::string());
        d.base_score_ = j.at("base_score").get<double>();
        d.feature_mean_ = j.at("feature_mean").get<std::vector<float>>();
        d.feature_scale_ = j.at("feature_scale").get<std::vector<float>>();
        for (const auto& t : j.at("trees")) d.trees_.push_back(tree_from_json(t, d.dimension_));
        d.weights_ = c.blocks;

        const bool trees_expected = d.spec_.kind != Kind::FFNN;
        if (trees_expected && d.trees_.empty()) throw SchemaError("tree detector file has no trees");
        if (!trees_expected) {
            if (d.weights_.size() != 2 * (d.spec_.hidden.size() + 1) || d.feature_mean_.size() != d.dimension_ ||
                d.feature_scale_.size() != d.dimension_ || d.weights_.front().dim(0) != d.dimension_)
                throw SchemaError("network detector parameters do not match its spec");
        }
        if (d.fingerprint() != j.at("fingerprint").get<std::string>())
            throw SchemaError("detector fingerprint does not match its contents");
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed detector descriptor: ") + e.what());
    } catch (const ConfigError& e) {
        throw SchemaError(std::string("detector file has an invalid spec: ") + e.what());
    }
}

AttackDetector load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open detector file " + path.string());
    return load(in);
}

}  // namespace csd::detect
