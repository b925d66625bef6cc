#include "csd/attacks/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "csd/error.hpp"
#include "csd/io/hash.hpp"
#include "csd/numerics/adam.hpp"
#include "csd/numerics/ops.hpp"

namespace csd::attack {

using num::Shape;
using num::Tensor;

std::string to_string(Kind k)
{
    switch (k) {
    case Kind::FGSM: return "fgsm";
    case Kind::PGD: return "pgd";
    case Kind::CW: return "cw";
    }
    return "?";
}

Kind parse_kind(const std::string& s)
{
    std::string lower;
    for (char ch : s) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (lower == "fgsm") return Kind::FGSM;
    if (lower == "pgd") return Kind::PGD;
    if (lower == "cw" || lower == "c&w" || lower == "carlini-wagner") return Kind::CW;
    throw ConfigError("unknown attack kind '" + s + "' (expected fgsm, pgd or cw)");
}

void AttackConfig::validate() const
{
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
    if (kind == Kind::PGD && !(alpha > 0.0)) throw ConfigError("PGD step alpha must be positive");
    if (kind == Kind::CW) {
        if (cw_iterations < 1) throw ConfigError("C&W needs at least one inner iteration");
        if (binary_steps < 1) throw ConfigError("C&W needs at least one binary-search step");
        if (!(c >= 0.0)) throw ConfigError("C&W constant c must be non-negative");
        if (!(kappa >= 0.0)) throw ConfigError("C&W confidence kappa must be non-negative");
        if (!(cw_learning_rate > 0.0)) throw ConfigError("C&W learning rate must be positive");
    }
    if (!(clip_min < clip_max)) throw ConfigError("clip range must be non-empty");
    if (target && *target < 0) throw ConfigError("target class must be non-negative");
}

nlohmann::json to_json(const AttackConfig& c)
{
    nlohmann::json j{
        {"kind", to_string(c.kind)},
        {"epsilon", c.epsilon},
        {"alpha", c.alpha},
        {"iterations", c.iterations},
        {"random_start", c.random_start},
        {"kappa", c.kappa},
        {"c", c.c},
        {"binary_steps", c.binary_steps},
        {"cw_iterations", c.cw_iterations},
        {"cw_learning_rate", c.cw_learning_rate},
        {"clip_min", c.clip_min},
        {"clip_max", c.clip_max},
        {"seed", c.seed},
    };
    j["target"] = c.target ? nlohmann::json(*c.target) : nlohmann::json(nullptr);
    return j;
}

AttackConfig attack_from_json(const nlohmann::json& j)
{
    static const std::set<std::string> known{"kind",          "epsilon",          "alpha",    "iterations",
                                             "random_start",  "kappa",            "c",        "binary_steps",
                                             "cw_iterations", "cw_learning_rate", "clip_min", "clip_max",
                                             "seed",          "target"};
    if (!j.is_object()) throw ConfigError("attack config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("unknown attack key '" + key + "'");
    AttackConfig c;
    try {
        if (j.contains("kind")) c.kind = parse_kind(j["kind"].get<std::string>());
        c.epsilon = j.value("epsilon", c.epsilon);
        c.alpha = j.value("alpha", c.alpha);
        c.iterations = j.value("iterations", c.iterations);
        c.random_start = j.value("random_start", c.random_start);
        c.kappa = j.value("kappa", c.kappa);
        c.c = j.value("c", c.c);
        c.binary_steps = j.value("binary_steps", c.binary_steps);
        c.cw_iterations = j.value("cw_iterations", c.cw_iterations);
        c.cw_learning_rate = j.value("cw_learning_rate", c.cw_learning_rate);
        c.clip_min = j.value("clip_min", c.clip_min);
        c.clip_max = j.value("clip_max", c.clip_max);
        c.seed = j.value("seed", c.seed);
        if (j.contains("target") && !j["target"].is_null()) c.target = j["target"].get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("attack config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string AttackConfig::hash() const
{
    return io::to_hex(io::fnv1a(to_json(*this).dump()));
}

double pearson(std::span<const float> a, std::span<const float> b)
{
    if (a.size() != b.size() || a.empty()) throw ContractViolation("pearson needs equal, nonempty inputs");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) throw NumericError("PCC undefined: zero variance");
    return cov / std::sqrt(va * vb);
}

PerturbationStats perturbation_stats(const Tensor& original, const Tensor& adversarial)
{
    if (original.shape() != adversarial.shape())
        throw ContractViolation("perturbation_stats: shapes " + num::shape_string(original.shape()) + " and " +
                                num::shape_string(adversarial.shape()) + " differ");
    PerturbationStats s;
    double sq = 0.0;
    for (std::size_t i = 0; i < original.size(); ++i) {
        const double d = static_cast<double>(adversarial[i]) - original[i];
        s.linf = std::max(s.linf, std::abs(d));
        sq += d * d;
    }
    s.l2 = std::sqrt(sq);
    s.pcc = pearson(original.data(), adversarial.data());
    return s;
}

namespace {

constexpr std::size_t kChunk = 256;

struct Prepared {
    std::vector<int> classes;     // label the loss is computed against
    std::vector<bool> targeted;
};

Prepared prepare(const clf::Model& model, std::size_t b, const std::vector<int>& labels, const AttackConfig& cfg,
                 const std::vector<int>* targets)
{
    if (labels.size() != b) throw ContractViolation("one label per window is required");
    if (targets && targets->size() != b) throw ContractViolation("one target per window is required");
    Prepared p;
    p.classes.resize(b);
    p.targeted.assign(b, targets != nullptr || cfg.target.has_value());
    for (std::size_t i = 0; i < b; ++i) {
        const int cls = targets ? (*targets)[i] : (cfg.target ? *cfg.target : labels[i]);
        if (cls < 0 || static_cast<std::size_t>(cls) >= model.n_classes())
            throw ContractViolation("class " + std::to_string(cls) + " out of range");
        p.classes[i] = cls;
    }
    return p;
}

// Gradient of the summed cross-entropy against `classes` with respect to the input.
Tensor input_gradient(const clf::Model& model, const Tensor& x, const std::vector<int>& classes)
{
    num::Tape tape;
    auto xv = tape.leaf(x);
    auto loss = num::cross_entropy(model.logits(tape, xv), classes);
    return tape.backward(loss)[xv];
}

float clampf(double v, double lo, double hi)
{
    return static_cast<float>(std::min(hi, std::max(lo, v)));
}

bool window_all_zero(const Tensor& g, std::size_t b, std::size_t per)
{
    return std::all_of(g.vec().begin() + static_cast<long>(b * per), g.vec().begin() + static_cast<long>((b + 1) * per),
                       [](float v) { return v == 0.0f; });
}

double sign(float v)
{
    return v > 0.0f ? 1.0 : (v < 0.0f ? -1.0 : 0.0);
}

// FGSM and PGD share one loop: FGSM is a single step of size epsilon without
// projection beyond the clip range.
Tensor sign_attack(const clf::Model& model, const Tensor& x0, const Prepared& p, const AttackConfig& cfg,
                   std::vector<bool>& degenerate)
{
    const std::size_t b = x0.dim(0), per = x0.dim(1) * x0.dim(2);
    const bool fgsm = cfg.kind == Kind::FGSM;
    const std::size_t steps = fgsm ? 1 : cfg.iterations;
    const double step = fgsm ? cfg.epsilon : cfg.alpha;
    Tensor x = x0;
    degenerate.assign(b, true);
    if (!fgsm && cfg.random_start) {
        // Seeded by window content so the start does not depend on batching.
        for (std::size_t w = 0; w < b; ++w) {
            const auto bytes = std::span(reinterpret_cast<const unsigned char*>(x0.vec().data() + w * per),
                                         per * sizeof(float));
            auto rng = num::SeededRng::derive(cfg.seed, io::fnv1a(bytes));
            for (std::size_t k = w * per; k < (w + 1) * per; ++k)
                x[k] = clampf(x0[k] + rng.uniform(-cfg.epsilon, cfg.epsilon), cfg.clip_min, cfg.clip_max);
        }
    }
    for (std::size_t it = 0; it < steps; ++it) {
        const Tensor g = input_gradient(model, x, p.classes);
        for (std::size_t w = 0; w < b; ++w) {
            if (!window_all_zero(g, w, per)) degenerate[w] = false;
            const double dir = p.targeted[w] ? -1.0 : 1.0;
            for (std::size_t k = w * per; k < (w + 1) * per; ++k) {
                const double moved = x[k] + dir * step * sign(g[k]);
                const double lo = std::max(cfg.clip_min, static_cast<double>(x0[k]) - cfg.epsilon);
                const double hi = std::min(cfg.clip_max, static_cast<double>(x0[k]) + cfg.epsilon);
                x[k] = clampf(moved, lo, hi);
            }
        }
    }
    if (steps == 0) degenerate.assign(b, false);
    for (std::size_t w = 0; w < b; ++w)
        if (degenerate[w]) std::copy_n(x0.vec().begin() + static_cast<long>(w * per), per, x.vec().begin() + static_cast<long>(w * per));
    return x;
}

// Margin of the attack objective: positive once the example is adversarial.
double attack_margin(std::span<const float> z, int cls, bool targeted)
{
    double other = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < z.size(); ++i)
        if (static_cast<int>(i) != cls) other = std::max(other, static_cast<double>(z[i]));
    return targeted ? z[static_cast<std::size_t>(cls)] - other : other - z[static_cast<std::size_t>(cls)];
}

bool reached(int prediction, int cls, bool targeted)
{
    return targeted ? prediction == cls : prediction != cls;
}

Tensor carlini_wagner(const clf::Model& model, const Tensor& x0, const Prepared& p, const AttackConfig& cfg)
{
    const std::size_t b = x0.dim(0), per = x0.dim(1) * x0.dim(2), nc = model.n_classes();
    const double lo = cfg.clip_min, span = cfg.clip_max - cfg.clip_min;
    const double kUpperInit = 1e10;

    Tensor w0(x0.shape());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        const double unit = (static_cast<double>(x0[i]) - lo) / span;
        w0[i] = static_cast<float>(std::atanh(std::clamp(2.0 * unit - 1.0, -1.0, 1.0) * 0.999999));
    }

    std::vector<double> c(b, cfg.c), lower(b, 0.0), upper(b, kUpperInit), best_l2(b, std::numeric_limits<double>::infinity());
    Tensor best = x0, last = x0;
    std::vector<bool> have_best(b, false);
    const std::size_t check_every = std::max<std::size_t>(1, cfg.cw_iterations / 10);

    for (std::size_t bs = 0; bs < cfg.binary_steps; ++bs) {
        Tensor w = w0;
        num::AdamState adam(num::AdamConfig{cfg.cw_learning_rate});
        std::vector<bool> succeeded(b, false), frozen(b, false);
        std::vector<double> prev_loss(b, std::numeric_limits<double>::infinity());
        const Tensor cvec = [&] {
            Tensor t(Shape{b});
            for (std::size_t i = 0; i < b; ++i) t[i] = static_cast<float>(c[i]);
            return t;
        }();

        for (std::size_t it = 0; it < cfg.cw_iterations; ++it) {
            num::Tape tape;
            auto wv = tape.leaf(w);
            auto xadv = num::add_scalar(num::scale(num::add_scalar(num::tanh(wv), 1.0), span / 2.0), lo);
            auto diff = num::sub(xadv, tape.constant(x0));
            auto dist = num::row_sum(num::reshape(num::square(diff), {b, per}));
            auto z = model.logits(tape, xadv);
            auto g = num::margin_loss(z, p.classes, p.targeted, cfg.kappa);
            auto per_sample = num::add(dist, num::mul_const(g, cvec));
            auto total = num::sum(per_sample);
            if (!std::isfinite(total.value().item())) throw NumericError("non-finite C&W objective");

            const Tensor& xa = xadv.value();
            for (std::size_t i = 0; i < b; ++i) {
                if (frozen[i]) continue;
                const auto row = z.value().data().subspan(i * nc, nc);
                const int pred = clf::argmax(row);
                std::copy_n(xa.vec().begin() + static_cast<long>(i * per), per, last.vec().begin() + static_cast<long>(i * per));
                if (reached(pred, p.classes[i], p.targeted[i]) &&
                    attack_margin(row, p.classes[i], p.targeted[i]) >= cfg.kappa) {
                    succeeded[i] = true;
                    const double l2 = std::sqrt(static_cast<double>(dist.value()[i]));
                    if (l2 < best_l2[i]) {
                        best_l2[i] = l2;
                        have_best[i] = true;
                        std::copy_n(xa.vec().begin() + static_cast<long>(i * per), per,
                                    best.vec().begin() + static_cast<long>(i * per));
                    }
                }
                if ((it + 1) % check_every == 0) {
                    const double loss = per_sample.value()[i];
                    if (loss > prev_loss[i] * 0.9999) frozen[i] = true;
                    prev_loss[i] = loss;
                }
            }
            if (std::all_of(frozen.begin(), frozen.end(), [](bool f) { return f; })) break;

            Tensor grad = tape.backward(total)[wv];
            for (std::size_t i = 0; i < b; ++i)
                if (frozen[i]) std::fill_n(grad.vec().begin() + static_cast<long>(i * per), per, 0.0f);
            const Tensor before = w;
            std::vector<Tensor*> params{&w};
            std::vector<const Tensor*> grads{&grad};
            num::adam_step(params, grads, adam);
            for (std::size_t i = 0; i < b; ++i)
                if (frozen[i])
                    std::copy_n(before.vec().begin() + static_cast<long>(i * per), per, w.vec().begin() + static_cast<long>(i * per));
        }

        for (std::size_t i = 0; i < b; ++i) {
            if (succeeded[i]) {
                upper[i] = std::min(upper[i], c[i]);
                c[i] = (lower[i] + upper[i]) / 2.0;
            } else {
                lower[i] = std::max(lower[i], c[i]);
                c[i] = upper[i] < kUpperInit ? (lower[i] + upper[i]) / 2.0 : c[i] * 2.0;
            }
        }
    }
    for (std::size_t i = 0; i < b; ++i)
        if (!have_best[i])
            std::copy_n(last.vec().begin() + static_cast<long>(i * per), per, best.vec().begin() + static_cast<long>(i * per));
    return best;
}

Tensor slice_batch(const Tensor& batch, std::size_t start, std::size_t n)
{
    const std::size_t per = batch.dim(1) * batch.dim(2);
    return Tensor(Shape{n, batch.dim(1), batch.dim(2)},
                  std::vector<float>(batch.vec().begin() + static_cast<long>(start * per),
                                     batch.vec().begin() + static_cast<long>((start + n) * per)));
}

}  // namespace

std::vector<AdversarialWindow> craft(const clf::Model& model, const Tensor& batch, const std::vector<int>& labels,
                                     const AttackConfig& cfg, const std::vector<int>* targets)
{
    cfg.validate();
    model.check_batch(batch);
    const std::size_t total = batch.dim(0), t = batch.dim(1), n = batch.dim(2), per = t * n;
    const Prepared all = prepare(model, total, labels, cfg, targets);
    const std::string hash = cfg.hash();

    std::vector<AdversarialWindow> out;
    out.reserve(total);
    for (std::size_t start = 0; start < total; start += kChunk) {
        const std::size_t b = std::min(kChunk, total - start);
        const Tensor x0 = slice_batch(batch, start, b);
        Prepared p;
        p.classes.assign(all.classes.begin() + static_cast<long>(start), all.classes.begin() + static_cast<long>(start + b));
        p.targeted.assign(all.targeted.begin() + static_cast<long>(start), all.targeted.begin() + static_cast<long>(start + b));

        std::vector<bool> degenerate(b, false);
        Tensor xadv = cfg.kind == Kind::CW
                          ? carlini_wagner(model, x0, p, cfg)
                          : sign_attack(model, x0, p, cfg, degenerate);
        const auto preds = clf::predict_labels(model, xadv);

        for (std::size_t i = 0; i < b; ++i) {
            AdversarialWindow a;
            a.original = Tensor(Shape{t, n}, std::vector<float>(x0.vec().begin() + static_cast<long>(i * per),
                                                                x0.vec().begin() + static_cast<long>((i + 1) * per)));
            a.values = Tensor(Shape{t, n}, std::vector<float>(xadv.vec().begin() + static_cast<long>(i * per),
                                                              xadv.vec().begin() + static_cast<long>((i + 1) * per)));
            a.kind = cfg.kind;
            a.config_hash = hash;
            a.reference_label = p.classes[i];
            a.targeted = p.targeted[i];
            a.prediction = preds[i];
            a.degenerate_gradient = degenerate[i];
            a.success = !a.degenerate_gradient && reached(a.prediction, a.reference_label, a.targeted);
            double sq = 0.0;
            for (std::size_t k = 0; k < per; ++k) {
                const double d = static_cast<double>(a.values[k]) - a.original[k];
                a.linf = std::max(a.linf, std::abs(d));
                sq += d * d;
            }
            a.l2 = std::sqrt(sq);
            out.push_back(std::move(a));
        }
    }
    return out;
}

namespace {

AdversarialWindow craft_one(const clf::Model& model, const Tensor& window, int label, AttackConfig cfg, Kind kind)
{
    if (window.rank() != 2) throw ContractViolation("window must be [T, N]");
    if (cfg.kind != kind) throw ConfigError("attack kind mismatch: config is " + to_string(cfg.kind));
    return craft(model, window.reshaped({1, window.dim(0), window.dim(1)}), {label}, cfg).front();
}

}  // namespace

AdversarialWindow craft_fgsm(const clf::Model& model, const Tensor& window, int label, const AttackConfig& cfg)
{
    return craft_one(model, window, label, cfg, Kind::FGSM);
}

AdversarialWindow craft_pgd(const clf::Model& model, const Tensor& window, int label, const AttackConfig& cfg)
{
    return craft_one(model, window, label, cfg, Kind::PGD);
}

AdversarialWindow craft_cw(const clf::Model& model, const Tensor& window, int label, const AttackConfig& cfg)
{
    return craft_one(model, window, label, cfg, Kind::CW);
}

clf::ClassificationMetrics evaluate_on(const clf::Model& model, const std::vector<AdversarialWindow>& adversarial,
                                       const std::vector<int>& labels)
{
    if (adversarial.empty()) throw ContractViolation("no adversarial windows to evaluate");
    const std::size_t t = adversarial.front().values.dim(0), n = adversarial.front().values.dim(1);
    Tensor batch(Shape{adversarial.size(), t, n});
    for (std::size_t i = 0; i < adversarial.size(); ++i)
        std::copy(adversarial[i].values.vec().begin(), adversarial[i].values.vec().end(),
                  batch.vec().begin() + static_cast<long>(i * t * n));
    return clf::compute_metrics(labels, clf::predict_labels(model, batch), model.n_classes());
}

UnderAttackResult evaluate_under_attack(const clf::Model& model, const clf::LabeledSet& set, const AttackConfig& cfg,
                                        const std::vector<int>* targets)
{
    if (set.size() == 0) throw ContractViolation("cannot attack an empty set");
    UnderAttackResult r;
    r.adversarial = craft(model, set.x, set.y, cfg, targets);
    std::vector<int> preds;
    std::size_t successes = 0;
    double pcc_sum = 0.0;
    for (const auto& a : r.adversarial) {
        preds.push_back(a.prediction);
        successes += a.success;
        r.mean_linf += a.linf;
        r.mean_l2 += a.l2;
        r.max_linf = std::max(r.max_linf, a.linf);
        r.max_l2 = std::max(r.max_l2, a.l2);
        try {
            pcc_sum += pearson(a.original.data(), a.values.data());
            ++r.pcc_count;
        } catch (const NumericError&) {
            // constant window: PCC undefined, left out of the mean
        }
    }
    const double n = static_cast<double>(set.size());
    r.mean_linf /= n;
    r.mean_l2 /= n;
    r.mean_pcc = r.pcc_count ? pcc_sum / static_cast<double>(r.pcc_count) : 0.0;
    r.success_rate = static_cast<double>(successes) / n;
    r.metrics = clf::compute_metrics(set.y, preds, model.n_classes());
    return r;
}

TransferMatrix transfer_matrix(const std::vector<NamedModel>& models, const clf::LabeledSet& set,
                               const std::vector<AttackConfig>& cfgs)
{
    if (models.empty()) throw ContractViolation("transfer_matrix needs at least one model");
    const auto& first = *models.front().model;
    for (const auto& m : models)
        if (m.model->timestep() != first.timestep() || m.model->n_features() != first.n_features() ||
            m.model->n_classes() != first.n_classes())
            throw ContractViolation("model " + m.name + " does not share the input shape and label set");
    TransferMatrix tm;
    for (const auto& m : models) tm.models.push_back(m.name);
    for (const auto& c : cfgs) tm.kinds.push_back(c.kind);
    tm.accuracy.assign(models.size(), std::vector<std::vector<double>>(models.size(), std::vector<double>(cfgs.size())));
    for (std::size_t s = 0; s < models.size(); ++s)
        for (std::size_t k = 0; k < cfgs.size(); ++k) {
            const auto adv = craft(*models[s].model, set.x, set.y, cfgs[k]);
            for (std::size_t t = 0; t < models.size(); ++t)
                tm.accuracy[s][t][k] = evaluate_on(*models[t].model, adv, set.y).accuracy;
        }
    return tm;
}

void write_adversarial_set(const std::filesystem::path& csv_path, const std::vector<AdversarialWindow>& windows,
                           const std::vector<data::TimeSeriesWindow>& originals,
                           const std::vector<std::string>& feature_names, const AttackConfig& cfg,
                           const std::string& header_comment)
{
    if (windows.size() != originals.size()) throw ContractViolation("one original per adversarial window is required");
    std::vector<data::TimeSeriesWindow> perturbed;
    nlohmann::json records = nlohmann::json::array();
    for (std::size_t i = 0; i < windows.size(); ++i) {
        data::TimeSeriesWindow w = originals[i];
        w.values = windows[i].values;
        perturbed.push_back(std::move(w));
        records.push_back({{"id", originals[i].id()},
                           {"success", windows[i].success},
                           {"degenerate_gradient", windows[i].degenerate_gradient},
                           {"prediction", windows[i].prediction},
                           {"reference_label", windows[i].reference_label},
                           {"linf", windows[i].linf},
                           {"l2", windows[i].l2}});
    }
    {
        std::ofstream out(csv_path);
        if (!out) throw IoError("cannot write " + csv_path.string());
        data::write_windows(out, perturbed, feature_names, header_comment);
    }
    nlohmann::json sidecar{{"header", header_comment},
                           {"config", to_json(cfg)},
                           {"config_hash", cfg.hash()},
                           {"windows", records}};
    std::ofstream side(csv_path.string() + ".json");
    if (!side) throw IoError("cannot write " + csv_path.string() + ".json");
    side << sidecar.dump(2) << "\n";
}

AdversarialSet read_adversarial_set(const std::filesystem::path& csv_path)
{
    AdversarialSet s;
    {
        std::ifstream in(csv_path);
        if (!in) throw IoError("cannot open " + csv_path.string());
        s.windows = data::read_windows(in, &s.feature_names);
    }
    std::ifstream side(csv_path.string() + ".json");
    if (!side) throw IoError("missing sidecar " + csv_path.string() + ".json");
    try {
        const auto j = nlohmann::json::parse(side);
        s.config = attack_from_json(j.at("config"));
        for (const auto& r : j.at("windows")) s.success.push_back(r.at("success").get<bool>());
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("adversarial sidecar: " + std::string(e.what()));
    }
    if (s.success.size() != s.windows.size()) throw SchemaError("sidecar and window counts differ");
    return s;
}

}  // namespace csd::attack
