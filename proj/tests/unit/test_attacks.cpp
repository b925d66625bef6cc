#include <cmath>
#include <filesystem>

#include "doctest.h"

#include "csd/attacks/attack.hpp"
#include "csd/classifiers/classifier.hpp"
#include "toy_models.hpp"

using namespace csd;
using namespace csd::attack;
using num::Shape;
using num::Tensor;

namespace {

Tensor uniform(Shape shape, num::SeededRng& rng, double lo = 0.0, double hi = 1.0)
{
    Tensor t(std::move(shape));
    for (auto& v : t.vec()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

clf::Classifier tiny_lstm(std::uint64_t seed = 3)
{
    auto s = clf::desk_preset(clf::Family::LSTM, 8, 3);
    s.recurrent_widths = {6};
    s.dense_widths = {6};
    return clf::build(s, seed);
}

AttackConfig fgsm(double eps)
{
    AttackConfig c;
    c.kind = Kind::FGSM;
    c.epsilon = eps;
    return c;
}

AttackConfig pgd(double eps, double alpha, std::size_t iters)
{
    AttackConfig c;
    c.kind = Kind::PGD;
    c.epsilon = eps;
    c.alpha = alpha;
    c.iterations = iters;
    return c;
}

// Two-class linear model z = flatten(x) W + b and one window whose margin
// toward `label` puts it at hyperplane distance `distance`.
struct LinearInstance {
    toy::Linear model;
    Tensor window;
    int label;
    double distance;
};

LinearInstance linear_instance(std::uint64_t seed, std::size_t t = 4, std::size_t n = 3)
{
    num::SeededRng rng(seed);
    const std::size_t d = t * n;
    Tensor w(Shape{d, 2});
    for (auto& v : w.vec()) v = static_cast<float>(rng.normal());
    Tensor x = uniform({t, n}, rng, 0.35, 0.65);
    const int label = static_cast<int>(rng.below(2));
    const double distance = rng.uniform(0.05, 0.15);
    double dw_norm2 = 0.0, raw_margin = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double dw = static_cast<double>(w.at(k, static_cast<std::size_t>(label))) - w.at(k, 1 - static_cast<std::size_t>(label));
        dw_norm2 += dw * dw;
        raw_margin += dw * x[k];
    }
    // choose the bias so that margin = distance * |dw|
    Tensor b(Shape{2});
    b[static_cast<std::size_t>(label)] = static_cast<float>(distance * std::sqrt(dw_norm2) - raw_margin);
    return {toy::Linear(t, n, w, b), x, label, distance};
}

}  // namespace

TEST_CASE("perturbation statistics")
{
    Tensor x = Tensor::from({1, 2, 3, 4});
    auto same = perturbation_stats(x, x);
    CHECK(same.pcc == doctest::Approx(1.0));
    CHECK(same.linf == 0.0);
    Tensor flipped = Tensor::from({0, -1, -2, -3});  // -x + 1
    CHECK(perturbation_stats(x, flipped).pcc == doctest::Approx(-1.0));
    auto s = perturbation_stats(x, Tensor::from({1, 2, 3, 5}));
    // deviations [-1.5,-.5,.5,1.5] and [-1.75,-.75,.25,2.25]: 6.5 / sqrt(5 * 8.75)
    CHECK(s.pcc == doctest::Approx(6.5 / std::sqrt(43.75)).epsilon(1e-6));
    CHECK(s.pcc == doctest::Approx(0.982708).epsilon(1e-5));
    CHECK(s.linf == 1.0);
    CHECK(s.l2 == 1.0);
    CHECK_THROWS_AS(perturbation_stats(Tensor::from({2, 2, 2}), Tensor::from({1, 2, 3})), NumericError);
    CHECK_THROWS_AS(perturbation_stats(x, Tensor::from({1, 2})), ContractViolation);
}

TEST_CASE("attack config validation and JSON round trip")
{
    AttackConfig c = pgd(0.05, 0.005, 7);
    c.target = 2;
    c.seed = 99;
    auto back = attack_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(back.hash() == c.hash());
    CHECK(pgd(0.05, 0.005, 8).hash() != c.hash());
    CHECK_THROWS_AS(attack_from_json({{"kind", "pgd"}, {"eps", 0.1}}), ConfigError);
    CHECK_THROWS_AS(pgd(-0.1, 0.01, 1).validate(), ConfigError);
    CHECK_THROWS_AS(pgd(0.1, 0.0, 1).validate(), ConfigError);
    AttackConfig cw;
    cw.kind = Kind::CW;
    cw.cw_iterations = 0;
    CHECK_THROWS_AS(cw.validate(), ConfigError);
    CHECK_THROWS_AS(parse_kind("deepfool"), ConfigError);
}

TEST_CASE("FGSM on a one-feature logistic model moves every coordinate by -epsilon")
{
    // p(positive) = sigmoid(w * mean(x)), w > 0, true class positive (index 1).
    Tensor w(Shape{1, 2}, std::vector<float>{0.0f, 2.5f});
    toy::MeanLinear model(10, w, Tensor(Shape{2}));
    num::SeededRng rng(1);
    Tensor x = uniform({10, 1}, rng, 0.2, 0.8);
    auto a = craft_fgsm(model, x, 1, fgsm(0.1));
    for (std::size_t k = 0; k < x.size(); ++k) CHECK(a.values[k] - x[k] == doctest::Approx(-0.1).epsilon(1e-5));
    CHECK_FALSE(a.degenerate_gradient);
}

TEST_CASE("zero budget and zero iterations leave the window unchanged")
{
    auto inst = linear_instance(4);
    auto a = craft_fgsm(inst.model, inst.window, inst.label, fgsm(0.0));
    CHECK(a.values == inst.window);
    CHECK_FALSE(a.success);
    auto p = craft_pgd(inst.model, inst.window, inst.label, pgd(0.1, 0.01, 0));
    CHECK(p.values == inst.window);
    CHECK_FALSE(p.success);
}

TEST_CASE("zero gradient everywhere is reported as degenerate")
{
    toy::Constant model(5, 2, Tensor::from({0.0f, 1.0f, 0.0f, 0.0f}));
    num::SeededRng rng(2);
    Tensor x = uniform({5, 2}, rng);
    for (auto cfg : {fgsm(0.1), pgd(0.1, 0.01, 5)}) {
        auto a = craft(model, x.reshaped({1, 5, 2}), {1}, cfg).front();
        CHECK(a.degenerate_gradient);
        CHECK_FALSE(a.success);
        CHECK(a.values == x);
    }
}

TEST_CASE("single PGD step with alpha >= epsilon equals FGSM")
{
    auto model = tiny_lstm();
    num::SeededRng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = uniform({8, 3}, rng);
        const int label = static_cast<int>(rng.below(4));
        auto f = craft_fgsm(model, x, label, fgsm(0.07));
        auto p = craft_pgd(model, x, label, pgd(0.07, 0.2, 1));
        for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::abs(f.values[k] - p.values[k]) <= 1e-6);
    }
}

TEST_CASE("FGSM and PGD respect the budget and the clip range")
{
    num::SeededRng rng(6);
    for (std::uint64_t m = 0; m < 5; ++m) {
        auto model = tiny_lstm(10 + m);
        Tensor batch = uniform({16, 8, 3}, rng);
        std::vector<int> labels(16);
        for (auto& l : labels) l = static_cast<int>(rng.below(4));
        for (double eps : {0.01, 0.1, 0.3}) {
            auto cfg_r = pgd(eps, eps / 4, 10);
            cfg_r.random_start = true;
            cfg_r.seed = m;
            for (const auto& cfg : {fgsm(eps), pgd(eps, eps / 10, 20), cfg_r}) {
                for (const auto& a : craft(model, batch, labels, cfg)) {
                    CHECK(a.linf <= eps + 1e-6);
                    for (float v : a.values.vec()) {
                        CHECK(v >= 0.0f);
                        CHECK(v <= 1.0f);
                    }
                }
            }
        }
    }
}

TEST_CASE("crafting is deterministic and independent of batching")
{
    auto model = tiny_lstm();
    num::SeededRng rng(7);
    Tensor batch = uniform({6, 8, 3}, rng);
    std::vector<int> labels{0, 1, 2, 3, 0, 1};
    AttackConfig cw;
    cw.kind = Kind::CW;
    cw.cw_iterations = 30;
    cw.binary_steps = 2;
    auto rs = pgd(0.1, 0.02, 5);
    rs.random_start = true;
    rs.seed = 4;
    for (const auto& cfg : {fgsm(0.1), pgd(0.1, 0.01, 10), cw, rs}) {
        auto a = craft(model, batch, labels, cfg);
        auto b = craft(model, batch, labels, cfg);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].values == b[i].values);
            Tensor one(Shape{1, 8, 3}, std::vector<float>(batch.vec().begin() + static_cast<long>(i * 24),
                                                          batch.vec().begin() + static_cast<long>((i + 1) * 24)));
            CHECK(craft(model, one, {labels[i]}, cfg).front().values == a[i].values);
        }
    }
    auto other = rs;
    other.seed = 5;
    CHECK(craft(model, batch, labels, other).front().values != craft(model, batch, labels, rs).front().values);
}

TEST_CASE("C&W with c = 0 stays at the original window")
{
    auto inst = linear_instance(11);
    AttackConfig cfg;
    cfg.kind = Kind::CW;
    cfg.c = 0.0;
    cfg.cw_iterations = 200;
    auto a = craft_cw(inst.model, inst.window, inst.label, cfg);
    CHECK(a.l2 <= 1e-3);
    CHECK_FALSE(a.success);
}

TEST_CASE("C&W reaches the closed-form minimal distance on linear models")
{
    AttackConfig cfg;
    cfg.kind = Kind::CW;
    cfg.binary_steps = 9;
    cfg.cw_iterations = 1000;
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        auto inst = linear_instance(seed);
        auto a = craft_cw(inst.model, inst.window, inst.label, cfg);
        INFO("seed " << seed << " l2 " << a.l2 << " optimum " << inst.distance);
        REQUIRE(a.success);
        CHECK(a.l2 >= inst.distance * (1 - 1e-4));
        CHECK(a.l2 <= inst.distance * 1.05);
    }
}

TEST_CASE("C&W success flags agree with a fresh forward pass")
{
    auto model = tiny_lstm(8);
    num::SeededRng rng(9);
    Tensor batch = uniform({12, 8, 3}, rng);
    const auto labels = clf::predict_labels(model, batch);
    AttackConfig cfg;
    cfg.kind = Kind::CW;
    cfg.cw_iterations = 100;
    cfg.binary_steps = 3;
    for (const auto& a : craft(model, batch, labels, cfg)) {
        const int fresh = clf::predict_label(model, a.values);
        CHECK(a.success == (fresh != a.reference_label));
        for (float v : a.values.vec()) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
}

TEST_CASE("targeted mode toward the true label keeps accuracy")
{
    // A linear model that classifies every window correctly.
    std::vector<Tensor> xs;
    std::vector<int> ys;
    num::SeededRng rng(12);
    std::vector<LinearInstance> insts;
    auto inst = linear_instance(13);
    clf::LabeledSet set{Tensor(Shape{30, 4, 3}), {}};
    for (std::size_t i = 0; i < 30; ++i) {
        Tensor x = uniform({4, 3}, rng, 0.2, 0.8);
        std::copy(x.vec().begin(), x.vec().end(), set.x.vec().begin() + static_cast<long>(i * 12));
    }
    set.y = clf::predict_labels(inst.model, set.x);
    auto clean = clf::evaluate(inst.model, set);
    REQUIRE(clean.accuracy == 1.0);
    for (const auto& cfg : {fgsm(0.1), pgd(0.1, 0.01, 20)}) {
        auto r = evaluate_under_attack(inst.model, set, cfg, &set.y);
        CHECK(r.metrics.accuracy == clean.accuracy);
        CHECK(r.success_rate == 1.0);  // target reached == prediction kept
    }
}

TEST_CASE("evaluate_under_attack with a zero budget reproduces clean metrics")
{
    auto model = tiny_lstm(21);
    num::SeededRng rng(14);
    clf::LabeledSet set{uniform({40, 8, 3}, rng), {}};
    for (std::size_t i = 0; i < 40; ++i) set.y.push_back(static_cast<int>(i % 4));
    auto clean = clf::evaluate(model, set);
    for (const auto& cfg : {fgsm(0.0), pgd(0.0, 0.01, 10)}) {
        auto r = evaluate_under_attack(model, set, cfg);
        CHECK(r.metrics.accuracy == clean.accuracy);
        CHECK(r.metrics.confusion == clean.confusion);
        CHECK(r.max_linf == 0.0);
    }
}

TEST_CASE("transfer matrix degenerate cases")
{
    auto a = tiny_lstm(31), twin = tiny_lstm(31), other = tiny_lstm(32);
    num::SeededRng rng(15);
    clf::LabeledSet set{uniform({20, 8, 3}, rng), {}};
    set.y = clf::predict_labels(a, set.x);
    std::vector<AttackConfig> cfgs{fgsm(0.1), pgd(0.1, 0.01, 10)};

    auto single = transfer_matrix({{"a", &a}}, set, cfgs);
    for (std::size_t k = 0; k < cfgs.size(); ++k)
        CHECK(single.at(0, 0, k) == evaluate_under_attack(a, set, cfgs[k]).metrics.accuracy);

    auto twins = transfer_matrix({{"a", &a}, {"twin", &twin}, {"other", &other}}, set, cfgs);
    for (std::size_t k = 0; k < cfgs.size(); ++k) {
        CHECK(twins.at(0, 1, k) == twins.at(0, 0, k));
        CHECK(twins.at(1, 0, k) == twins.at(1, 1, k));
        for (std::size_t s = 0; s < 3; ++s)
            for (std::size_t t = 0; t < 3; ++t) {
                CHECK(twins.at(s, t, k) >= 0.0);
                CHECK(twins.at(s, t, k) <= 1.0);
            }
    }
    auto s = clf::desk_preset(clf::Family::GRU, 9, 3);
    auto wrong = clf::build(s, 1);
    CHECK_THROWS_AS(transfer_matrix({{"a", &a}, {"wrong", &wrong}}, set, cfgs), ContractViolation);
}

TEST_CASE("adversarial set files round trip")
{
    auto model = tiny_lstm();
    num::SeededRng rng(16);
    std::vector<data::TimeSeriesWindow> originals;
    for (std::size_t i = 0; i < 5; ++i) {
        data::TimeSeriesWindow w;
        w.values = uniform({8, 3}, rng);
        w.label = data::severity_from_index(static_cast<int>(i % 4));
        w.source = "s";
        w.end_frame = 10 + i;
        originals.push_back(w);
    }
    const auto batch = data::stack(originals);
    const auto cfg = pgd(0.1, 0.01, 5);
    auto adv = craft(model, batch, data::labels_of(originals), cfg);
    const auto path = std::filesystem::temp_directory_path() / "csd_adv_roundtrip.csv";
    write_adversarial_set(path, adv, originals, {"a", "b", "c"}, cfg, "tool=test");
    auto back = read_adversarial_set(path);
    REQUIRE(back.windows.size() == 5);
    CHECK(back.feature_names == std::vector<std::string>{"a", "b", "c"});
    CHECK(back.config.hash() == cfg.hash());
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(back.windows[i].values == adv[i].values);
        CHECK(back.windows[i].id() == originals[i].id());
        CHECK(back.success[i] == adv[i].success);
    }
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".json");
}
