#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "csd/classifiers/classifier.hpp"
#include "csd/explain/corpus.hpp"
#include "csd/explain/repository.hpp"
#include "csd/explain/shap.hpp"
#include "toy_models.hpp"

using namespace csd;
using namespace csd::xai;
using num::Shape;
using num::Tensor;

namespace {

Tensor uniform(Shape shape, num::SeededRng& rng, double lo = 0.0, double hi = 1.0)
{
    Tensor t(std::move(shape));
    for (auto& v : t.vec()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

clf::Classifier small_lstm(std::uint64_t seed = 4)
{
    auto s = clf::desk_preset(clf::Family::LSTM, 10, 4);
    s.recurrent_widths = {8};
    s.dense_widths = {6};
    return clf::build(s, seed);
}

Tensor slice(const Tensor& batch, std::size_t i)
{
    const std::size_t t = batch.dim(1), n = batch.dim(2);
    return Tensor(Shape{t, n}, std::vector<float>(batch.vec().begin() + static_cast<long>(i * t * n),
                                                  batch.vec().begin() + static_cast<long>((i + 1) * t * n)));
}

// tanh MLP over time-means; rows of w1 are per-feature fan-in weights.
toy::MeanMlp random_mlp(std::size_t t, std::size_t n, std::size_t hidden, std::uint64_t seed)
{
    num::SeededRng rng(seed);
    return toy::MeanMlp(t, uniform({n, hidden}, rng, -1.5, 1.5), uniform({hidden}, rng, -0.5, 0.5),
                        uniform({hidden, 3}, rng, -1.0, 1.0));
}

XaiSignature record(const std::string& id, int label, const std::string& split, std::vector<float> values,
                    const std::string& fp = "model-a")
{
    XaiSignature s;
    s.window_id = id;
    s.label = label;
    s.split = split;
    s.values = std::move(values);
    s.model_fingerprint = fp;
    return s;
}

std::filesystem::path temp_path(const std::string& name)
{
    return std::filesystem::temp_directory_path() / ("csd_explain_" + name);
}

}  // namespace

TEST_CASE("signature of a two-unit head matches hand evaluation")
{
    // P = 2 penultimate units (the flattened 1x2 window), one class, W = [2, -1].
    toy::Linear model(1, 2, Tensor(Shape{2, 1}, {2.0f, -1.0f}), Tensor(Shape{1}, {0.0f}));
    const auto bg = make_background(model, Tensor(Shape{1, 1, 2}), 1, 0);
    REQUIRE(bg.mean_penultimate == std::vector<float>{0.0f, 0.0f});

    const auto sig = signature(model, Tensor(Shape{1, 2}, {1.0f, 0.0f}), bg);
    CHECK(sig.values == std::vector<float>{2.0f, 0.0f});

    SUBCASE("penultimate activation at the baseline gives an all-zero signature")
    {
        const auto zero = signature(model, Tensor(Shape{1, 2}), bg);
        CHECK(zero.values == std::vector<float>{0.0f, 0.0f});
    }
}

TEST_CASE("signature efficiency holds per class on a recurrent classifier")
{
    const auto model = small_lstm();
    num::SeededRng rng(8);
    const auto bg = make_background(model, uniform({40, 10, 4}, rng), 20, 1);
    const Tensor windows = uniform({100, 10, 4}, rng);
    const auto sigs = signatures(model, windows, bg);
    const Tensor z = clf::logits(model, windows);

    const Tensor& w = model.head_weight();
    const Tensor& b = model.head_bias();
    const std::size_t p = w.dim(0), c = w.dim(1);
    REQUIRE(sigs.size() == 100);
    for (std::size_t i = 0; i < sigs.size(); ++i) {
        REQUIRE(sigs[i].values.size() == p * c);
        for (std::size_t k = 0; k < c; ++k) {
            double z_bar = b[k], sum = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                z_bar += static_cast<double>(w.at(j, k)) * bg.mean_penultimate[j];
                sum += sigs[i].values[k * p + j];
            }
            CHECK(std::abs(sum - (z.at(i, k) - z_bar)) < 1e-4);
        }
    }

    SUBCASE("single-window form equals the batched rows")
    {
        CHECK(signature(model, slice(windows, 17), bg).values == sigs[17].values);
    }
    SUBCASE("predicted-class mode keeps the argmax class block")
    {
        const auto pred = signatures(model, windows, bg, SignatureMode::PredictedClass);
        const auto labels = clf::predict_labels(model, windows);
        for (std::size_t i = 0; i < 100; i += 9) {
            REQUIRE(pred[i].values.size() == p);
            const auto off = static_cast<long>(static_cast<std::size_t>(labels[i]) * p);
            CHECK(std::equal(pred[i].values.begin(), pred[i].values.end(), sigs[i].values.begin() + off));
        }
        CHECK(pred[0].model_fingerprint != sigs[0].model_fingerprint);
    }
}

TEST_CASE("signature contract errors")
{
    toy::MeanLinear headless(3, Tensor(Shape{2, 2}, {1, 0, 0, 1}), Tensor(Shape{2}));
    const auto bg = make_background(headless, Tensor(Shape{4, 3, 2}), 2, 0);
    CHECK(bg.mean_penultimate.empty());
    CHECK_THROWS_AS(signature(headless, Tensor(Shape{3, 2}), bg), ArchitectureError);

    const auto model = small_lstm();
    auto other = clf::desk_preset(clf::Family::LSTM, 10, 4);
    other.recurrent_widths = {8};
    other.dense_widths = {5};
    const auto bg_other = make_background(clf::build(other, 1), Tensor(Shape{3, 10, 4}), 3, 0);
    CHECK_THROWS_AS(signature(model, Tensor(Shape{10, 4}), bg_other), ArchitectureError);
    CHECK_THROWS_AS(signature(model, Tensor(Shape{9, 4}), make_background(model, Tensor(Shape{3, 10, 4}))),
                    ContractViolation);
}

TEST_CASE("background set sampling")
{
    const auto model = small_lstm();
    num::SeededRng rng(2);
    const Tensor pool = uniform({30, 10, 4}, rng);

    const auto a = make_background(model, pool, 10, 5), b = make_background(model, pool, 10, 5);
    CHECK(a.windows == b.windows);
    CHECK(a.size() == 10);
    CHECK(make_background(model, pool, 10, 6).windows != a.windows);
    CHECK(make_background(model, pool, 100, 5).size() == 30);

    const Tensor h = model.penultimate(a.windows);
    for (std::size_t j = 0; j < h.dim(1); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < h.dim(0); ++i) mean += h.at(i, j);
        CHECK(a.mean_penultimate[j] == doctest::Approx(mean / 10.0).epsilon(1e-6));
    }

    CHECK_THROWS_AS(make_background(model, pool, 0, 0), ConfigError);
    CHECK_THROWS_AS(make_background(model, Tensor(Shape{0, 10, 4}), 5, 0), ContractViolation);
}

TEST_CASE("input attributions of a constant model are zero")
{
    toy::Constant model(5, 4, Tensor(Shape{3}, {0.3f, -1.0f, 2.0f}));
    num::SeededRng rng(1);
    const auto bg = make_background(model, uniform({6, 5, 4}, rng), 6, 0);
    const Tensor x = uniform({5, 4}, rng);
    for (auto mode : {ShapMode::Exact, ShapMode::Sampled}) {
        const auto a = shap_input_sampled(model, x, bg, 1, 50, 3, mode);
        for (std::size_t f = 0; f < 4; ++f) {
            CHECK(a.values[f] == 0.0);
            CHECK(a.standard_error[f] == 0.0);
        }
    }
}

TEST_CASE("exact input attributions of a linear model match the closed form")
{
    num::SeededRng rng(12);
    const std::size_t t = 6, n = 5;
    const Tensor w = uniform({n, 3}, rng, -2.0, 2.0);
    toy::MeanLinear model(t, w, uniform({3}, rng));
    const auto bg = make_background(model, uniform({20, t, n}, rng), 20, 0);
    const Tensor x = uniform({t, n}, rng);

    for (int cls = 0; cls < 3; ++cls) {
        const auto a = shap_input_sampled(model, x, bg, cls, 1, 0);
        REQUIRE(a.exact);
        CHECK(a.permutations == 0);
        for (std::size_t f = 0; f < n; ++f) {
            double x_bar = 0.0, b_bar = 0.0;
            for (std::size_t s = 0; s < t; ++s) {
                x_bar += x.at(s, f);
                b_bar += bg.mean_window.at(s, f);
            }
            const double expected = w.at(f, static_cast<std::size_t>(cls)) * (x_bar - b_bar) / static_cast<double>(t);
            CHECK(a.values[f] == doctest::Approx(expected).epsilon(1e-5).scale(1.0));
        }
    }
}

TEST_CASE("sampled attributions agree with exhaustive enumeration on a nonlinear model")
{
    const std::size_t t = 4, n = 8;
    const auto model = random_mlp(t, n, 6, 21);
    num::SeededRng rng(22);
    const auto bg = make_background(model, uniform({30, t, n}, rng), 30, 0);
    const Tensor x = uniform({t, n}, rng);

    const auto exact = shap_input_sampled(model, x, bg, 2, 1, 0, ShapMode::Exact);
    const auto sampled = shap_input_sampled(model, x, bg, 2, 2000, 7, ShapMode::Sampled);
    REQUIRE_FALSE(sampled.exact);
    CHECK(sampled.permutations == 2000);
    for (std::size_t f = 0; f < n; ++f) {
        INFO("feature " << f);
        CHECK(sampled.standard_error[f] > 0.0);
        CHECK(std::abs(sampled.values[f] - exact.values[f]) <= 3.0 * sampled.standard_error[f]);
    }

    SUBCASE("exact values are efficient")
    {
        Tensor full = x.reshaped({1, t, n}), empty = bg.mean_window.reshaped({1, t, n});
        const double gap = clf::logits(model, full).at(0, 2) - clf::logits(model, empty).at(0, 2);
        double sum = 0.0;
        for (double v : exact.values) sum += v;
        CHECK(std::abs(sum - gap) < 1e-6);
    }
    SUBCASE("sampling is deterministic per seed")
    {
        const auto again = shap_input_sampled(model, x, bg, 2, 2000, 7, ShapMode::Sampled);
        CHECK(again.values == sampled.values);
        CHECK(shap_input_sampled(model, x, bg, 2, 2000, 8, ShapMode::Sampled).values != sampled.values);
    }
}

TEST_CASE("symmetric features receive equal attributions and dummy features zero")
{
    const std::size_t t = 3, n = 5, hidden = 4;
    num::SeededRng rng(31);
    Tensor w1 = uniform({n, hidden}, rng, -1.0, 1.0);
    for (std::size_t k = 0; k < hidden; ++k) {
        w1.at(1, k) = w1.at(0, k);  // feature 1 duplicates feature 0
        w1.at(4, k) = 0.0f;         // feature 4 has no fan-in
    }
    toy::MeanMlp model(t, w1, uniform({hidden}, rng, -0.5, 0.5), uniform({hidden, 2}, rng, -1.0, 1.0));

    Tensor pool = uniform({10, t, n}, rng);
    Tensor x = uniform({t, n}, rng);
    for (std::size_t s = 0; s < t; ++s) {
        x.at(s, 1) = x.at(s, 0);
        for (std::size_t i = 0; i < 10; ++i) pool.at(i, s, 1) = pool.at(i, s, 0);
    }
    const auto bg = make_background(model, pool, 10, 0);

    const auto sampled = shap_input_sampled(model, x, bg, 0, 800, 5, ShapMode::Sampled);
    const double se = std::hypot(sampled.standard_error[0], sampled.standard_error[1]);
    CHECK(std::abs(sampled.values[0] - sampled.values[1]) <= 3.0 * se);

    const auto exact = shap_input_sampled(model, x, bg, 0, 1, 0, ShapMode::Exact);
    CHECK(exact.values[4] == 0.0);
    CHECK(exact.values[0] == doctest::Approx(exact.values[1]).epsilon(1e-9));
}

TEST_CASE("input attribution mode selection and errors")
{
    num::SeededRng rng(3);
    toy::MeanLinear wide(2, uniform({13, 2}, rng), Tensor(Shape{2}));
    const auto bg = make_background(wide, uniform({4, 2, 13}, rng), 4, 0);
    const Tensor x = uniform({2, 13}, rng);
    CHECK_FALSE(shap_input_sampled(wide, x, bg, 0, 20, 1).exact);
    CHECK(shap_input_sampled(wide, x, bg, 0, 20, 1).values.size() == 13);
    CHECK_THROWS_AS(shap_input_sampled(wide, x, bg, 0, 0, 1), ConfigError);
    CHECK_THROWS_AS(shap_input_sampled(wide, x, bg, 2, 10, 1), ContractViolation);
}

TEST_CASE("global importance ranking")
{
    SUBCASE("single attribution")
    {
        const auto r = global_importance(std::vector<std::vector<double>>{{0.5, -1.0}});
        REQUIRE(r.size() == 2);
        CHECK(r[0].feature == 1);
        CHECK(r[0].mean_abs == 1.0);
        CHECK(r[1].feature == 0);
        CHECK(r[1].mean_abs == 0.5);
    }
    SUBCASE("all zero keeps index order")
    {
        const auto r = global_importance(std::vector<std::vector<double>>{{0, 0, 0}, {0, 0, 0}});
        for (std::size_t f = 0; f < 3; ++f) {
            CHECK(r[f].feature == f);
            CHECK(r[f].mean_abs == 0.0);
        }
    }
    SUBCASE("ties break toward the lower index")
    {
        const auto r = global_importance(std::vector<std::vector<double>>{{1, 0}, {0, 1}});
        CHECK(r[0].feature == 0);
        CHECK(r[1].feature == 1);
        CHECK(r[0].mean_abs == 0.5);
        CHECK(r[1].mean_abs == 0.5);
    }
    CHECK_THROWS_AS(global_importance(std::vector<std::vector<double>>{{1, 2}, {1}}), ContractViolation);
    CHECK_THROWS_AS(global_importance(std::vector<std::vector<double>>{}), ContractViolation);
}

TEST_CASE("signature repository append and extraction")
{
    SignatureRepository repo;
    CHECK(repo.dataset(kTrainSplit).x.shape() == Shape{0, 0});

    repo.append({record("w1", 0, kTrainSplit, {1, 2}), record("w2", 1, kTrainSplit, {3, 4}),
                 record("w3", 0, kTestSplit, {5, 6})});
    const auto train = repo.dataset(kTrainSplit);
    CHECK(train.x == Tensor(Shape{2, 2}, {1, 2, 3, 4}));
    CHECK(train.y == std::vector<int>{0, 1});
    CHECK(train.ids == std::vector<std::string>{"w1", "w2"});
    CHECK(train.model_fingerprint == "model-a");
    CHECK(repo.dataset(kTestSplit).ids == std::vector<std::string>{"w3"});

    SUBCASE("duplicates are rejected and nothing is appended")
    {
        try {
            repo.append({record("w9", 0, kTrainSplit, {0, 0}), record("w2", 1, kTestSplit, {0, 0})});
            FAIL("expected a duplicate-key error");
        } catch (const DuplicateKeyError& e) {
            CHECK(std::string(e.what()).find("w2") != std::string::npos);
        }
        CHECK(repo.size() == 3);
        CHECK_FALSE(repo.contains("w9", "model-a"));
        CHECK_THROWS_AS(repo.append({record("x", 0, kTrainSplit, {0}), record("x", 1, kTrainSplit, {0})}),
                        DuplicateKeyError);
    }
    SUBCASE("same window under another model is a new key")
    {
        repo.append({record("w1", 0, kTestSplit, {7, 8}, "model-b")});
        CHECK(repo.size() == 4);
        CHECK_THROWS_AS(repo.dataset(kTestSplit), ContractViolation);
    }
    SUBCASE("invalid records")
    {
        CHECK_THROWS_AS(repo.append({record("a", 2, kTrainSplit, {1})}), ContractViolation);
        CHECK_THROWS_AS(repo.append({record("a", 0, "validation", {1})}), ContractViolation);
        CHECK_THROWS_AS(repo.append({record("a", 0, kTrainSplit, {})}), ContractViolation);
        CHECK_THROWS_AS(repo.append({record("a", 0, kTrainSplit, {1}, "")}), ContractViolation);
    }
    SUBCASE("self-labeled records stay out of extractions by default")
    {
        auto s = record("live1", 1, kTrainSplit, {9, 9});
        s.self_labeled = true;
        repo.append({s});
        CHECK(repo.dataset(kTrainSplit).size() == 2);
        CHECK(repo.dataset(kTrainSplit, true).size() == 3);
    }
}

TEST_CASE("signature repository files")
{
    const auto path = temp_path("repo.jsonl");
    std::filesystem::remove(path);

    SignatureRepository repo;
    repo.append({record("w1", 0, kTrainSplit, {0.1f, -2.5e-7f, 3.0f}), record("w2", 1, kTestSplit, {1, 2, 3})});
    repo.save(path, {{"config_hash", "abc"}});

    nlohmann::json header;
    const auto back = SignatureRepository::load(path, &header);
    CHECK(header.at("config_hash") == "abc");
    CHECK(header.at("schema_version") == kRepositorySchemaVersion);
    REQUIRE(back.size() == 2);
    CHECK(back.records()[0].values == repo.records()[0].values);
    CHECK(back.dataset(kTestSplit).x == repo.dataset(kTestSplit).x);

    SUBCASE("append to file extends it and rejects duplicates")
    {
        SignatureRepository::append_to_file(path, {record("w3", 1, kTrainSplit, {4, 5, 6})});
        CHECK(SignatureRepository::load(path).size() == 3);
        CHECK_THROWS_AS(SignatureRepository::append_to_file(path, {record("w1", 0, kTrainSplit, {0, 0, 0})}),
                        DuplicateKeyError);
        CHECK(SignatureRepository::load(path).size() == 3);

        {
            std::ofstream out(path, std::ios::app);
            out << "\n\n";
        }
        CHECK(SignatureRepository::rebuild(path) == 3);
        std::ifstream in(path);
        std::size_t lines = 0;
        for (std::string line; std::getline(in, line);) ++lines;
        CHECK(lines == 4);
    }
    SUBCASE("append creates a missing file")
    {
        const auto fresh = temp_path("fresh.jsonl");
        std::filesystem::remove(fresh);
        SignatureRepository::append_to_file(fresh, {record("w1", 0, kTrainSplit, {1})});
        CHECK(SignatureRepository::load(fresh).size() == 1);
        std::filesystem::remove(fresh);
    }
    SUBCASE("malformed files")
    {
        {
            std::ofstream out(path, std::ios::app);
            out << "{not json\n";
        }
        try {
            SignatureRepository::load(path);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.row() == 4);
        }
        {
            std::ofstream out(path, std::ios::trunc);
            out << "{\"schema_version\": 99}\n";
        }
        CHECK_THROWS_AS(SignatureRepository::load(path), VersionMismatchError);
        {
            std::ofstream out(path, std::ios::trunc);
            out << "{\"schema_version\": 1}\n{\"id\": \"a\"}\n";
        }
        CHECK_THROWS_AS(SignatureRepository::load(path), SchemaError);
        {
            std::ofstream out(path, std::ios::trunc);
        }
        CHECK_THROWS_AS(SignatureRepository::load(path), SchemaError);
    }
    std::filesystem::remove(path);
}

TEST_CASE("signature corpus pairs each successful attack with its benign window")
{
    const auto model = small_lstm();
    num::SeededRng rng(21);
    std::vector<data::TimeSeriesWindow> windows;
    for (std::size_t i = 0; i < 12; ++i)
        windows.push_back({uniform({10, 4}, rng), data::Severity::None, "trace", 9 + i});
    const auto bg = make_background(model, uniform({16, 10, 4}, rng), 16, 0);

    attack::AttackConfig strong, none;
    strong.kind = attack::Kind::FGSM;
    strong.epsilon = 0.5;
    none.kind = attack::Kind::FGSM;
    none.epsilon = 0.0;
    CorpusStats stats;
    const auto corpus = signature_corpus(model, windows, bg, {strong, none}, kTrainSplit, SignatureMode::AllClasses,
                                         &stats);
    CHECK(stats.windows == 12);
    CHECK(stats.attempted == std::vector<std::size_t>{6, 6});
    CHECK(stats.succeeded[0] > 0);
    CHECK(stats.succeeded[1] == 0);  // an empty budget never flips a prediction
    REQUIRE(corpus.size() == 2 * stats.succeeded[0]);
    const auto clean = signatures(model, data::stack(windows), bg);
    for (std::size_t i = 0; i < corpus.size(); i += 2) {
        const auto& b = corpus[i];
        const auto& a = corpus[i + 1];
        CHECK(b.label == 0);
        CHECK(a.label == 1);
        CHECK(a.window_id == b.window_id + "/fgsm");
        CHECK(b.split == kTrainSplit);
        CHECK(a.split == kTrainSplit);
        const std::size_t end = std::stoul(b.window_id.substr(b.window_id.find(':') + 1));
        CHECK((end - 9) % 2 == 0);  // even windows went to the first attack
        CHECK(b.values == clean[end - 9].values);
        CHECK(a.values != b.values);
    }
    SignatureRepository repo;
    repo.append(corpus);
    CHECK(repo.dataset(kTrainSplit).size() == corpus.size());
    CHECK_THROWS_AS(signature_corpus(model, windows, bg, {}, kTrainSplit), ConfigError);
}
