#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"

#include "csd/detector/detector.hpp"
#include "csd/numerics/rng.hpp"

using namespace csd;
using namespace csd::detect;
using num::Shape;
using num::Tensor;

namespace {

struct Labeled {
    Tensor x;
    std::vector<int> y;
};

// Two Gaussian blobs in d dimensions whose means differ by `gap` along every axis.
Labeled blobs(std::size_t per_class, std::size_t d, double gap, std::uint64_t seed)
{
    num::SeededRng rng(seed);
    Labeled out{Tensor(Shape{2 * per_class, d}), {}};
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        const int label = i % 2 == 0 ? 0 : 1;
        for (std::size_t f = 0; f < d; ++f) out.x.at(i, f) = static_cast<float>(rng.normal() + label * gap);
        out.y.push_back(label);
    }
    return out;
}

DetectorSpec spec_of(Kind k, std::uint64_t seed = 3)
{
    DetectorSpec s;
    s.kind = k;
    s.seed = seed;
    return s;
}

double accuracy(const AttackDetector& d, const Labeled& set)
{
    return evaluate_detector(d, set.x, set.y).accuracy;
}

}  // namespace

TEST_CASE("separable blobs are detected by every kind")
{
    // Means 6 sigma apart along the diagonal of a 2-D plane.
    const double gap = 6.0 / std::sqrt(2.0);
    const auto train = blobs(100, 2, gap, 1), test = blobs(100, 2, gap, 2);
    for (Kind k : {Kind::RF, Kind::GBT, Kind::FFNN}) {
        CAPTURE(to_string(k));
        const auto d = train_detector(train.x, train.y, spec_of(k));
        CHECK(accuracy(d, test) >= 0.99);
        for (double s : d.scores(test.x)) {
            CHECK(s >= 0.0);
            CHECK(s <= 1.0);
        }
    }
}

TEST_CASE("unbounded random forest memorizes its training set")
{
    const auto train = blobs(150, 4, 0.8, 5);
    auto s = spec_of(Kind::RF);
    s.rf_max_depth = 0;
    const auto d = train_detector(train.x, train.y, s);
    CHECK(accuracy(d, train) >= 0.99);
}

TEST_CASE("training is deterministic per seed")
{
    const auto train = blobs(60, 6, 1.0, 7), test = blobs(30, 6, 1.0, 8);
    for (Kind k : {Kind::RF, Kind::GBT, Kind::FFNN}) {
        CAPTURE(to_string(k));
        const auto a = train_detector(train.x, train.y, spec_of(k, 11));
        const auto b = train_detector(train.x, train.y, spec_of(k, 11));
        CHECK(a.scores(test.x) == b.scores(test.x));
        REQUIRE(a.trees().size() == b.trees().size());
        for (std::size_t t = 0; t < a.trees().size(); ++t) {
            CHECK(a.trees()[t].feature == b.trees()[t].feature);
            CHECK(a.trees()[t].threshold == b.trees()[t].threshold);
            CHECK(a.trees()[t].value == b.trees()[t].value);
        }
        CHECK(a.fingerprint() == b.fingerprint());
    }
    const auto rf1 = train_detector(train.x, train.y, spec_of(Kind::RF, 11));
    const auto rf2 = train_detector(train.x, train.y, spec_of(Kind::RF, 12));
    CHECK(rf1.trees().front().threshold != rf2.trees().front().threshold);
}

TEST_CASE("tree shapes respect depth limits")
{
    const auto train = blobs(100, 5, 0.5, 9);
    const auto gbt = train_detector(train.x, train.y, spec_of(Kind::GBT));
    CHECK(gbt.trees().size() == 40);
    for (const auto& t : gbt.trees()) CHECK(t.depth() <= 3);
    auto s = spec_of(Kind::RF);
    s.rf_max_depth = 2;
    const auto rf = train_detector(train.x, train.y, s);
    CHECK(rf.trees().size() == 30);
    for (const auto& t : rf.trees()) CHECK(t.depth() <= 2);
}

TEST_CASE("single boosting stump matches a hand-computed Newton step")
{
    // g = p - y = [0.5, 0.5, -0.5, -0.5] and h = 0.25 at the balanced prior, so the
    // split at 1.5 gives leaves -G/H = -2 and +2; score = sigmoid(0.05 * leaf).
    const Tensor x(Shape{4, 1}, {0, 1, 2, 3});
    const std::vector<int> y{0, 0, 1, 1};
    auto s = spec_of(Kind::GBT);
    s.n_estimators = 1;
    s.gbt_max_depth = 1;
    s.l2_leaf = 0.0;
    s.min_child_weight = 0.0;
    const auto d = train_detector(x, y, s);
    REQUIRE(d.trees().size() == 1);
    const auto& t = d.trees().front();
    CHECK(t.feature[0] == 0);
    CHECK(t.threshold[0] == 1.5f);
    const auto scores = d.scores(x);
    CHECK(scores[0] == doctest::Approx(0.4750208125210601).epsilon(1e-12));
    CHECK(scores[3] == doctest::Approx(0.5249791874789399).epsilon(1e-12));
}

TEST_CASE("adding trees moves a forest score by at most one vote")
{
    const auto train = blobs(80, 6, 0.7, 13), test = blobs(50, 6, 0.7, 14);
    auto s = spec_of(Kind::RF);
    const auto small = train_detector(train.x, train.y, s);
    s.n_trees = 31;
    const auto large = train_detector(train.x, train.y, s);
    for (std::size_t t = 0; t < 30; ++t) CHECK(small.trees()[t].threshold == large.trees()[t].threshold);
    const auto a = small.scores(test.x), b = large.scores(test.x);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1.0 / 31.0 + 1e-12);
}

TEST_CASE("threshold rule and verdicts")
{
    CHECK(flag(0.7, 0.5));
    CHECK_FALSE(flag(0.5, 0.5));
    CHECK_FALSE(flag(0.2, 0.5));

    const auto train = blobs(40, 3, 4.0, 15);
    const auto d = train_detector(train.x, train.y, spec_of(Kind::RF));
    for (std::size_t i = 0; i < 10; ++i) {
        const auto row = train.x.data().subspan(i * 3, 3);
        const auto v = d.detect(row, "w" + std::to_string(i));
        CHECK(v.attack == (v.score > 0.5));
        CHECK(v.signature_id == "w" + std::to_string(i));
    }
    CHECK_THROWS_AS(d.detect(std::vector<float>{1.0f, 2.0f}), ContractViolation);
    CHECK_THROWS_AS(d.scores(Tensor(Shape{2, 4})), ContractViolation);
}

TEST_CASE("spec validation and training errors")
{
    auto s = spec_of(Kind::GBT);
    s.n_estimators = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    const auto train = blobs(10, 2, 3.0, 1);
    CHECK_THROWS_AS(train_detector(train.x, train.y, s), ConfigError);
    for (double tau : {0.0, 1.0, -0.1}) {
        auto t = spec_of(Kind::RF);
        t.threshold = tau;
        CHECK_THROWS_AS(t.validate(), ConfigError);
    }
    auto rf = spec_of(Kind::RF);
    rf.max_features = 3;
    CHECK_THROWS_AS(train_detector(train.x, train.y, rf), ConfigError);

    std::vector<int> ones(train.y.size(), 1);
    CHECK_THROWS_AS(train_detector(train.x, ones, spec_of(Kind::GBT)), DegenerateTrainingError);
    CHECK_THROWS_AS(train_detector(train.x, std::vector<int>(3, 0), spec_of(Kind::GBT)), ContractViolation);
    auto bad = train.y;
    bad[0] = 2;
    CHECK_THROWS_AS(train_detector(train.x, bad, spec_of(Kind::GBT)), ContractViolation);

    const auto j = to_json(spec_of(Kind::FFNN, 42));
    const auto back = detector_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(detector_from_json({{"kind", "rf"}}).kind == Kind::RF);
    CHECK_THROWS_AS(detector_from_json({{"trees", 3}}), ConfigError);
    CHECK_THROWS_AS(parse_kind("svm"), ConfigError);
}

TEST_CASE("binary metrics")
{
    SUBCASE("perfect detector")
    {
        const auto m = binary_metrics({0, 1, 1, 0}, {0, 1, 1, 0});
        CHECK(m.accuracy == 1.0);
        CHECK(m.f1_normal == 1.0);
        CHECK(m.f1_attack == 1.0);
    }
    SUBCASE("constant normal on a balanced set")
    {
        const auto m = binary_metrics({0, 1, 0, 1, 0, 1}, {0, 0, 0, 0, 0, 0});
        CHECK(m.accuracy == 0.5);
        CHECK(m.f1_attack == 0.0);
        CHECK(m.f1_normal == doctest::Approx(2.0 / 3.0));
        CHECK(m.confusion[1][0] == 3);
    }
    const auto train = blobs(20, 2, 3.0, 2);
    const auto d = train_detector(train.x, train.y, spec_of(Kind::GBT));
    CHECK_THROWS_AS(evaluate_detector(d, Tensor(Shape{0, 2}), {}), ContractViolation);
}

TEST_CASE("threshold sweep matches re-evaluation at every threshold")
{
    const auto train = blobs(60, 4, 1.0, 21), test = blobs(60, 4, 1.0, 22);
    const auto d = train_detector(train.x, train.y, spec_of(Kind::RF));
    const auto scores = d.scores(test.x);
    const auto sweep = threshold_sweep(scores, test.y);
    REQUIRE(sweep.size() >= 2);
    for (std::size_t i = 1; i < sweep.size(); ++i) CHECK(sweep[i].threshold > sweep[i - 1].threshold);
    for (const auto& p : sweep) {
        std::vector<int> predicted;
        for (double s : scores) predicted.push_back(flag(s, p.threshold));
        CHECK(p.accuracy == binary_metrics(test.y, predicted).accuracy);
    }
    CHECK(threshold_sweep({0.2, 0.8}, {0, 1}).front().threshold == 0.0);
}

TEST_CASE("detector files round trip")
{
    const auto train = blobs(40, 5, 1.5, 31), test = blobs(20, 5, 1.5, 32);
    for (Kind k : {Kind::RF, Kind::GBT, Kind::FFNN}) {
        CAPTURE(to_string(k));
        auto s = spec_of(k);
        s.epochs = 10;
        const auto d = train_detector(train.x, train.y, s, "lstm-abc/sig");
        std::stringstream buf;
        save(d, buf);
        const std::string bytes = buf.str();

        std::istringstream in(bytes);
        const auto back = load(in);
        CHECK(back.scores(test.x) == d.scores(test.x));
        CHECK(back.fingerprint() == d.fingerprint());
        CHECK(back.signature_fingerprint() == "lstm-abc/sig");

        std::string corrupt = bytes;
        corrupt[bytes.size() / 2] = static_cast<char>(corrupt[bytes.size() / 2] ^ 0x10);
        std::istringstream bad(corrupt);
        CHECK_THROWS_AS(load(bad), IoError);
        std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
        CHECK_THROWS_AS(load(truncated), TruncatedFileError);
        std::istringstream wrong("CSDMODEL" + bytes.substr(8));
        CHECK_THROWS_AS(load(wrong), SchemaError);
    }
}
