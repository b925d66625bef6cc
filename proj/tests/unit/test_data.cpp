#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"

#include "csd/data/normalize.hpp"
#include "csd/data/split.hpp"
#include "csd/data/synth.hpp"
#include "csd/data/trace.hpp"
#include "csd/data/window.hpp"

using namespace csd;
using namespace csd::data;

namespace {

SensorTrace ramp_trace(std::size_t frames, std::size_t features, const std::string& id = "ramp")
{
    SensorTrace tr;
    tr.id = id;
    tr.sample_rate = 10.0;
    for (std::size_t i = 0; i < features; ++i) tr.feature_names.push_back("f" + std::to_string(i));
    for (std::size_t t = 0; t < frames; ++t) {
        tr.timestamps.push_back(static_cast<double>(t) / 10.0);
        tr.labels.push_back(severity_from_index(static_cast<int>((t / 25) % 4)));
        for (std::size_t i = 0; i < features; ++i) tr.frames.push_back(static_cast<float>(t * 10 + i));
    }
    return tr;
}

std::vector<TimeSeriesWindow> labelled_windows(const std::vector<int>& class_counts)
{
    std::vector<TimeSeriesWindow> out;
    std::size_t k = 0;
    for (std::size_t c = 0; c < class_counts.size(); ++c)
        for (int i = 0; i < class_counts[c]; ++i) {
            TimeSeriesWindow w;
            w.values = num::Tensor(num::Shape{2, 1}, static_cast<float>(k));
            w.label = severity_from_index(static_cast<int>(c));
            w.source = "g" + std::to_string(k % 7);
            w.end_frame = k++;
            out.push_back(std::move(w));
        }
    return out;
}

}  // namespace

TEST_CASE("load_trace parses the CSV schema")
{
    std::istringstream in("timestamp,label,f1,f2\n0.0,none,1.5,2\n0.1,none,1.6,3\n0.2,low,1.7,4\n");
    auto tr = load_trace(in);
    CHECK(tr.frame_count() == 3);
    CHECK(tr.feature_count() == 2);
    CHECK(tr.labels[2] == Severity::Low);
    CHECK(tr.value(1, 1) == 3.0f);
    CHECK(tr.sample_rate == doctest::Approx(10.0));
}

TEST_CASE("load_trace errors")
{
    SUBCASE("missing label column")
    {
        std::istringstream in("timestamp,f1\n0.0,1\n");
        CHECK_THROWS_AS(load_trace(in), SchemaError);
    }
    SUBCASE("alternate vocabulary is renamed")
    {
        std::istringstream in("timestamp,label,f1\n0,slight,1\n1,moderate,1\n2,severe,1\n");
        auto tr = load_trace(in);
        CHECK(tr.labels == std::vector<Severity>{Severity::Low, Severity::Medium, Severity::High});
    }
    SUBCASE("non-numeric cell reports the row")
    {
        std::istringstream in("timestamp,label,f1\n0,none,1\n1,none,abc\n");
        try {
            load_trace(in);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.row() == 1);
        }
    }
    SUBCASE("NaN and empty cells are errors, not imputed")
    {
        std::istringstream nan_in("timestamp,label,f1\n0,none,nan\n");
        CHECK_THROWS_AS(load_trace(nan_in), ParseError);
        std::istringstream empty_in("timestamp,label,f1\n0,none,\n");
        CHECK_THROWS_AS(load_trace(empty_in), ParseError);
    }
    SUBCASE("unknown label")
    {
        std::istringstream in("timestamp,label,f1\n0,dizzy,1\n");
        CHECK_THROWS_AS(load_trace(in), ParseError);
    }
    SUBCASE("non-monotone timestamps")
    {
        std::istringstream in("timestamp,label,f1\n0,none,1\n0.2,none,1\n0.1,none,1\n");
        CHECK_THROWS_AS(load_trace(in), OrderingError);
    }
    SUBCASE("irregular spacing")
    {
        std::istringstream in("timestamp,label,f1\n0,none,1\n0.1,none,1\n0.2,none,1\n0.5,none,1\n");
        CHECK_THROWS_AS(load_trace(in), OrderingError);
    }
}

TEST_CASE("trace CSV write/read round trip with comment header")
{
    SynthConfig cfg;
    cfg.cycles = 1;
    cfg.frames_per_segment = 20;
    auto tr = synth_generate(cfg);
    std::stringstream buf;
    write_trace(buf, tr, "tool=csd config_hash=abc seed=1");
    TraceSchema schema;
    schema.trace_id = tr.id;
    auto back = load_trace(buf, schema);
    CHECK(back.frames == tr.frames);
    CHECK(back.labels == tr.labels);
    CHECK(back.timestamps == tr.timestamps);
    CHECK(back.feature_names == tr.feature_names);
}

TEST_CASE("min-max normalization")
{
    SensorTrace tr;
    tr.id = "n";
    tr.sample_rate = 1.0;
    tr.feature_names = {"unit", "even", "flat"};
    tr.timestamps = {0, 1, 2};
    tr.labels = {Severity::None, Severity::None, Severity::None};
    tr.frames = {0.0f, 2.0f, 5.0f, 0.5f, 4.0f, 5.0f, 1.0f, 6.0f, 5.0f};
    auto [norm, stats] = fit_normalize(tr);
    CHECK(norm.value(0, 0) == 0.0f);
    CHECK(norm.value(1, 0) == 0.5f);
    CHECK(norm.value(2, 0) == 1.0f);
    CHECK(norm.value(0, 1) == 0.0f);
    CHECK(norm.value(1, 1) == 0.5f);
    CHECK(norm.value(2, 1) == 1.0f);
    for (std::size_t t = 0; t < 3; ++t) CHECK(norm.value(t, 2) == 0.0f);
    CHECK(stats.degenerate == std::vector<bool>{false, false, true});

    SensorTrace later = tr;
    later.frames = {-1.0f, 8.0f, 5.0f, 2.0f, 3.0f, 1.0f, 0.25f, 5.0f, 9.0f};
    auto clipped = apply_normalize(later, stats);
    CHECK(clipped.value(0, 0) == 0.0f);
    CHECK(clipped.value(0, 1) == 1.0f);
    CHECK(clipped.value(1, 0) == 1.0f);
    CHECK(clipped.value(2, 0) == 0.25f);

    SensorTrace empty;
    empty.feature_names = {"a"};
    CHECK_THROWS_AS(fit_normalize(empty), ContractViolation);
}

TEST_CASE("normalize round trip on non-degenerate features")
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        SynthConfig cfg;
        cfg.seed = seed;
        cfg.cycles = 1;
        auto tr = synth_generate(cfg);
        auto [norm, stats] = fit_normalize(tr);
        auto back = denormalize(norm, stats);
        for (std::size_t t = 0; t < tr.frame_count(); ++t)
            for (std::size_t i = 0; i < tr.feature_count(); ++i) {
                const double tol = 1e-6 * std::max(1.0, std::abs(static_cast<double>(tr.value(t, i))));
                CHECK(std::abs(back.value(t, i) - tr.value(t, i)) <= tol);
            }
    }
}

TEST_CASE("windowing")
{
    auto tr = ramp_trace(300, 3);
    CHECK(window(tr, 90, 1).size() == 211);
    CHECK(window(tr, 90, 90).size() == 3);
    CHECK(window(ramp_trace(90, 3), 90, 1).size() == 1);
    CHECK_THROWS_AS(window(ramp_trace(89, 3), 90, 1), InsufficientDataError);

    auto ws = window(tr, 30, 7);
    for (const auto& w : ws) {
        CHECK(w.label == tr.labels[w.end_frame]);
        const std::size_t first = w.end_frame + 1 - 30;
        for (std::size_t t = 0; t < 30; ++t)
            for (std::size_t i = 0; i < 3; ++i) CHECK(w.values.at(t, i) == tr.value(first + t, i));
    }
    CHECK(ws.front().end_frame == 29);
    CHECK(ws[1].end_frame == 36);
}

TEST_CASE("window container round trip")
{
    auto tr = ramp_trace(120, 2);
    auto ws = window(tr, 30, 30);
    std::stringstream buf;
    write_windows(buf, ws, tr.feature_names, "header");
    std::vector<std::string> names;
    auto back = read_windows(buf, &names);
    REQUIRE(back.size() == ws.size());
    CHECK(names == tr.feature_names);
    for (std::size_t k = 0; k < ws.size(); ++k) {
        CHECK(back[k].values == ws[k].values);
        CHECK(back[k].label == ws[k].label);
        CHECK(back[k].id() == ws[k].id());
    }
}

TEST_CASE("synthetic generator")
{
    SUBCASE("noise-free limit is piecewise constant")
    {
        SynthConfig cfg;
        cfg.noise_scale = 0.0;
        cfg.rho = 0.0;
        cfg.oscillation_amplitude = 0.0;
        cfg.cycles = 2;
        auto tr = synth_generate(cfg);
        const auto mu = default_class_means(cfg.n_features);
        for (std::size_t t = 0; t < tr.frame_count(); ++t) {
            const auto c = static_cast<std::size_t>(index_of(tr.labels[t]));
            CHECK(c == (t / cfg.frames_per_segment) % 4);
            for (std::size_t i = 0; i < cfg.n_features; ++i)
                CHECK(tr.value(t, i) == static_cast<float>(mu[c][i]));
        }
    }
    SUBCASE("explicit episodes replace the class cycle")
    {
        SynthConfig cfg;
        cfg.segments = {{Severity::None, 30}, {Severity::High, 50}, {Severity::Low, 20}};
        auto tr = synth_generate(cfg);
        REQUIRE(tr.frame_count() == 100);
        CHECK(tr.labels[29] == Severity::None);
        CHECK(tr.labels[30] == Severity::High);
        CHECK(tr.labels[79] == Severity::High);
        CHECK(tr.labels[80] == Severity::Low);
        cfg.segments.push_back({Severity::Medium, 0});
        CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
    }
    SUBCASE("deterministic per seed")
    {
        SynthConfig cfg;
        auto a = synth_generate(cfg);
        auto b = synth_generate(cfg);
        CHECK(a.frames == b.frames);
        cfg.seed = 2;
        CHECK(synth_generate(cfg).frames != a.frames);
    }
    SUBCASE("degenerate configs are refused")
    {
        SynthConfig cfg;
        cfg.n_features = 3;
        cfg.class_means = {{1, 2, 3}, {1, 2, 4}, {5, 6, 7}, {8, 9, 1}};
        CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
        cfg.class_means = {{1, 2, 3}, {1, 3, 4}, {5, 6, 7}, {8, 9, 1}};
        CHECK_NOTHROW(synth_generate(cfg));
        cfg.rho = 1.0;
        CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
    }
    SUBCASE("class-conditional means match the configuration")
    {
        SynthConfig cfg;
        cfg.rho = 0.0;
        cfg.oscillation_amplitude = 0.0;
        cfg.frames_per_segment = 500;
        cfg.cycles = 20;  // 10k frames per class
        auto tr = synth_generate(cfg);
        const auto mu = default_class_means(cfg.n_features);
        const auto scale = default_feature_scale(cfg.n_features);
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t i = 0; i < cfg.n_features; ++i) {
                double total = 0.0;
                std::size_t n = 0;
                for (std::size_t t = 0; t < tr.frame_count(); ++t)
                    if (static_cast<std::size_t>(index_of(tr.labels[t])) == c) {
                        total += tr.value(t, i);
                        ++n;
                    }
                CHECK(n >= 10000);
                const double sigma = cfg.noise_scale * scale[i];
                CHECK(std::abs(total / static_cast<double>(n) - mu[c][i]) <= 3.0 * sigma / std::sqrt(n));
            }
    }
}

// Brute-force single-feature interval classifier over segment means: for each
// feature and each ordering of the four classes along that feature, search
// all placements of three cut points.
TEST_CASE("default synthetic corpus is separable by a one-feature stump")
{
    SynthConfig cfg;
    auto tr = synth_generate(cfg);
    const std::size_t segments = tr.frame_count() / cfg.frames_per_segment;
    double best = 0.0;
    for (std::size_t f = 0; f < cfg.n_features; ++f) {
        std::vector<std::pair<double, int>> pts;
        for (std::size_t s = 0; s < segments; ++s) {
            double total = 0.0;
            for (std::size_t t = s * cfg.frames_per_segment; t < (s + 1) * cfg.frames_per_segment; ++t)
                total += tr.value(t, f);
            pts.emplace_back(total / static_cast<double>(cfg.frames_per_segment),
                             index_of(tr.labels[s * cfg.frames_per_segment]));
        }
        std::sort(pts.begin(), pts.end());
        const std::size_t n = pts.size();
        std::array<int, 4> order{0, 1, 2, 3};
        do {
            // cut positions a <= b <= c split sorted points into four intervals
            for (std::size_t a = 0; a <= n; ++a)
                for (std::size_t b = a; b <= n; ++b)
                    for (std::size_t c = b; c <= n; ++c) {
                        std::size_t correct = 0;
                        for (std::size_t k = 0; k < n; ++k) {
                            const int bucket = k < a ? 0 : (k < b ? 1 : (k < c ? 2 : 3));
                            correct += pts[k].second == order[static_cast<std::size_t>(bucket)];
                        }
                        best = std::max(best, static_cast<double>(correct) / static_cast<double>(n));
                    }
        } while (std::next_permutation(order.begin(), order.end()));
    }
    CHECK(best >= 0.95);
}

TEST_CASE("split sizes and stratification")
{
    auto hundred = labelled_windows({25, 25, 25, 25});
    auto all = split_indices(hundred, {1.0, 0.0, 0.0}, 3, SplitMode::Random);
    CHECK(all.train.size() == 100);
    CHECK(all.val.empty());
    CHECK(all.test.empty());

    auto s = split_indices(hundred, {0.8, 0.1, 0.1}, 3, SplitMode::Random);
    CHECK(s.train.size() == 80);
    CHECK(s.val.size() == 10);
    CHECK(s.test.size() == 10);

    auto skewed = labelled_windows({40, 30, 20, 10});
    auto strat = split(skewed, {0.5, 0.5, 0.0}, 5, SplitMode::Stratified);
    std::array<int, 4> counts{};
    for (const auto& w : strat.train) ++counts[static_cast<std::size_t>(index_of(w.label))];
    CHECK(counts == std::array<int, 4>{20, 15, 10, 5});

    CHECK_THROWS_AS(split_indices(hundred, {1.2, -0.1, -0.1}, 1, SplitMode::Random), ConfigError);
    CHECK_THROWS_AS(split_indices(hundred, {0.5, 0.1, 0.1}, 1, SplitMode::Random), ContractViolation);
}

TEST_CASE("split is a disjoint exhaustive partition for every seed")
{
    auto ws = labelled_windows({37, 21, 30, 12});
    for (std::uint64_t seed = 0; seed < 50; ++seed)
        for (auto mode : {SplitMode::Random, SplitMode::Stratified, SplitMode::Grouped}) {
            auto s = split_indices(ws, {0.6, 0.2, 0.2}, seed, mode);
            std::vector<std::size_t> merged;
            for (auto* part : {&s.train, &s.val, &s.test}) merged.insert(merged.end(), part->begin(), part->end());
            std::sort(merged.begin(), merged.end());
            std::vector<std::size_t> expected(ws.size());
            std::iota(expected.begin(), expected.end(), std::size_t{0});
            CHECK(merged == expected);
            if (mode == SplitMode::Grouped) {
                std::set<std::string> train_groups, other_groups;
                for (auto i : s.train) train_groups.insert(ws[i].source);
                for (auto i : s.val) other_groups.insert(ws[i].source);
                for (auto i : s.test) other_groups.insert(ws[i].source);
                for (const auto& g : train_groups) CHECK(other_groups.count(g) == 0);
            }
        }
}
