#include <sstream>

#include "doctest.h"

#include "csd/classifiers/classifier.hpp"
#include "csd/data/normalize.hpp"
#include "csd/data/synth.hpp"
#include "csd/error.hpp"
#include "csd/pipeline/stream.hpp"

using namespace csd;
using namespace csd::pipeline;
using num::Shape;
using num::Tensor;

namespace {

constexpr std::size_t kT = 8;

struct Fixture {
    data::SensorTrace trace;
    data::NormalizationStats stats;
    clf::Classifier model;
    xai::BackgroundSet background;
    detect::AttackDetector detector;
};

data::SensorTrace raw_trace(std::size_t low, std::size_t high, std::uint64_t seed = 5)
{
    data::SynthConfig cfg;
    cfg.segments = {{data::Severity::None, low}, {data::Severity::High, high}, {data::Severity::Low, low}};
    cfg.seed = seed;
    return data::synth_generate(cfg);
}

Tensor windows_of(const data::SensorTrace& t, std::size_t stride)
{
    const std::size_t n = t.feature_count();
    std::vector<float> out;
    std::size_t count = 0;
    for (std::size_t end = kT - 1; end < t.frame_count(); end += stride, ++count)
        out.insert(out.end(), t.frames.begin() + static_cast<long>((end + 1 - kT) * n),
                   t.frames.begin() + static_cast<long>((end + 1) * n));
    return Tensor(Shape{count, kT, n}, std::move(out));
}

void truncate(data::SensorTrace& t, std::size_t frames)
{
    t.labels.resize(frames);
    t.timestamps.resize(frames);
    t.frames.resize(frames * t.feature_count());
}

attack::AttackConfig fgsm()
{
    attack::AttackConfig c;
    c.kind = attack::Kind::FGSM;
    c.epsilon = 0.2;
    return c;
}

// Untrained classifier plus a detector fitted on clean vs FGSM signatures.
// The loop logic under test does not depend on model quality.
const Fixture& fixture()
{
    static const Fixture f = [] {
        auto [trace, stats] = data::fit_normalize(raw_trace(60, 120));
        auto spec = clf::desk_preset(clf::Family::LSTM, kT, trace.feature_count());
        spec.recurrent_widths = {8};
        spec.dense_widths = {6};
        auto model = clf::build(spec, 9);
        const Tensor clean = windows_of(trace, 3);
        auto background = xai::make_background(model, clean, 20, 1);
        const auto labels = clf::predict_labels(model, clean);
        const auto crafted = attack::craft(model, clean, labels, fgsm());
        const std::size_t n = clean.dim(0), d = clean.size() / n;
        Tensor adv(clean.shape());
        for (std::size_t i = 0; i < n; ++i)
            std::copy(crafted[i].values.vec().begin(), crafted[i].values.vec().end(),
                      adv.vec().begin() + static_cast<long>(i * d));
        const auto s0 = xai::signatures(model, clean, background, xai::SignatureMode::AllClasses);
        const auto s1 = xai::signatures(model, adv, background, xai::SignatureMode::AllClasses);
        const std::size_t w = s0.front().values.size();
        Tensor x(Shape{2 * n, w});
        std::vector<int> y;
        for (std::size_t i = 0; i < 2 * n; ++i) {
            const auto& v = i < n ? s0[i].values : s1[i - n].values;
            std::copy(v.begin(), v.end(), x.vec().begin() + static_cast<long>(i * w));
            y.push_back(i < n ? 0 : 1);
        }
        detect::DetectorSpec ds;
        ds.kind = detect::Kind::GBT;
        auto detector = detect::train_detector(x, y, ds, xai::signature_fingerprint(model, xai::SignatureMode::AllClasses));
        return Fixture{std::move(trace), std::move(stats), std::move(model), std::move(background), std::move(detector)};
    }();
    return f;
}

StreamModels models(bool with_detector)
{
    const auto& f = fixture();
    StreamModels m;
    m.classifier = &f.model;
    m.classifier_stats = &f.stats;
    if (with_detector) {
        m.detector = &f.detector;
        m.background = &f.background;
    }
    return m;
}

PipelineConfig attacked_config(double start, double duration)
{
    PipelineConfig c;
    InjectionSchedule s;
    s.start_seconds = start;
    s.duration_seconds = duration;
    s.attack = fgsm();
    c.schedule = s;
    c.config_hash = "cafe";
    c.seed = 4;
    return c;
}

std::string log_of(const RunReport& r)
{
    std::ostringstream out;
    write_event_log(out, r, "test");
    return out.str();
}

void same_decisions(const PipelineEvent& a, const PipelineEvent& b)
{
    CHECK(a.frame == b.frame);
    CHECK(a.predicted == b.predicted);
    CHECK(a.probabilities == b.probabilities);
    CHECK(a.attack_active == b.attack_active);
    CHECK(a.verdict == b.verdict);
    CHECK(a.score == b.score);
    CHECK(a.action == b.action);
    CHECK(a.alert == b.alert);
}

}  // namespace

TEST_CASE("mitigation maps levels to actions and holds the previous action on an attack verdict")
{
    using A = MitigationAction;
    CHECK(mitigation_for(1, Verdict::Normal, A::NoMitigation).action == A::FoveatedDofBlur);
    CHECK(mitigation_for(0, Verdict::Normal, A::DynamicFovReduction).action == A::NoMitigation);
    CHECK(mitigation_for(2, Verdict::Disabled, A::NoMitigation).action == A::DynamicGaussianBlur);
    CHECK(mitigation_for(3, Verdict::Normal, A::NoMitigation).action == A::DynamicFovReduction);
    const auto held = mitigation_for(3, Verdict::Attack, A::DynamicGaussianBlur);
    CHECK(held.action == A::DynamicGaussianBlur);
    CHECK(held.alert);
    CHECK_FALSE(mitigation_for(3, Verdict::Normal, A::DynamicGaussianBlur).alert);
    CHECK_THROWS_AS(mitigation_for(4, Verdict::Normal, A::NoMitigation), ContractViolation);
    CHECK_THROWS_AS(mitigation_for(-1, Verdict::Attack, A::NoMitigation), ContractViolation);
    for (int i = 0; i < 4; ++i) CHECK(parse_action(to_string(static_cast<A>(i))) == static_cast<A>(i));
    CHECK_THROWS_AS(parse_action("blur"), SchemaError);
}

TEST_CASE("the injection schedule covers whole frames in the half-open interval")
{
    InjectionSchedule s;
    const auto r = s.frames(10.0);
    CHECK(r.begin == 600);
    CHECK(r.end == 1800);
    CHECK(r.size() == 1200);
    CHECK(r.contains(600));
    CHECK(r.contains(1799));
    CHECK_FALSE(r.contains(1800));
    s.start_seconds = 0.05;
    s.duration_seconds = 0.1;
    CHECK(s.frames(10.0).begin == 1);
    CHECK(s.frames(10.0).end == 2);
    s.start_seconds = -1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK(mode_name(false, false) == "baseline");
    CHECK(mode_name(true, false) == "attacked");
    CHECK(mode_name(true, true) == "defended");
}

TEST_CASE("baseline runs follow the classifier and never flag")
{
    const auto& f = fixture();
    PipelineConfig cfg;
    const auto r = run_stream(f.trace, f.stats, models(false), cfg);
    CHECK(r.mode == "baseline");
    REQUIRE(r.events.size() == f.trace.frame_count() - (kT - 1));
    CHECK(r.events.front().frame == kT - 1);
    for (const auto& e : r.events) {
        CHECK_FALSE(e.attack_active);
        CHECK(e.verdict == Verdict::Disabled);
        CHECK_FALSE(e.alert);
        CHECK(static_cast<int>(e.action) == e.predicted);
        double total = 0.0;
        for (float p : e.probabilities) total += p;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
    }
    CHECK(r.summary.frames == r.events.size());
    CHECK(r.summary.alerts == 0);

    PipelineConfig sparse;
    sparse.decision_interval = 5;
    const auto s = run_stream(f.trace, f.stats, models(false), sparse);
    REQUIRE(s.events.size() == (r.events.size() + 4) / 5);
    for (std::size_t i = 0; i < s.events.size(); ++i) same_decisions(s.events[i], r.events[i * 5]);
}

TEST_CASE("attack verdicts hold the previous action and raise an alert")
{
    const auto& f = fixture();
    const auto r = run_stream(f.trace, f.stats, models(true), attacked_config(6.0, 12.0));
    CHECK(r.mode == "defended");
    CHECK(r.summary.attack_frames == 120);
    MitigationAction previous = MitigationAction::NoMitigation;
    std::size_t flagged = 0;
    for (const auto& e : r.events) {
        CHECK(e.attack_active == (e.frame >= 60 && e.frame < 180));
        CHECK(e.verdict != Verdict::Disabled);
        CHECK((e.verdict == Verdict::Attack) == detect::flag(e.score, f.detector.spec().threshold));
        if (e.verdict == Verdict::Attack) {
            CHECK(e.alert);
            CHECK(e.action == previous);
            ++flagged;
        } else {
            CHECK_FALSE(e.alert);
            CHECK(static_cast<int>(e.action) == e.predicted);
        }
        previous = e.action;
    }
    CHECK(flagged == r.summary.alerts);
    CHECK(r.summary.alerts == r.summary.flagged_attack_frames + r.summary.false_alerts);
}

TEST_CASE("decisions depend only on frames up to the current one")
{
    const auto& f = fixture();
    const auto full = run_stream(f.trace, f.stats, models(true), attacked_config(6.0, 12.0));
    data::SensorTrace prefix = f.trace;
    const std::size_t keep = 130;
    truncate(prefix, keep);
    const auto part = run_stream(prefix, f.stats, models(true), attacked_config(6.0, 12.0));
    REQUIRE(part.events.size() == keep - (kT - 1));
    for (std::size_t i = 0; i < part.events.size(); ++i) same_decisions(part.events[i], full.events[i]);
    REQUIRE(part.warnings.size() == 1);
    CHECK(part.warnings.front().find("truncated") != std::string::npos);
    CHECK(full.warnings.empty());
}

TEST_CASE("repeated runs write byte-identical event logs that read back")
{
    const auto& f = fixture();
    const auto a = run_stream(f.trace, f.stats, models(true), attacked_config(6.0, 12.0));
    const auto b = run_stream(f.trace, f.stats, models(true), attacked_config(6.0, 12.0));
    const std::string log = log_of(a);
    CHECK(log == log_of(b));
    CHECK(log.find("latency") == std::string::npos);
    CHECK(log.find("\"config_hash\":\"cafe\"") != std::string::npos);

    std::istringstream in(log);
    const auto back = read_event_log(in);
    CHECK(back.mode == a.mode);
    CHECK(back.seed == 4);
    REQUIRE(back.events.size() == a.events.size());
    for (std::size_t i = 0; i < a.events.size(); ++i) same_decisions(back.events[i], a.events[i]);
    CHECK(back.summary.alerts == a.summary.alerts);
    CHECK(log_of(back) == log);

    std::istringstream empty("");
    CHECK_THROWS_AS(read_event_log(empty), SchemaError);
    std::istringstream broken(log.substr(0, log.find('\n') + 1) + "{\"frame\":\n");
    CHECK_THROWS_AS(read_event_log(broken), ParseError);
    std::istringstream future("{\"schema_version\":9}\n");
    CHECK_THROWS_AS(read_event_log(future), VersionMismatchError);
}

TEST_CASE("comparison with the baseline")
{
    const auto& f = fixture();
    const auto base = run_stream(f.trace, f.stats, models(false), PipelineConfig{});
    const auto atk = run_stream(f.trace, f.stats, models(false), attacked_config(6.0, 12.0));
    const auto rows = compare_runs(base, {{"baseline-again", &base}, {"attacked", &atk}});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].action_agreement == 1.0);
    CHECK(rows[1].action_agreement == 1.0);
    CHECK(rows[1].prediction_agreement == 1.0);
    CHECK(rows[2].attack_frames == 120);
    std::size_t same = 0;
    for (std::size_t i = 0; i < base.events.size(); ++i) same += base.events[i].action == atk.events[i].action;
    CHECK(rows[2].action_agreement == doctest::Approx(static_cast<double>(same) / base.events.size()));

    PipelineConfig sparse;
    sparse.decision_interval = 2;
    const auto other = run_stream(f.trace, f.stats, models(false), sparse);
    CHECK_THROWS_AS(compare_runs(base, {{"sparse", &other}}), ContractViolation);

    std::ostringstream csv;
    write_comparison_csv(csv, rows, "config_hash=cafe");
    CHECK(csv.str().rfind("# config_hash=cafe\nrun,", 0) == 0);
    const std::string svg = timeline_svg({&base, &atk}, "runs");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("summaries aggregate events")
{
    std::vector<PipelineEvent> ev(4);
    for (std::size_t i = 0; i < 4; ++i) {
        ev[i].frame = 10 + 2 * i;
        ev[i].latency_seconds = static_cast<double>(i + 1);
    }
    ev[0].true_label = 1;
    ev[0].predicted = 1;
    ev[0].action = MitigationAction::FoveatedDofBlur;
    ev[1].attack_active = true;
    ev[1].alert = true;
    ev[1].action = MitigationAction::FoveatedDofBlur;
    ev[2].attack_active = true;
    ev[2].true_label = 2;
    ev[3].alert = true;
    const auto s = summarize(ev, 10.0);
    CHECK(s.frames == 4);
    CHECK(s.accuracy == 0.75);
    CHECK(s.attack_frames == 2);
    CHECK(s.flagged_attack_frames == 1);
    CHECK(s.attack_flagged_fraction == 0.5);
    CHECK(s.alerts == 2);
    CHECK(s.false_alerts == 1);
    CHECK(s.dwell_seconds[0] == doctest::Approx(0.4));
    CHECK(s.dwell_seconds[1] == doctest::Approx(0.4));
    CHECK(s.mean_latency == 2.5);
    CHECK(s.p95_latency == 4.0);
}

TEST_CASE("the stream rejects mismatched inputs")
{
    const auto& f = fixture();
    data::NormalizationStats other = f.stats;
    other.max[0] += 1.0f;
    CHECK_THROWS_AS(run_stream(f.trace, other, models(false), PipelineConfig{}), ContractViolation);

    data::SensorTrace narrow = f.trace;
    narrow.feature_names.pop_back();
    std::vector<float> frames;
    for (std::size_t t = 0; t < narrow.frame_count(); ++t)
        for (std::size_t i = 0; i < narrow.feature_count(); ++i) frames.push_back(f.trace.value(t, i));
    narrow.frames = frames;
    CHECK_THROWS_AS(run_stream(narrow, f.stats, models(false), PipelineConfig{}), ContractViolation);

    data::SensorTrace tiny = f.trace;
    truncate(tiny, kT - 1);
    CHECK_THROWS_AS(run_stream(tiny, f.stats, models(false), PipelineConfig{}), InsufficientDataError);

    auto m = models(true);
    m.background = nullptr;
    CHECK_THROWS_AS(run_stream(f.trace, f.stats, m, PipelineConfig{}), ContractViolation);

    PipelineConfig zero;
    zero.decision_interval = 0;
    CHECK_THROWS_AS(run_stream(f.trace, f.stats, models(false), zero), ConfigError);
}

TEST_CASE("online updates store alerted signatures as self-labeled training records")
{
    const auto& f = fixture();
    xai::SignatureRepository repo;
    auto m = models(true);
    m.online_repository = &repo;
    auto cfg = attacked_config(6.0, 12.0);
    cfg.online_updates = true;
    const auto r = run_stream(f.trace, f.stats, m, cfg);
    CHECK(repo.size() == r.summary.alerts);
    for (const auto& rec : repo.records()) {
        CHECK(rec.self_labeled);
        CHECK(rec.label == 1);
        CHECK(rec.split == xai::kTrainSplit);
    }
    CHECK(repo.dataset(xai::kTrainSplit).size() == 0);
    if (repo.size() > 0) CHECK(repo.dataset(xai::kTrainSplit, true).size() == repo.size());
}
