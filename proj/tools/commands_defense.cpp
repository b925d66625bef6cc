// explain, sign, fit-detector and detect-eval.

#include <sstream>

#include "commands.hpp"
#include "csd/data/csv.hpp"
#include "csd/error.hpp"
#include "csd/explain/corpus.hpp"
#include "csd/explain/repository.hpp"
#include "csd/io/hash.hpp"

namespace csd::cli {

using nlohmann::json;

namespace {

std::string fmt(double v)
{
    return data::csv::format_double(v);
}

std::vector<detect::DetectorSpec> selected_specs(const Context& ctx, const CommandOptions& opt)
{
    if (opt.kind) return {ctx.config().detector_spec(*opt.kind)};
    return ctx.config().detector.specs;
}

xai::SignatureRepository load_repository(const Context& ctx)
{
    return xai::SignatureRepository::load(ctx.require(ctx.repository_path(), "csd sign"));
}

json metrics_json(const detect::DetectionMetrics& m)
{
    return {{"accuracy", m.accuracy},
            {"f1_normal", m.f1_normal},
            {"f1_attack", m.f1_attack},
            {"precision_attack", m.precision_attack},
            {"recall_attack", m.recall_attack},
            {"confusion", {{m.confusion[0][0], m.confusion[0][1]}, {m.confusion[1][0], m.confusion[1][1]}}},
            {"total", m.total}};
}

}  // namespace

void run_explain(const Context& ctx, const CommandOptions&)
{
    const auto& cfg = ctx.config();
    const auto model = ctx.load_model(cfg.model.family);
    const auto bg = ctx.background(model);
    const auto trace = ctx.normalized_trace("test", model);
    const auto windows = data::window(trace, model.timestep(), cfg.data.test_stride);
    const std::size_t count = std::min(cfg.explain.samples, windows.size());
    if (count == 0) throw ConfigError("'explain.samples' is 0; nothing to explain");

    std::ostringstream lines;
    lines << json{{"provenance", ctx.provenance()}, {"features", trace.feature_names}}.dump() << '\n';
    std::vector<xai::AttributionVector> all;
    for (std::size_t s = 0; s < count; ++s) {
        // Evenly spaced over the test trace so every episode is represented.
        const auto& w = windows[s * windows.size() / count];
        const int cls = clf::predict_label(model, w.values);
        auto a = xai::shap_input_sampled(model, w.values, bg, cls, cfg.explain.permutations,
                                         io::fnv1a(w.id(), io::kFnvOffset ^ ctx.seed()), cfg.explain.shap_mode);
        lines << json{{"window", w.id()},
                      {"label", std::string(data::to_string(w.label))},
                      {"explained_class", std::string(data::to_string(data::severity_from_index(cls)))},
                      {"exact", a.exact},
                      {"permutations", a.permutations},
                      {"values", a.values},
                      {"standard_error", a.standard_error}}
                     .dump()
              << '\n';
        all.push_back(std::move(a));
    }
    ctx.write_text("explain/attributions.jsonl", lines.str());

    std::ostringstream csv;
    csv << "# " << ctx.header() << "\nrank,feature,mean_abs_attribution\n";
    const auto ranking = xai::global_importance(all);
    for (std::size_t r = 0; r < ranking.size(); ++r)
        csv << r + 1 << ',' << trace.feature_names.at(ranking[r].feature) << ',' << fmt(ranking[r].mean_abs) << '\n';
    ctx.write_text("explain/importance.csv", csv.str());
    ctx.log() << "explained " << count << " windows; most important feature "
              << trace.feature_names.at(ranking.front().feature) << " (mean |phi| " << fixed(ranking.front().mean_abs)
              << ")\n";
}

void run_sign(const Context& ctx, const CommandOptions&)
{
    const auto& cfg = ctx.config();
    const auto model = ctx.load_model(cfg.model.family);
    const auto bg = ctx.background(model);
    std::vector<attack::AttackConfig> attacks;
    for (auto k : cfg.explain.corpus_attacks) attacks.push_back(cfg.attack_config(k));

    xai::SignatureRepository repo;
    json corpus = json::object();
    for (const auto& [role, split] : {std::pair{"sign-train", xai::kTrainSplit}, std::pair{"sign-test", xai::kTestSplit}}) {
        const auto trace = ctx.normalized_trace(role, model);
        const auto windows = data::window(trace, model.timestep(), cfg.data.sign_stride);
        xai::CorpusStats stats;
        repo.append(xai::signature_corpus(model, windows, bg, attacks, split, cfg.explain.signature_mode, &stats));
        json per = json::array();
        for (std::size_t k = 0; k < attacks.size(); ++k)
            per.push_back({{"attack", attack::to_string(attacks[k].kind)},
                           {"attempted", stats.attempted[k]},
                           {"succeeded", stats.succeeded[k]}});
        corpus[split] = {{"trace", role}, {"windows", stats.windows}, {"attacks", per}};
        ctx.log() << split << ": " << windows.size() << " windows";
        for (std::size_t k = 0; k < attacks.size(); ++k)
            ctx.log() << ", " << attack::to_string(attacks[k].kind) << " " << stats.succeeded[k] << "/"
                      << stats.attempted[k];
        ctx.log() << "\n";
    }
    json header = ctx.provenance();
    header["signature_fingerprint"] = xai::signature_fingerprint(model, cfg.explain.signature_mode);
    header["background_size"] = bg.size();
    header["corpus"] = corpus;
    const auto path = ctx.output(ctx.repository_path().lexically_relative(cfg.output_dir));
    repo.save(path, header);
    ctx.log() << "wrote " << repo.size() << " signatures to " << path.string() << "\n";
}

void run_fit_detector(const Context& ctx, const CommandOptions& opt)
{
    const auto& cfg = ctx.config();
    const auto repo = load_repository(ctx);
    // Self-labeled records from online runs join training only when online updates are on.
    const auto train = repo.dataset(xai::kTrainSplit, cfg.pipeline.online_updates);
    if (train.size() == 0) throw InsufficientDataError("the repository has no training signatures");
    for (auto spec : selected_specs(ctx, opt)) {
        spec.seed = ctx.seed();
        auto d = detect::train_detector(train.x, train.y, spec, train.model_fingerprint);
        d.config_hash = cfg.hash;
        const auto path = ctx.output(ctx.detector_path(spec.kind).lexically_relative(cfg.output_dir));
        detect::save(d, path);
        ctx.log() << detect::to_string(spec.kind) << " trained on " << train.size() << " signatures, wrote "
                  << path.string() << "\n";
    }
}

void run_detect_eval(const Context& ctx, const CommandOptions& opt)
{
    const auto repo = load_repository(ctx);
    const auto test = repo.dataset(xai::kTestSplit);
    if (test.size() == 0) throw InsufficientDataError("the repository has no test signatures");
    json rows = json::array();
    std::ostringstream csv;
    csv << "# " << ctx.header() << "\ndetector,accuracy,f1_normal,f1_attack,precision_attack,recall_attack,samples\n";
    for (const auto& spec : selected_specs(ctx, opt)) {
        const auto d = ctx.load_detector(spec.kind);
        if (d.signature_fingerprint() != test.model_fingerprint)
            throw ContractViolation("detector " + detect::to_string(spec.kind) + " was trained on signatures of " +
                                    d.signature_fingerprint() + ", the repository holds " + test.model_fingerprint);
        const auto m = detect::evaluate_detector(d, test.x, test.y);
        const std::string k = detect::to_string(spec.kind);
        rows.push_back({{"detector", k}, {"metrics", metrics_json(m)}, {"threshold", d.spec().threshold}});
        csv << k << ',' << fmt(m.accuracy) << ',' << fmt(m.f1_normal) << ',' << fmt(m.f1_attack) << ','
            << fmt(m.precision_attack) << ',' << fmt(m.recall_attack) << ',' << m.total << '\n';

        std::ostringstream sweep;
        sweep << "# " << ctx.header() << "\nthreshold,accuracy\n";
        for (const auto& p : detect::threshold_sweep(d.scores(test.x), test.y))
            sweep << fmt(p.threshold) << ',' << fmt(p.accuracy) << '\n';
        ctx.write_text("metrics/detection-sweep-" + k + ".csv", sweep.str());
        ctx.log() << k << " accuracy " << fixed(m.accuracy) << " F1 normal " << fixed(m.f1_normal) << " F1 attack "
                  << fixed(m.f1_attack) << " on " << m.total << " signatures\n";
    }
    ctx.write_json("metrics/detection.json", {{"samples", test.size()}, {"detectors", rows}});
    ctx.write_text("metrics/detection.csv", csv.str());
}

}  // namespace csd::cli
