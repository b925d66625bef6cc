// simulate, compare and report.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "commands.hpp"
#include "csd/error.hpp"
#include "csd/explain/repository.hpp"
#include "csd/pipeline/stream.hpp"
#include "csd/version.hpp"

namespace csd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kModes = {"baseline", "attacked", "defended"};

fs::path run_log(const std::string& mode)
{
    return fs::path("runs") / (mode + ".jsonl");
}

pipeline::RunReport read_run(const Context& ctx, const std::string& mode)
{
    const auto path = ctx.require(ctx.config().output_dir / run_log(mode), "csd simulate --mode " + mode);
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return pipeline::read_event_log(in);
}

std::optional<json> read_json(const Context& ctx, const fs::path& relative)
{
    const fs::path p = ctx.config().output_dir / relative;
    if (!fs::exists(p)) return std::nullopt;
    std::ifstream in(p);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(p.string() + " is not valid JSON: " + e.what(), 0);
    }
}

std::string pct(double v)
{
    return fixed(100.0 * v, 1) + "%";
}

}  // namespace

void run_simulate(const Context& ctx, const CommandOptions& opt)
{
    const auto& cfg = ctx.config();
    std::vector<std::string> modes;
    if (opt.mode == "all") modes = kModes;
    else if (std::find(kModes.begin(), kModes.end(), opt.mode) != kModes.end()) modes = {opt.mode};
    else throw ConfigError("unknown simulate mode '" + opt.mode + "' (baseline, attacked, defended or all)");

    const auto model = ctx.load_model(cfg.model.family);
    const auto trace = ctx.normalized_trace("stream", model);
    std::optional<detect::AttackDetector> detector;
    std::optional<xai::BackgroundSet> background;
    std::optional<xai::SignatureRepository> online;
    if (std::find(modes.begin(), modes.end(), "defended") != modes.end()) {
        detector = ctx.load_detector(cfg.pipeline.detector);
        background = ctx.background(model);
        if (cfg.pipeline.online_updates) online = xai::SignatureRepository::load(ctx.require(ctx.repository_path(), "csd sign"));
    }

    for (const auto& mode : modes) {
        pipeline::PipelineConfig pc;
        pc.decision_interval = cfg.pipeline.decision_interval;
        pc.signature_mode = cfg.explain.signature_mode;
        pc.config_hash = cfg.hash;
        pc.seed = ctx.seed();
        if (mode != "baseline") {
            pipeline::InjectionSchedule s;
            s.start_seconds = cfg.pipeline.start_seconds;
            s.duration_seconds = cfg.pipeline.duration_seconds;
            s.attack = cfg.attack_config(cfg.pipeline.attack);
            s.attack.seed = ctx.seed();
            pc.schedule = s;
        }
        pipeline::StreamModels sm;
        sm.classifier = &model;
        sm.classifier_stats = &*model.normalization;
        xai::SignatureRepository fresh;
        if (mode == "defended") {
            sm.detector = &*detector;
            sm.background = &*background;
            if (online) {
                pc.online_updates = true;
                sm.online_repository = &fresh;
                // Seed the in-memory store so records already on disk are not added twice.
                for (const auto& r : online->records())
                    if (r.self_labeled) fresh.append({r});
            }
        }
        const auto report = pipeline::run_stream(trace, *model.normalization, sm, pc);

        std::ostringstream log;
        pipeline::write_event_log(log, report, kToolVersion);
        ctx.write_text(run_log(mode), log.str());
        std::ostringstream timeline;
        pipeline::write_timeline_csv(timeline, report, ctx.header() + " mode=" + mode);
        ctx.write_text("runs/" + mode + "-timeline.csv", timeline.str());
        if (online) {
            std::vector<xai::XaiSignature> added;
            for (const auto& r : fresh.records())
                if (!online->contains(r.window_id, r.model_fingerprint)) added.push_back(r);
            if (!added.empty()) xai::SignatureRepository::append_to_file(ctx.repository_path(), added, ctx.provenance());
            ctx.log() << "online updates: " << added.size() << " self-labeled signatures appended\n";
        }

        const auto& s = report.summary;
        ctx.log() << mode << ": " << s.frames << " decisions, accuracy " << fixed(s.accuracy) << ", attack frames "
                  << s.attack_frames << ", alerts " << s.alerts << " (" << s.flagged_attack_frames
                  << " in the attack window), p95 latency " << fixed(s.p95_latency * 1e3, 3) << " ms\n";
        for (const auto& w : report.warnings) ctx.log() << "warning: " << w << "\n";
    }
}

void run_compare(const Context& ctx, const CommandOptions&)
{
    const auto baseline = read_run(ctx, "baseline");
    std::vector<std::unique_ptr<pipeline::RunReport>> others;
    std::vector<std::pair<std::string, const pipeline::RunReport*>> named;
    std::vector<const pipeline::RunReport*> all = {&baseline};
    for (const auto& mode : {"attacked", "defended"}) {
        if (!fs::exists(ctx.config().output_dir / run_log(mode))) continue;
        others.push_back(std::make_unique<pipeline::RunReport>(read_run(ctx, mode)));
        named.emplace_back(mode, others.back().get());
        all.push_back(others.back().get());
    }
    const auto rows = pipeline::compare_runs(baseline, named);
    std::ostringstream cmp, sum;
    pipeline::write_comparison_csv(cmp, rows, ctx.header());
    ctx.write_text("runs/comparison.csv", cmp.str());
    pipeline::write_summary_csv(sum, all, ctx.header());
    ctx.write_text("runs/summary.csv", sum.str());
    if (ctx.config().pipeline.svg)
        ctx.write_text("runs/timeline.svg", pipeline::timeline_svg(all, "Mitigation action per mode"));
    for (const auto& r : rows)
        ctx.log() << r.name << ": action agreement " << fixed(r.action_agreement) << ", prediction agreement "
                  << fixed(r.prediction_agreement) << ", alerts " << r.alerts << "\n";
}

void run_report(const Context& ctx, const CommandOptions&)
{
    const auto& cfg = ctx.config();
    std::ostringstream md;
    md << "# Cybersickness attack and defense run\n\n"
       << "- tool version: " << kToolVersion << "\n- config hash: `" << cfg.hash << "`\n- seed: " << ctx.seed()
       << "\n\n";

    md << "## Clean classifiers\n\n";
    bool any = false;
    for (auto f : {clf::Family::LSTM, clf::Family::GRU, clf::Family::CNNLSTM}) {
        const auto j = read_json(ctx, "metrics/clean-" + clf::to_string(f) + ".json");
        if (!j) continue;
        if (!any) md << "| model | accuracy | macro F1 | windows |\n|---|---|---|---|\n";
        any = true;
        md << "| " << clf::to_string(f) << " | " << fixed(j->at("metrics").at("accuracy").get<double>()) << " | "
           << fixed(j->at("metrics").at("macro_f1").get<double>()) << " | " << j->at("windows") << " |\n";
    }
    if (!any) md << "Not available; run `csd eval`.\n";

    md << "\n## Accuracy under attack\n\n";
    const auto atk = read_json(ctx, "metrics/attack-" + clf::to_string(cfg.model.family) + ".json");
    if (atk) {
        md << "| attack | accuracy | success rate | mean L-inf | mean L2 | mean PCC |\n|---|---|---|---|---|---|\n"
           << "| none | " << fixed(atk->at("clean").at("accuracy").get<double>()) << " | | | | |\n";
        for (const auto& r : atk->at("attacks"))
            md << "| " << r.at("attack").get<std::string>() << " | "
               << fixed(r.at("metrics").at("accuracy").get<double>()) << " | "
               << fixed(r.at("success_rate").get<double>()) << " | " << fixed(r.at("mean_linf").get<double>()) << " | "
               << fixed(r.at("mean_l2").get<double>()) << " | " << fixed(r.at("mean_pcc").get<double>()) << " |\n";
    } else {
        md << "Not available; run `csd attack`.\n";
    }

    md << "\n## Transferability\n\n";
    if (const auto tr = read_json(ctx, "metrics/transfer.json")) {
        md << "Crafted on " << tr->at("source").get<std::string>() << ", scored on "
           << tr->at("target").get<std::string>() << " (clean "
           << fixed(tr->at("target_clean_accuracy").get<double>()) << ").\n\n"
           << "| attack | source accuracy | target accuracy | target drop |\n|---|---|---|---|\n";
        for (const auto& r : tr->at("attacks"))
            md << "| " << r.at("attack").get<std::string>() << " | " << fixed(r.at("source_accuracy").get<double>())
               << " | " << fixed(r.at("target_accuracy").get<double>()) << " | "
               << fixed(r.at("target_drop").get<double>()) << " |\n";
    } else {
        md << "Not available; run `csd transfer`.\n";
    }

    md << "\n## Attack detection on signatures\n\n";
    if (const auto det = read_json(ctx, "metrics/detection.json")) {
        md << "Held-out signatures: " << det->at("samples") << ".\n\n"
           << "| detector | accuracy | F1 normal | F1 attack |\n|---|---|---|---|\n";
        for (const auto& r : det->at("detectors"))
            md << "| " << r.at("detector").get<std::string>() << " | "
               << fixed(r.at("metrics").at("accuracy").get<double>()) << " | "
               << fixed(r.at("metrics").at("f1_normal").get<double>()) << " | "
               << fixed(r.at("metrics").at("f1_attack").get<double>()) << " |\n";
    } else {
        md << "Not available; run `csd detect-eval`.\n";
    }

    md << "\n## Closed loop\n\n";
    if (fs::exists(cfg.output_dir / run_log("baseline"))) {
        const auto baseline = read_run(ctx, "baseline");
        std::map<std::string, pipeline::RunReport> runs;
        std::vector<std::pair<std::string, const pipeline::RunReport*>> named;
        for (const auto& mode : {"attacked", "defended"})
            if (fs::exists(cfg.output_dir / run_log(mode))) runs.emplace(mode, read_run(ctx, mode));
        for (const auto& mode : {"attacked", "defended"})
            if (runs.count(mode)) named.emplace_back(mode, &runs.at(mode));
        const auto rows = pipeline::compare_runs(baseline, named);
        md << "| mode | decisions | accuracy | attack frames | alerted in window | false alerts | action agreement | "
              "prediction agreement |\n|---|---|---|---|---|---|---|---|\n";
        for (const auto& r : rows) {
            const auto& run = r.name == "baseline" ? baseline : runs.at(r.name);
            const auto& s = run.summary;
            md << "| " << r.name << " | " << s.frames << " | " << fixed(s.accuracy) << " | " << s.attack_frames
               << " | " << (s.attack_frames ? pct(s.attack_flagged_fraction) : std::string("-")) << " | "
               << s.false_alerts << " | " << pct(r.action_agreement) << " | " << pct(r.prediction_agreement)
               << " |\n";
        }
        md << "\nPer-frame series: `runs/<mode>-timeline.csv`; agreement table: `runs/comparison.csv` (from `csd "
              "compare`).\n";
    } else {
        md << "Not available; run `csd simulate`.\n";
    }
    ctx.write_text("report.md", md.str());
    ctx.log() << "wrote " << (cfg.output_dir / "report.md").string() << "\n";
}

}  // namespace csd::cli
