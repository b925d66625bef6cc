#include "csd/pipeline/stream.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include "csd/data/csv.hpp"
#include "csd/error.hpp"

namespace csd::pipeline {

using num::Shape;
using num::Tensor;

namespace {

constexpr int kEventLogSchema = 1;

const char* const kActionNames[] = {"none", "foveated-dof-blur", "dynamic-gaussian-blur", "dynamic-fov-reduction"};

// ceil(x) that forgives binary rounding, so 60 s at 10 fps is frame 600.
std::size_t frame_ceil(double x)
{
    const double r = std::round(x);
    if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) return static_cast<std::size_t>(std::max(0.0, r));
    return static_cast<std::size_t>(std::max(0.0, std::ceil(x)));
}

Tensor window_tensor(const data::SensorTrace& trace, std::size_t end_frame, std::size_t timestep)
{
    const std::size_t n = trace.feature_count();
    const std::size_t first = end_frame + 1 - timestep;
    return Tensor(Shape{timestep, n}, std::vector<float>(trace.frames.begin() + static_cast<long>(first * n),
                                                         trace.frames.begin() + static_cast<long>((end_frame + 1) * n)));
}

std::vector<float> softmax(std::span<const float> z)
{
    double hi = -std::numeric_limits<double>::infinity();
    for (float v : z) hi = std::max(hi, static_cast<double>(v));
    std::vector<double> e(z.size());
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) total += e[i] = std::exp(static_cast<double>(z[i]) - hi);
    std::vector<float> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) p[i] = static_cast<float>(e[i] / total);
    return p;
}

}  // namespace

std::string to_string(MitigationAction a)
{
    return kActionNames[static_cast<int>(a)];
}

MitigationAction parse_action(const std::string& s)
{
    for (int i = 0; i < 4; ++i)
        if (s == kActionNames[i]) return static_cast<MitigationAction>(i);
    throw SchemaError("unknown mitigation action '" + s + "'");
}

std::string to_string(Verdict v)
{
    switch (v) {
    case Verdict::Normal: return "normal";
    case Verdict::Attack: return "attack";
    case Verdict::Disabled: return "disabled";
    }
    return "?";
}

Verdict parse_verdict(const std::string& s)
{
    if (s == "normal") return Verdict::Normal;
    if (s == "attack") return Verdict::Attack;
    if (s == "disabled") return Verdict::Disabled;
    throw SchemaError("unknown verdict '" + s + "'");
}

MitigationDecision mitigation_for(int level, Verdict verdict, MitigationAction previous)
{
    if (level < 0 || level > 3) throw ContractViolation("unknown cybersickness level " + std::to_string(level));
    if (verdict == Verdict::Attack) return {previous, true};
    return {static_cast<MitigationAction>(level), false};
}

void InjectionSchedule::validate() const
{
    if (!(start_seconds >= 0.0)) throw ConfigError("injection start must be non-negative");
    if (!(duration_seconds >= 0.0)) throw ConfigError("injection duration must be non-negative");
    attack.validate();
}

FrameRange InjectionSchedule::frames(double sample_rate) const
{
    if (!(sample_rate > 0.0)) throw ContractViolation("sample rate must be positive");
    return {frame_ceil(start_seconds * sample_rate), frame_ceil((start_seconds + duration_seconds) * sample_rate)};
}

std::string mode_name(bool has_schedule, bool has_detector)
{
    if (!has_schedule) return has_detector ? "baseline-defended" : "baseline";
    return has_detector ? "defended" : "attacked";
}

RunSummary summarize(const std::vector<PipelineEvent>& events, double sample_rate)
{
    RunSummary s;
    s.frames = events.size();
    if (events.empty()) return s;
    const std::size_t gap = events.size() > 1 ? events[1].frame - events[0].frame : 1;
    std::size_t correct = 0;
    std::vector<double> latency;
    latency.reserve(events.size());
    for (const auto& e : events) {
        correct += e.predicted == e.true_label;
        if (e.attack_active) {
            ++s.attack_frames;
            s.flagged_attack_frames += e.alert;
        } else if (e.alert) {
            ++s.false_alerts;
        }
        s.alerts += e.alert;
        s.dwell_seconds[static_cast<int>(e.action)] += static_cast<double>(gap) / sample_rate;
        latency.push_back(e.latency_seconds);
    }
    const auto n = static_cast<double>(events.size());
    s.accuracy = static_cast<double>(correct) / n;
    s.attack_flagged_fraction =
        s.attack_frames ? static_cast<double>(s.flagged_attack_frames) / static_cast<double>(s.attack_frames) : 0.0;
    double total = 0.0;
    for (double v : latency) total += v;
    s.mean_latency = total / n;
    std::sort(latency.begin(), latency.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * n));
    s.p95_latency = latency[std::max<std::size_t>(rank, 1) - 1];
    return s;
}

RunReport run_stream(const data::SensorTrace& trace, const data::NormalizationStats& trace_stats,
                     const StreamModels& models, const PipelineConfig& config)
{
    if (!models.classifier) throw ContractViolation("the stream needs a classifier");
    const clf::Model& model = *models.classifier;
    trace.validate();
    if (trace.feature_count() != model.n_features())
        throw ContractViolation("trace has " + std::to_string(trace.feature_count()) + " features, classifier expects " +
                                std::to_string(model.n_features()));
    if (trace_stats.feature_count() != trace.feature_count())
        throw ContractViolation("normalization stats do not cover the trace features");
    if (models.classifier_stats && !(*models.classifier_stats == trace_stats))
        throw ContractViolation("trace was normalized with different stats than the classifier was trained on");
    if (models.detector && !models.background) throw ContractViolation("a detector needs its background set");
    if (models.detector && !models.detector->signature_fingerprint().empty() &&
        models.detector->signature_fingerprint() != xai::signature_fingerprint(model, config.signature_mode))
        throw ContractViolation("detector was trained on signatures of another model (" +
                                models.detector->signature_fingerprint() + ")");
    if (config.decision_interval == 0) throw ConfigError("decision interval must be at least one frame");
    if (config.schedule) config.schedule->validate();

    const std::size_t timestep = model.timestep(), frames = trace.frame_count();
    if (frames < timestep)
        throw InsufficientDataError("trace has " + std::to_string(frames) + " frames, fewer than one window of " +
                                    std::to_string(timestep));

    RunReport report;
    report.mode = mode_name(config.schedule.has_value(), models.detector != nullptr);
    report.trace_id = trace.id;
    report.sample_rate = trace.sample_rate;
    report.config_hash = config.config_hash;
    report.seed = config.seed;

    FrameRange active;
    if (config.schedule) {
        active = config.schedule->frames(trace.sample_rate);
        if (active.end > frames) {
            std::ostringstream w;
            w << "injection schedule ends at frame " << active.end << " but the trace has " << frames
              << " frames; truncated";
            report.warnings.push_back(w.str());
            active.end = frames;
            active.begin = std::min(active.begin, frames);
        }
    }

    std::vector<std::size_t> decisions;
    for (std::size_t t = timestep - 1; t < frames; t += config.decision_interval) decisions.push_back(t);

    // Adversarial windows are crafted ahead of the replay. Crafting is
    // independent of batching, so this matches crafting inside the loop.
    std::vector<std::size_t> attacked;
    for (std::size_t t : decisions)
        if (active.contains(t)) attacked.push_back(t);
    std::vector<Tensor> adversarial(decisions.size());
    if (!attacked.empty()) {
        const std::size_t per = timestep * trace.feature_count();
        Tensor batch(Shape{attacked.size(), timestep, trace.feature_count()});
        for (std::size_t i = 0; i < attacked.size(); ++i) {
            const Tensor w = window_tensor(trace, attacked[i], timestep);
            std::copy(w.vec().begin(), w.vec().end(), batch.vec().begin() + static_cast<long>(i * per));
        }
        // The attacker pushes away from what the model currently says.
        const auto reference = clf::predict_labels(model, batch);
        attack::AttackConfig cfg = config.schedule->attack;
        const auto crafted = attack::craft(model, batch, reference, cfg);
        std::size_t k = 0;
        for (std::size_t d = 0; d < decisions.size(); ++d)
            if (k < attacked.size() && decisions[d] == attacked[k]) adversarial[d] = crafted[k++].values;
    }

    MitigationAction previous = MitigationAction::NoMitigation;
    report.events.reserve(decisions.size());
    for (std::size_t d = 0; d < decisions.size(); ++d) {
        const std::size_t t = decisions[d];
        PipelineEvent e;
        e.frame = t;
        e.offset_seconds = static_cast<double>(t) / trace.sample_rate;
        e.true_label = data::index_of(trace.labels[t]);
        e.attack_active = active.contains(t);
        const Tensor window = e.attack_active ? adversarial[d] : window_tensor(trace, t, timestep);

        const auto start = std::chrono::steady_clock::now();
        const Tensor batch = window.reshaped({1, timestep, trace.feature_count()});
        const Tensor z = clf::logits(model, batch);
        e.predicted = clf::argmax(z.data());
        e.probabilities = softmax(z.data());
        std::optional<xai::XaiSignature> sig;
        if (models.detector) {
            sig = xai::signatures(model, batch, *models.background, config.signature_mode).front();
            e.score = models.detector->score(sig->values);
            e.verdict = detect::flag(e.score, models.detector->spec().threshold) ? Verdict::Attack : Verdict::Normal;
        }
        e.latency_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        const auto decision = mitigation_for(e.predicted, e.verdict, previous);
        e.action = decision.action;
        e.alert = decision.alert;
        previous = e.action;

        if (e.alert && config.online_updates && models.online_repository) {
            sig->window_id = trace.id + ":" + std::to_string(t);
            sig->label = 1;
            sig->split = xai::kTrainSplit;
            sig->self_labeled = true;
            if (!models.online_repository->contains(sig->window_id, sig->model_fingerprint))
                models.online_repository->append({*sig});
        }
        report.events.push_back(std::move(e));
    }
    report.summary = summarize(report.events, trace.sample_rate);
    return report;
}

void write_event_log(std::ostream& out, const RunReport& report, const std::string& tool_version)
{
    const nlohmann::json header{
        {"schema_version", kEventLogSchema}, {"tool_version", tool_version}, {"config_hash", report.config_hash},
        {"seed", report.seed},               {"mode", report.mode},          {"trace_id", report.trace_id},
        {"sample_rate", report.sample_rate}, {"warnings", report.warnings},
    };
    out << header.dump() << '\n';
    for (const auto& e : report.events) {
        const nlohmann::json j{
            {"frame", e.frame},
            {"t", e.offset_seconds},
            {"true", e.true_label},
            {"pred", e.predicted},
            {"probs", e.probabilities},
            {"attack_active", e.attack_active},
            {"verdict", to_string(e.verdict)},
            {"score", e.score},
            {"action", to_string(e.action)},
            {"alert", e.alert},
        };
        out << j.dump() << '\n';
    }
}

RunReport read_event_log(std::istream& in)
{
    RunReport r;
    std::string line;
    std::size_t row = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++row;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("event log line " + std::to_string(row) + " is not JSON: " + e.what(), row);
        }
        try {
            if (!header) {
                if (!j.contains("schema_version")) throw SchemaError("event log has no header line");
                if (j.at("schema_version") != kEventLogSchema)
                    throw VersionMismatchError("event log schema " + j.at("schema_version").dump() + " is not supported");
                r.mode = j.at("mode").get<std::string>();
                r.trace_id = j.at("trace_id").get<std::string>();
                r.sample_rate = j.at("sample_rate").get<double>();
                r.config_hash = j.at("config_hash").get<std::string>();
                r.seed = j.at("seed").get<std::uint64_t>();
                r.warnings = j.at("warnings").get<std::vector<std::string>>();
                header = true;
                continue;
            }
            PipelineEvent e;
            e.frame = j.at("frame").get<std::size_t>();
            e.offset_seconds = j.at("t").get<double>();
            e.true_label = j.at("true").get<int>();
            e.predicted = j.at("pred").get<int>();
            e.probabilities = j.at("probs").get<std::vector<float>>();
            e.attack_active = j.at("attack_active").get<bool>();
            e.verdict = parse_verdict(j.at("verdict").get<std::string>());
            e.score = j.at("score").get<double>();
            e.action = parse_action(j.at("action").get<std::string>());
            e.alert = j.at("alert").get<bool>();
            r.events.push_back(std::move(e));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("event log line " + std::to_string(row) + ": " + e.what());
        }
    }
    if (!header) throw SchemaError("event log is empty");
    if (!(r.sample_rate > 0.0)) throw SchemaError("event log header has no valid sample rate");
    r.summary = summarize(r.events, r.sample_rate);
    return r;
}

std::vector<AgreementRow> compare_runs(const RunReport& baseline,
                                       const std::vector<std::pair<std::string, const RunReport*>>& others)
{
    std::vector<AgreementRow> rows;
    auto row_for = [&](const std::string& name, const RunReport& run) {
        if (run.events.size() != baseline.events.size())
            throw ContractViolation("run '" + name + "' covers " + std::to_string(run.events.size()) +
                                    " frames, baseline covers " + std::to_string(baseline.events.size()));
        AgreementRow r;
        r.name = name;
        r.frames = run.events.size();
        std::size_t actions = 0, preds = 0;
        for (std::size_t i = 0; i < run.events.size(); ++i) {
            const auto& a = run.events[i];
            const auto& b = baseline.events[i];
            if (a.frame != b.frame)
                throw ContractViolation("run '" + name + "' and the baseline disagree on frame order at event " +
                                        std::to_string(i));
            actions += a.action == b.action;
            preds += a.predicted == b.predicted;
            r.alerts += a.alert;
            r.attack_frames += a.attack_active;
        }
        if (r.frames) {
            r.action_agreement = static_cast<double>(actions) / static_cast<double>(r.frames);
            r.prediction_agreement = static_cast<double>(preds) / static_cast<double>(r.frames);
        }
        return r;
    };
    rows.push_back(row_for(baseline.mode.empty() ? "baseline" : baseline.mode, baseline));
    for (const auto& [name, run] : others) rows.push_back(row_for(name, *run));
    return rows;
}

namespace {

void write_header(std::ostream& out, const std::string& header)
{
    std::istringstream lines(header);
    for (std::string line; std::getline(lines, line);) out << "# " << line << '\n';
}

std::string fmt(double v)
{
    return data::csv::format_double(v);
}

}  // namespace

void write_comparison_csv(std::ostream& out, const std::vector<AgreementRow>& rows, const std::string& header)
{
    write_header(out, header);
    out << "run,frames,action_agreement,prediction_agreement,alerts,attack_frames\n";
    for (const auto& r : rows)
        out << r.name << ',' << r.frames << ',' << fmt(r.action_agreement) << ',' << fmt(r.prediction_agreement) << ','
            << r.alerts << ',' << r.attack_frames << '\n';
}

void write_summary_csv(std::ostream& out, const std::vector<const RunReport*>& runs, const std::string& header)
{
    write_header(out, header);
    out << "mode,frames,accuracy,attack_frames,flagged_attack_frames,attack_flagged_fraction,alerts,false_alerts";
    for (const char* a : kActionNames) out << ",dwell_" << a;
    out << '\n';
    for (const auto* r : runs) {
        const auto& s = r->summary;
        out << r->mode << ',' << s.frames << ',' << fmt(s.accuracy) << ',' << s.attack_frames << ','
            << s.flagged_attack_frames << ',' << fmt(s.attack_flagged_fraction) << ',' << s.alerts << ','
            << s.false_alerts;
        for (double d : s.dwell_seconds) out << ',' << fmt(d);
        out << '\n';
    }
}

void write_timeline_csv(std::ostream& out, const RunReport& run, const std::string& header)
{
    write_header(out, header);
    out << "frame,seconds,true_level,predicted_level,attack_active,verdict,alert,action\n";
    for (const auto& e : run.events)
        out << e.frame << ',' << fmt(e.offset_seconds) << ',' << e.true_label << ',' << e.predicted << ','
            << (e.attack_active ? 1 : 0) << ',' << to_string(e.verdict) << ',' << (e.alert ? 1 : 0) << ','
            << to_string(e.action) << '\n';
}

std::string timeline_svg(const std::vector<const RunReport*>& runs, const std::string& title)
{
    constexpr double width = 900, lane = 90, pad = 40;
    static const char* const colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    std::ostringstream svg;
    svg << std::fixed << std::setprecision(2);
    const double height = pad * 2 + lane * static_cast<double>(runs.size() + 1);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    svg << "<text x=\"" << pad << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
    if (runs.empty() || runs.front()->events.empty()) {
        svg << "</svg>\n";
        return svg.str();
    }
    const auto& ref = runs.front()->events;
    const double t0 = ref.front().offset_seconds, t1 = std::max(ref.back().offset_seconds, t0 + 1e-9);
    auto x_of = [&](double t) { return pad + (width - 2 * pad) * (t - t0) / (t1 - t0); };
    auto lane_line = [&](std::size_t lane_index, const std::vector<PipelineEvent>& events, bool truth,
                         const char* colour, const std::string& label) {
        const double base = pad + lane * static_cast<double>(lane_index + 1);
        auto y_of = [&](int level) { return base - (lane - 20) * level / 3.0; };
        svg << "<text x=\"2\" y=\"" << base - lane / 2 << "\" font-family=\"sans-serif\" font-size=\"10\">" << label
            << "</text>\n<polyline fill=\"none\" stroke=\"" << colour << "\" points=\"";
        for (const auto& e : events) {
            const int level = truth ? e.true_label : static_cast<int>(e.action);
            svg << x_of(e.offset_seconds) << ',' << y_of(level) << ' ';
        }
        svg << "\"/>\n";
        for (const auto& e : events)
            if (!truth && e.attack_active)
                svg << "<rect x=\"" << x_of(e.offset_seconds) << "\" y=\"" << base + 2
                    << "\" width=\"1\" height=\"4\" fill=\"#999\"/>\n";
    };
    lane_line(0, ref, true, "#000", "true");
    for (std::size_t i = 0; i < runs.size(); ++i)
        lane_line(i + 1, runs[i]->events, false, colours[i % 5], runs[i]->mode);
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace csd::pipeline
