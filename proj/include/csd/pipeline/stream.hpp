#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "csd/attacks/attack.hpp"
#include "csd/classifiers/model.hpp"
#include "csd/data/normalize.hpp"
#include "csd/data/trace.hpp"
#include "csd/detector/detector.hpp"
#include "csd/explain/repository.hpp"
#include "csd/explain/shap.hpp"

namespace csd::pipeline {

enum class MitigationAction { NoMitigation, FoveatedDofBlur, DynamicGaussianBlur, DynamicFovReduction };

std::string to_string(MitigationAction a);
MitigationAction parse_action(const std::string& s);

enum class Verdict { Normal, Attack, Disabled };

std::string to_string(Verdict v);
Verdict parse_verdict(const std::string& s);

struct MitigationDecision {
    MitigationAction action = MitigationAction::NoMitigation;
    bool alert = false;
};

// Severity level (0..3) to action. An attack verdict raises an alert,
// discards the sample and keeps `previous`. Throws ContractViolation for a
// level outside 0..3.
MitigationDecision mitigation_for(int level, Verdict verdict, MitigationAction previous);

struct FrameRange {
    std::size_t begin = 0;  // first active frame
    std::size_t end = 0;    // one past the last
    bool contains(std::size_t f) const { return f >= begin && f < end; }
    std::size_t size() const { return end > begin ? end - begin : 0; }
};

struct InjectionSchedule {
    double start_seconds = 60.0;
    double duration_seconds = 120.0;
    attack::AttackConfig attack;

    void validate() const;  // ConfigError
    // Frames whose offset t / rate lies in [start, start + duration).
    FrameRange frames(double sample_rate) const;
};

struct PipelineConfig {
    std::optional<InjectionSchedule> schedule;
    std::size_t decision_interval = 1;  // frames between decisions once warm
    xai::SignatureMode signature_mode = xai::SignatureMode::AllClasses;
    // Append alerted signatures to the online repository as self-labeled records.
    bool online_updates = false;
    std::string config_hash;  // recorded in report headers
    std::uint64_t seed = 0;
};

// The model side of the loop. The detector needs the background set its
// signatures were computed against.
struct StreamModels {
    const clf::Model* classifier = nullptr;
    const data::NormalizationStats* classifier_stats = nullptr;  // stats the classifier was trained on
    const detect::AttackDetector* detector = nullptr;
    const xai::BackgroundSet* background = nullptr;
    xai::SignatureRepository* online_repository = nullptr;
};

struct PipelineEvent {
    std::size_t frame = 0;
    double offset_seconds = 0.0;
    int true_label = 0;
    int predicted = 0;
    std::vector<float> probabilities;
    bool attack_active = false;
    Verdict verdict = Verdict::Disabled;
    double score = 0.0;  // detector score; 0 when disabled
    MitigationAction action = MitigationAction::NoMitigation;
    bool alert = false;
    double latency_seconds = 0.0;  // classify + sign + detect; never written to the event log
};

struct RunSummary {
    std::size_t frames = 0;
    double accuracy = 0.0;
    std::size_t attack_frames = 0;
    std::size_t flagged_attack_frames = 0;
    double attack_flagged_fraction = 0.0;
    std::size_t alerts = 0;
    std::size_t false_alerts = 0;  // alerts outside the attack interval
    double dwell_seconds[4] = {0, 0, 0, 0};  // per MitigationAction
    double mean_latency = 0.0;
    double p95_latency = 0.0;
};

struct RunReport {
    std::string mode;  // baseline | attacked | defended
    std::string trace_id;
    double sample_rate = 0.0;
    std::vector<PipelineEvent> events;
    RunSummary summary;
    std::vector<std::string> warnings;
    std::string config_hash;
    std::uint64_t seed = 0;
};

// Pure aggregation of events.
RunSummary summarize(const std::vector<PipelineEvent>& events, double sample_rate);

// Replays a normalized trace frame by frame. `trace_stats` are the stats the
// trace was normalized with; they must equal models.classifier_stats when
// both are known (ContractViolation otherwise).
RunReport run_stream(const data::SensorTrace& trace, const data::NormalizationStats& trace_stats,
                     const StreamModels& models, const PipelineConfig& config);

// "baseline", "attacked" or "defended" from the presence of a schedule and detector.
std::string mode_name(bool has_schedule, bool has_detector);

// Event log: a header object, then one event per line.
void write_event_log(std::ostream& out, const RunReport& report, const std::string& tool_version);
RunReport read_event_log(std::istream& in);

struct AgreementRow {
    std::string name;
    std::size_t frames = 0;
    double action_agreement = 0.0;
    double prediction_agreement = 0.0;
    std::size_t alerts = 0;
    std::size_t attack_frames = 0;
};

// Frame-level agreement of every run with the baseline. Throws
// ContractViolation when the runs cover different frames.
std::vector<AgreementRow> compare_runs(const RunReport& baseline,
                                       const std::vector<std::pair<std::string, const RunReport*>>& others);

void write_comparison_csv(std::ostream& out, const std::vector<AgreementRow>& rows, const std::string& header);
void write_summary_csv(std::ostream& out, const std::vector<const RunReport*>& runs, const std::string& header);
// Per-frame series for plotting: frame, seconds, true, predicted, flags, action.
void write_timeline_csv(std::ostream& out, const RunReport& run, const std::string& header);
// Minimal self-contained SVG with one step line per run plus the true level.
std::string timeline_svg(const std::vector<const RunReport*>& runs, const std::string& title);

}  // namespace csd::pipeline
