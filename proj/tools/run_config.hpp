#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "csd/attacks/attack.hpp"
#include "csd/classifiers/arch.hpp"
#include "csd/classifiers/train.hpp"
#include "csd/data/synth.hpp"
#include "csd/data/trace.hpp"
#include "csd/detector/detector.hpp"
#include "csd/explain/shap.hpp"

namespace csd::cli {

// Trace roles produced by `synth` (or supplied as CSV files).
inline const std::vector<std::string> kTraceRoles = {"train", "val", "test", "sign-train", "sign-test", "stream"};

struct DataSection {
    data::SynthConfig synth;  // shared generator settings; seeds come from seeds.data
    std::size_t test_cycles = 8;
    std::vector<std::pair<data::Severity, std::size_t>> stream_segments;
    std::size_t timestep = 30;
    std::size_t train_stride = 1;
    std::size_t val_stride = 5;
    std::size_t test_stride = 30;
    std::size_t sign_stride = 8;
    std::size_t background_stride = 10;
    std::map<std::string, std::string> traces;  // role -> CSV path, replaces the synthetic trace
    data::TraceSchema schema;
};

struct ModelSection {
    clf::Family family = clf::Family::LSTM;
    std::string preset = "desk";  // "desk" | "full"
    nlohmann::json arch = nlohmann::json::object();  // overrides merged into the preset
    clf::Family transfer_source = clf::Family::GRU;
};

struct AttackSection {
    attack::AttackConfig fgsm, pgd, cw;
    std::vector<attack::Kind> evaluate;
    std::vector<attack::AttackConfig> transfer;  // configs crafted on the transfer source
};

struct ExplainSection {
    std::size_t background_size = xai::kDefaultBackgroundSize;
    xai::SignatureMode signature_mode = xai::SignatureMode::AllClasses;
    xai::ShapMode shap_mode = xai::ShapMode::Auto;
    std::size_t permutations = 200;
    std::size_t samples = 32;
    std::vector<attack::Kind> corpus_attacks;
};

struct DetectorSection {
    std::vector<detect::DetectorSpec> specs;  // one per kind, in config order
};

struct PipelineSection {
    double start_seconds = 60.0;
    double duration_seconds = 120.0;
    attack::Kind attack = attack::Kind::PGD;
    detect::Kind detector = detect::Kind::GBT;
    std::size_t decision_interval = 1;
    bool online_updates = false;
    bool svg = true;
};

struct Seeds {
    std::uint64_t data = 11, model = 1, attack = 0, explain = 0, detector = 0, pipeline = 0;
};

struct RunConfig {
    DataSection data;
    ModelSection model;
    clf::TrainConfig train;
    AttackSection attack;
    ExplainSection explain;
    DetectorSection detector;
    PipelineSection pipeline;
    Seeds seeds;
    std::filesystem::path output_dir = "csd-out";

    nlohmann::json canonical;  // fully resolved document without output_dir
    std::string hash;          // FNV-1a of canonical.dump()

    const attack::AttackConfig& attack_config(attack::Kind k) const;
    const detect::DetectorSpec& detector_spec(detect::Kind k) const;
    clf::ArchSpec arch(clf::Family f, std::size_t n_features) const;
};

// Applies "a.b.c=value" overrides to a raw document. The value is parsed
// as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Resolves defaults and validates. Unknown keys anywhere raise ConfigError.
RunConfig resolve(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace csd::cli
