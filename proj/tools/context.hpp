#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "csd/classifiers/classifier.hpp"
#include "csd/classifiers/metrics.hpp"
#include "csd/data/window.hpp"
#include "csd/detector/detector.hpp"
#include "csd/explain/shap.hpp"
#include "run_config.hpp"

namespace csd::cli {

// State shared by every command: the resolved config, the seed of the stage
// being run and helpers for the artifact tree under output_dir.
class Context {
public:
    Context(RunConfig config, std::string command, std::uint64_t seed, std::ostream& log);

    const RunConfig& config() const { return cfg_; }
    const std::string& command() const { return command_; }
    std::uint64_t seed() const { return seed_; }
    std::ostream& log() const { return log_; }

    // {tool_version, config_hash, seed, command} for JSON outputs.
    nlohmann::json provenance() const;
    // The same facts as one line, for CSV comment headers.
    std::string header() const;

    // Path under output_dir; parent directories are created.
    std::filesystem::path output(const std::filesystem::path& relative) const;
    // `path` when it exists, IoError naming the command that produces it otherwise.
    std::filesystem::path require(const std::filesystem::path& path, const std::string& producer) const;

    std::filesystem::path trace_path(const std::string& role) const;
    data::SensorTrace raw_trace(const std::string& role) const;
    // Trace normalized with the stats stored in `model`.
    data::SensorTrace normalized_trace(const std::string& role, const clf::Classifier& model) const;

    std::filesystem::path model_path(clf::Family f) const;
    clf::Classifier load_model(clf::Family f) const;
    std::filesystem::path detector_path(detect::Kind k) const;
    detect::AttackDetector load_detector(detect::Kind k) const;
    std::filesystem::path repository_path() const;

    // Background windows from the training trace, shared by explain, sign and simulate.
    xai::BackgroundSet background(const clf::Classifier& model) const;

    void write_json(const std::filesystem::path& relative, nlohmann::json body) const;
    void write_text(const std::filesystem::path& relative, const std::string& text) const;

private:
    RunConfig cfg_;
    std::string command_;
    std::uint64_t seed_;
    std::ostream& log_;
};

nlohmann::json metrics_json(const clf::ClassificationMetrics& m);
std::string fixed(double v, int digits = 4);

}  // namespace csd::cli
