#include "context.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "csd/data/normalize.hpp"
#include "csd/error.hpp"
#include "csd/version.hpp"

namespace csd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

Context::Context(RunConfig config, std::string command, std::uint64_t seed, std::ostream& log)
    : cfg_(std::move(config)), command_(std::move(command)), seed_(seed), log_(log)
{
}

json Context::provenance() const
{
    return {{"tool_version", kToolVersion}, {"config_hash", cfg_.hash}, {"seed", seed_}, {"command", command_}};
}

std::string Context::header() const
{
    return std::string("tool_version=") + kToolVersion + " config_hash=" + cfg_.hash + " seed=" +
           std::to_string(seed_) + " command=" + command_;
}

fs::path Context::output(const fs::path& relative) const
{
    const fs::path p = cfg_.output_dir / relative;
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + p.parent_path().string() + ": " + ec.message());
    return p;
}

fs::path Context::require(const fs::path& p, const std::string& producer) const
{
    if (!fs::exists(p)) throw IoError("missing " + p.string() + "; run `" + producer + "` first");
    return p;
}

fs::path Context::trace_path(const std::string& role) const
{
    const auto it = cfg_.data.traces.find(role);
    if (it != cfg_.data.traces.end()) return it->second;
    return cfg_.output_dir / "data" / (role + ".csv");
}

data::SensorTrace Context::raw_trace(const std::string& role) const
{
    const auto user = cfg_.data.traces.find(role);
    if (user != cfg_.data.traces.end() && !fs::exists(user->second))
        throw IoError("trace file " + user->second + " for role '" + role + "' does not exist");
    const fs::path p = require(trace_path(role), "csd synth");
    data::TraceSchema schema = cfg_.data.schema;
    schema.trace_id = role;
    return data::load_trace_file(p.string(), schema);
}

data::SensorTrace Context::normalized_trace(const std::string& role, const clf::Classifier& model) const
{
    if (!model.normalization) throw SchemaError("model file carries no normalization stats; retrain it with `csd train`");
    return data::apply_normalize(raw_trace(role), *model.normalization);
}

fs::path Context::model_path(clf::Family f) const
{
    return cfg_.output_dir / "models" / (clf::to_string(f) + ".bin");
}

clf::Classifier Context::load_model(clf::Family f) const
{
    return clf::load_expecting(require(model_path(f), "csd train --family " + clf::to_string(f)), f);
}

fs::path Context::detector_path(detect::Kind k) const
{
    return cfg_.output_dir / "detectors" / (detect::to_string(k) + ".bin");
}

detect::AttackDetector Context::load_detector(detect::Kind k) const
{
    return detect::load(require(detector_path(k), "csd fit-detector --kind " + detect::to_string(k)));
}

fs::path Context::repository_path() const
{
    return cfg_.output_dir / "signatures" / "repository.jsonl";
}

xai::BackgroundSet Context::background(const clf::Classifier& model) const
{
    const auto trace = normalized_trace("train", model);
    const auto windows = data::window(trace, model.timestep(), cfg_.data.background_stride);
    return xai::make_background(model, data::stack(windows), cfg_.explain.background_size, cfg_.seeds.explain);
}

void Context::write_json(const fs::path& relative, json body) const
{
    body["provenance"] = provenance();
    write_text(relative, body.dump(2) + "\n");
}

void Context::write_text(const fs::path& relative, const std::string& text) const
{
    const fs::path p = output(relative);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out) throw IoError("failed writing " + p.string());
}

json metrics_json(const clf::ClassificationMetrics& m)
{
    json per_class = json::array();
    for (std::size_t c = 0; c < m.support.size(); ++c)
        per_class.push_back({{"class", std::string(data::to_string(data::severity_from_index(static_cast<int>(c))))},
                             {"precision", m.precision[c]},
                             {"recall", m.recall[c]},
                             {"f1", m.f1[c]},
                             {"support", m.support[c]}});
    return {{"accuracy", m.accuracy},         {"macro_precision", m.macro_precision},
            {"macro_recall", m.macro_recall}, {"macro_f1", m.macro_f1},
            {"confusion", m.confusion},       {"per_class", per_class},
            {"absent_classes", m.absent_classes}, {"total", m.total}};
}

std::string fixed(double v, int digits)
{
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

}  // namespace csd::cli
