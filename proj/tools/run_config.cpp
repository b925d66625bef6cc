#include "run_config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "csd/error.hpp"
#include "csd/io/hash.hpp"

namespace csd::cli {

using nlohmann::json;

namespace {

// Reads one JSON object, records every resolved value in `out` and rejects
// keys nobody asked for.
class Section {
public:
    Section(const json& in, std::string path) : path_(std::move(path))
    {
        if (!in.is_null() && !in.is_object()) throw ConfigError(where() + " must be an object");
        if (in.is_object()) in_ = in;
    }

    template <typename T>
    T get(const std::string& key, T fallback)
    {
        seen_.insert(key);
        if (in_.contains(key)) {
            try {
                fallback = in_.at(key).get<T>();
            } catch (const json::exception&) {
                throw ConfigError(where(key) + " has the wrong type (" + in_.at(key).dump() + ")");
            }
        }
        out[key] = fallback;
        return fallback;
    }

    // Raw sub-document (null when absent); the caller records the resolved form.
    json raw(const std::string& key)
    {
        seen_.insert(key);
        return in_.contains(key) ? in_.at(key) : json();
    }

    void finish() const
    {
        for (const auto& [key, value] : in_.items())
            if (!seen_.count(key)) throw ConfigError("unknown config key " + where(key));
    }

    std::string where(const std::string& key = {}) const
    {
        if (key.empty()) return path_.empty() ? "document" : "'" + path_ + "'";
        return "'" + (path_.empty() ? key : path_ + "." + key) + "'";
    }

    json out = json::object();

private:
    json in_ = json::object();
    std::string path_;
    std::set<std::string> seen_;
};

template <typename Parse>
auto parse_or_config(const std::string& where, Parse&& parse)
{
    try {
        return parse();
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    } catch (const IoError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

std::vector<attack::Kind> kinds_of(Section& s, const std::string& key, std::vector<std::string> fallback)
{
    const auto names = s.get(key, fallback);
    std::vector<attack::Kind> kinds;
    for (const auto& n : names) kinds.push_back(parse_or_config(s.where(key), [&] { return attack::parse_kind(n); }));
    return kinds;
}

// Library default for `kind`, with the user's fields merged over it.
attack::AttackConfig attack_with(attack::Kind kind, const json& user, std::uint64_t seed, const std::string& where)
{
    attack::AttackConfig base;
    base.kind = kind;
    base.seed = seed;
    json doc = attack::to_json(base);
    if (!user.is_null()) {
        if (!user.is_object()) throw ConfigError(where + " must be an object");
        if (user.contains("kind") && user.at("kind") != doc.at("kind"))
            throw ConfigError(where + " cannot change the attack kind");
        doc.merge_patch(user);
    }
    return parse_or_config(where, [&] {
        auto cfg = attack::attack_from_json(doc);
        cfg.validate();
        return cfg;
    });
}

DataSection read_data(const json& in, json& out)
{
    Section s(in, "data");
    DataSection d;
    d.timestep = s.get("timestep", d.timestep);
    d.train_stride = s.get("train_stride", d.train_stride);
    d.val_stride = s.get("val_stride", d.val_stride);
    d.test_stride = s.get("test_stride", d.test_stride);
    d.sign_stride = s.get("sign_stride", d.sign_stride);
    d.background_stride = s.get("background_stride", d.background_stride);
    d.test_cycles = s.get("test_cycles", d.test_cycles);
    for (std::size_t v : {d.timestep, d.train_stride, d.val_stride, d.test_stride, d.sign_stride,
                          d.background_stride, d.test_cycles})
        if (v == 0) throw ConfigError("data sizes and strides must be positive");

    Section g(s.raw("synth"), "data.synth");
    auto& c = d.synth;
    c.n_features = g.get("n_features", c.n_features);
    c.frames_per_segment = g.get("frames_per_segment", c.frames_per_segment);
    c.cycles = g.get("cycles", c.cycles);
    c.sample_rate = g.get("sample_rate", c.sample_rate);
    c.class_means = g.get("class_means", c.class_means);
    c.feature_scale = g.get("feature_scale", c.feature_scale);
    c.rho = g.get("rho", c.rho);
    c.noise_scale = g.get("noise_scale", c.noise_scale);
    c.oscillating_feature = g.get("oscillating_feature", c.oscillating_feature);
    c.oscillation_amplitude = g.get("oscillation_amplitude", c.oscillation_amplitude);
    c.oscillation_hz = g.get("oscillation_hz", c.oscillation_hz);
    g.finish();
    parse_or_config("'data.synth'", [&] {
        data::validate(c);
        return 0;
    });
    s.out["synth"] = g.out;

    // Suppression scenario by default: the attack window sits inside a long
    // high-severity episode, so an attack that lowers the predicted level is
    // visible as a withheld mitigation.
    const std::vector<std::pair<std::string, std::size_t>> fallback = {
        {"none", 400}, {"high", 1600}, {"medium", 500}, {"low", 500}};
    for (const auto& [name, frames] : s.get("stream_segments", fallback)) {
        const auto sev = data::parse_severity(name);
        if (!sev) throw ConfigError("'data.stream_segments' has unknown severity '" + name + "'");
        if (frames == 0) throw ConfigError("'data.stream_segments' has an empty episode");
        d.stream_segments.emplace_back(*sev, frames);
    }

    d.traces = s.get("traces", d.traces);
    for (const auto& [role, path] : d.traces)
        if (std::find(kTraceRoles.begin(), kTraceRoles.end(), role) == kTraceRoles.end())
            throw ConfigError("'data.traces' has unknown role '" + role + "'");

    Section sc(s.raw("schema"), "data.schema");
    d.schema.timestamp_column = sc.get("timestamp_column", d.schema.timestamp_column);
    d.schema.label_column = sc.get("label_column", d.schema.label_column);
    d.schema.feature_columns = sc.get("feature_columns", d.schema.feature_columns);
    const double rate = sc.get("sample_rate", 0.0);
    if (rate < 0.0) throw ConfigError("'data.schema.sample_rate' must be positive");
    if (rate > 0.0) d.schema.sample_rate = rate;
    sc.finish();
    s.out["schema"] = sc.out;
    s.finish();
    out = s.out;
    return d;
}

ModelSection read_model(const json& in, json& out)
{
    Section s(in, "model");
    ModelSection m;
    m.family = parse_or_config("'model.family'", [&] { return clf::parse_family(s.get<std::string>("family", "lstm")); });
    m.preset = s.get<std::string>("preset", "desk");
    if (m.preset != "desk" && m.preset != "full") throw ConfigError("'model.preset' must be \"desk\" or \"full\"");
    m.arch = s.raw("arch");
    if (m.arch.is_null()) m.arch = json::object();
    if (!m.arch.is_object()) throw ConfigError("'model.arch' must be an object");
    for (const char* fixed : {"family", "timestep", "n_features", "n_classes"})
        if (m.arch.contains(fixed))
            throw ConfigError(std::string("'model.arch.") + fixed + "' is set elsewhere in the config");
    s.out["arch"] = m.arch;
    m.transfer_source = parse_or_config("'model.transfer_source'",
                                        [&] { return clf::parse_family(s.get<std::string>("transfer_source", "gru")); });
    s.finish();
    out = s.out;
    return m;
}

clf::TrainConfig read_train(const json& in, json& out, std::uint64_t seed)
{
    Section s(in, "train");
    clf::TrainConfig t;
    t.learning_rate = s.get("learning_rate", t.learning_rate);
    t.epochs = s.get("epochs", t.epochs);
    t.batch_size = s.get("batch_size", t.batch_size);
    t.patience = s.get("patience", t.patience);
    t.clip_norm = s.get("clip_norm", t.clip_norm);
    t.seed = seed;
    s.finish();
    parse_or_config("'train'", [&] {
        t.validate();
        return 0;
    });
    out = s.out;
    return t;
}

AttackSection read_attack(const json& in, json& out, std::uint64_t seed)
{
    Section s(in, "attack");
    AttackSection a;
    a.fgsm = attack_with(attack::Kind::FGSM, s.raw("fgsm"), seed, "'attack.fgsm'");
    a.pgd = attack_with(attack::Kind::PGD, s.raw("pgd"), seed, "'attack.pgd'");
    a.cw = attack_with(attack::Kind::CW, s.raw("cw"), seed, "'attack.cw'");
    s.out["fgsm"] = attack::to_json(a.fgsm);
    s.out["pgd"] = attack::to_json(a.pgd);
    s.out["cw"] = attack::to_json(a.cw);
    a.evaluate = kinds_of(s, "evaluate", {"fgsm", "pgd", "cw"});

    // Transfer crafting starts from the configs above; C&W defaults to a
    // confidence margin because zero-margin examples sit on the source
    // model's boundary and rarely carry over to another model.
    Section t(s.raw("transfer"), "attack.transfer");
    const auto kinds = kinds_of(t, "kinds", {"pgd", "cw"});
    for (auto k : kinds) {
        const std::string name = attack::to_string(k);
        json patch = t.raw(name);
        if (patch.is_null()) patch = k == attack::Kind::CW ? json{{"kappa", 5.0}} : json::object();
        const auto& base = k == attack::Kind::FGSM ? a.fgsm : k == attack::Kind::PGD ? a.pgd : a.cw;
        json doc = attack::to_json(base);
        if (!patch.is_object()) throw ConfigError("'attack.transfer." + name + "' must be an object");
        doc.merge_patch(patch);
        auto cfg = parse_or_config("'attack.transfer." + name + "'", [&] {
            auto c = attack::attack_from_json(doc);
            c.validate();
            return c;
        });
        t.out[name] = patch;
        a.transfer.push_back(cfg);
    }
    t.finish();
    s.out["transfer"] = t.out;
    s.finish();
    out = s.out;
    return a;
}

ExplainSection read_explain(const json& in, json& out)
{
    Section s(in, "explain");
    ExplainSection e;
    e.background_size = s.get("background_size", e.background_size);
    if (e.background_size == 0) throw ConfigError("'explain.background_size' must be at least 1");
    e.signature_mode = parse_or_config("'explain.signature_mode'", [&] {
        return xai::parse_signature_mode(s.get<std::string>("signature_mode", "all-classes"));
    });
    const auto shap = s.get<std::string>("shap_mode", "auto");
    if (shap == "auto") e.shap_mode = xai::ShapMode::Auto;
    else if (shap == "exact") e.shap_mode = xai::ShapMode::Exact;
    else if (shap == "sampled") e.shap_mode = xai::ShapMode::Sampled;
    else throw ConfigError("'explain.shap_mode' must be auto, exact or sampled");
    e.permutations = s.get("permutations", e.permutations);
    if (e.permutations == 0) throw ConfigError("'explain.permutations' must be at least 1");
    e.samples = s.get("samples", e.samples);
    e.corpus_attacks = kinds_of(s, "corpus_attacks", {"fgsm", "pgd", "cw"});
    if (e.corpus_attacks.empty()) throw ConfigError("'explain.corpus_attacks' is empty");
    s.finish();
    out = s.out;
    return e;
}

DetectorSection read_detector(const json& in, json& out, std::uint64_t seed)
{
    Section s(in, "detector");
    DetectorSection d;
    const auto names = s.get<std::vector<std::string>>("kinds", {"gbt", "rf", "ffnn"});
    if (names.empty()) throw ConfigError("'detector.kinds' is empty");
    for (const char* key : {"rf", "gbt", "ffnn"}) {
        json patch = s.raw(key);
        if (patch.is_null()) patch = json::object();
        if (!patch.is_object()) throw ConfigError(std::string("'detector.") + key + "' must be an object");
        if (patch.contains("kind") && patch["kind"] != key)
            throw ConfigError(std::string("'detector.") + key + ".kind' must be \"" + key + "\" or omitted");
        detect::DetectorSpec base;
        base.kind = detect::parse_kind(key);
        base.seed = seed;
        json doc = detect::to_json(base);
        doc.merge_patch(patch);
        auto spec = parse_or_config(std::string("'detector.") + key + "'", [&] {
            auto sp = detect::detector_from_json(doc);
            sp.validate();
            return sp;
        });
        s.out[key] = detect::to_json(spec);
        if (std::find(names.begin(), names.end(), key) != names.end()) d.specs.push_back(spec);
    }
    for (const auto& n : names) {
        const auto k = parse_or_config("'detector.kinds'", [&] { return detect::parse_kind(n); });
        if (detect::to_string(k) != n) throw ConfigError("'detector.kinds' must use rf, gbt or ffnn, not '" + n + "'");
    }
    s.finish();
    out = s.out;
    return d;
}

PipelineSection read_pipeline(const json& in, json& out)
{
    Section s(in, "pipeline");
    PipelineSection p;
    p.start_seconds = s.get("start_seconds", p.start_seconds);
    p.duration_seconds = s.get("duration_seconds", p.duration_seconds);
    if (!(p.start_seconds >= 0.0) || !(p.duration_seconds >= 0.0))
        throw ConfigError("'pipeline' start and duration must be non-negative");
    p.attack = parse_or_config("'pipeline.attack'", [&] { return attack::parse_kind(s.get<std::string>("attack", "pgd")); });
    p.detector =
        parse_or_config("'pipeline.detector'", [&] { return detect::parse_kind(s.get<std::string>("detector", "gbt")); });
    p.decision_interval = s.get("decision_interval", p.decision_interval);
    if (p.decision_interval == 0) throw ConfigError("'pipeline.decision_interval' must be at least 1");
    p.online_updates = s.get("online_updates", p.online_updates);
    p.svg = s.get("svg", p.svg);
    s.finish();
    out = s.out;
    return p;
}

Seeds read_seeds(const json& in, json& out)
{
    Section s(in, "seeds");
    Seeds r;
    r.data = s.get("data", r.data);
    r.model = s.get("model", r.model);
    r.attack = s.get("attack", r.attack);
    r.explain = s.get("explain", r.explain);
    r.detector = s.get("detector", r.detector);
    r.pipeline = s.get("pipeline", r.pipeline);
    s.finish();
    out = s.out;
    return r;
}

}  // namespace

const attack::AttackConfig& RunConfig::attack_config(attack::Kind k) const
{
    switch (k) {
    case attack::Kind::FGSM: return attack.fgsm;
    case attack::Kind::PGD: return attack.pgd;
    case attack::Kind::CW: return attack.cw;
    }
    throw ContractViolation("unknown attack kind");
}

const detect::DetectorSpec& RunConfig::detector_spec(detect::Kind k) const
{
    for (const auto& s : detector.specs)
        if (s.kind == k) return s;
    throw ConfigError("detector kind '" + detect::to_string(k) + "' is not listed in 'detector.kinds'");
}

clf::ArchSpec RunConfig::arch(clf::Family f, std::size_t n_features) const
{
    clf::ArchSpec base = model.preset == "full" ? clf::full_scale_preset(f, n_features)
                                                : clf::desk_preset(f, data.timestep, n_features);
    base.timestep = data.timestep;
    json doc = clf::to_json(base);
    doc.merge_patch(model.arch);
    return parse_or_config("'model.arch'", [&] {
        auto spec = clf::arch_from_json(doc);
        spec.validate();
        return spec;
    });
}

void apply_override(json& doc, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
        if (!node->is_object()) {
            if (!node->is_null()) throw ConfigError("override '" + key + "' descends into a non-object");
            *node = json::object();
        }
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

RunConfig resolve(const json& doc)
{
    Section top(doc, "");
    RunConfig c;
    json out;
    c.seeds = read_seeds(top.raw("seeds"), out);
    top.out["seeds"] = out;
    c.data = read_data(top.raw("data"), out);
    top.out["data"] = out;
    c.model = read_model(top.raw("model"), out);
    top.out["model"] = out;
    c.train = read_train(top.raw("train"), out, c.seeds.model);
    top.out["train"] = out;
    c.attack = read_attack(top.raw("attack"), out, c.seeds.attack);
    top.out["attack"] = out;
    c.explain = read_explain(top.raw("explain"), out);
    top.out["explain"] = out;
    c.detector = read_detector(top.raw("detector"), out, c.seeds.detector);
    top.out["detector"] = out;
    c.pipeline = read_pipeline(top.raw("pipeline"), out);
    top.out["pipeline"] = out;
    const json dir = top.raw("output_dir");
    if (!dir.is_null()) {
        if (!dir.is_string() || dir.get<std::string>().empty()) throw ConfigError("'output_dir' must be a path");
        c.output_dir = dir.get<std::string>();
    }
    top.finish();
    // Surface architecture mistakes now rather than at the first `train`.
    for (auto f : {clf::Family::LSTM, clf::Family::GRU, clf::Family::CNNLSTM}) c.arch(f, 1);
    c.canonical = top.out;
    c.hash = io::to_hex(io::fnv1a(c.canonical.dump()));
    return c;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    for (const auto& o : overrides) apply_override(doc, o);
    return resolve(doc);
}

}  // namespace csd::cli
