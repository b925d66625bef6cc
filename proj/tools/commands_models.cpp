// synth, train, eval, attack and transfer.

#include <sstream>

#include "commands.hpp"
#include "csd/attacks/attack.hpp"
#include "csd/classifiers/train.hpp"
#include "csd/data/csv.hpp"
#include "csd/data/normalize.hpp"
#include "csd/data/synth.hpp"

namespace csd::cli {

using nlohmann::json;

namespace {

clf::Family family_of(const Context& ctx, const CommandOptions& opt)
{
    return opt.family.value_or(ctx.config().model.family);
}

clf::LabeledSet test_set(const Context& ctx, const clf::Classifier& model)
{
    const auto trace = ctx.normalized_trace("test", model);
    return clf::to_labeled(data::window(trace, model.timestep(), ctx.config().data.test_stride));
}

std::string fmt(double v)
{
    return data::csv::format_double(v);
}

}  // namespace

void run_synth(const Context& ctx, const CommandOptions&)
{
    const auto& d = ctx.config().data;
    json manifest = {{"traces", json::object()}};
    for (std::size_t r = 0; r < kTraceRoles.size(); ++r) {
        const std::string& role = kTraceRoles[r];
        if (d.traces.count(role)) {
            ctx.log() << role << ": using " << d.traces.at(role) << "\n";
            manifest["traces"][role] = {{"source", d.traces.at(role)}};
            continue;
        }
        data::SynthConfig c = d.synth;
        c.seed = ctx.seed() + r;
        c.trace_id = role;
        if (role == "test") c.cycles = d.test_cycles;
        if (role == "stream") c.segments = d.stream_segments;
        const auto trace = data::synth_generate(c);
        data::write_trace_file(ctx.output("data/" + role + ".csv").string(), trace, ctx.header());
        manifest["traces"][role] = {{"source", "synthetic"},
                                    {"seed", c.seed},
                                    {"frames", trace.frame_count()},
                                    {"features", trace.feature_count()},
                                    {"sample_rate", trace.sample_rate}};
        ctx.log() << role << ": " << trace.frame_count() << " frames x " << trace.feature_count() << " features\n";
    }
    ctx.write_json("data/manifest.json", manifest);
}

void run_train(const Context& ctx, const CommandOptions& opt)
{
    const auto& cfg = ctx.config();
    const auto family = family_of(ctx, opt);
    auto [train_trace, stats] = data::fit_normalize(ctx.raw_trace("train"));
    const auto val_trace = data::apply_normalize(ctx.raw_trace("val"), stats);
    const auto train_set = clf::to_labeled(data::window(train_trace, cfg.data.timestep, cfg.data.train_stride));
    const auto val_set = clf::to_labeled(data::window(val_trace, cfg.data.timestep, cfg.data.val_stride));

    auto model = clf::build(cfg.arch(family, train_trace.feature_count()), ctx.seed());
    clf::TrainConfig tc = cfg.train;
    tc.seed = ctx.seed();
    ctx.log() << "training " << clf::to_string(family) << " on " << train_set.size() << " windows ("
              << val_set.size() << " validation)\n";
    const auto history = clf::train(model, train_set, val_set, tc);
    model.normalization = stats;
    model.training.config_hash = cfg.hash;

    const std::string name = clf::to_string(family);
    const auto path = ctx.output("models/" + name + ".bin");
    clf::save(model, path);

    std::ostringstream csv;
    csv << "# " << ctx.header() << "\nepoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
    for (const auto& e : history.epochs)
        csv << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.train_accuracy) << ',' << fmt(e.val_loss) << ','
            << fmt(e.val_accuracy) << '\n';
    ctx.write_text("models/" + name + "-history.csv", csv.str());
    const auto& best = history.epochs.at(history.best_epoch - 1);
    ctx.log() << "kept epoch " << history.best_epoch << " of " << history.epochs.size()
              << (history.stopped_early ? " (early stop)" : "") << ", validation accuracy "
              << fixed(best.val_accuracy) << "\nwrote " << path.string() << "\n";
}

void run_eval(const Context& ctx, const CommandOptions& opt)
{
    const auto family = family_of(ctx, opt);
    const auto model = ctx.load_model(family);
    const auto set = test_set(ctx, model);
    const auto m = clf::evaluate(model, set);
    const std::string name = clf::to_string(family);
    ctx.write_json("metrics/clean-" + name + ".json",
                   {{"model", name}, {"model_fingerprint", model.fingerprint()}, {"windows", set.size()},
                    {"metrics", metrics_json(m)}});
    ctx.log() << name << " test accuracy " << fixed(m.accuracy) << " macro F1 " << fixed(m.macro_f1) << " over "
              << set.size() << " windows\n";
}

void run_attack(const Context& ctx, const CommandOptions& opt)
{
    const auto& cfg = ctx.config();
    const auto family = family_of(ctx, opt);
    const auto model = ctx.load_model(family);
    const auto trace = ctx.normalized_trace("test", model);
    const auto windows = data::window(trace, model.timestep(), cfg.data.test_stride);
    const auto set = clf::to_labeled(windows);
    const auto clean = clf::evaluate(model, set);
    const std::string name = clf::to_string(family);

    json rows = json::array();
    std::ostringstream csv;
    csv << "# " << ctx.header() << "\nattack,accuracy,macro_f1,success_rate,mean_linf,max_linf,mean_l2,max_l2,mean_pcc\n";
    csv << "clean," << fmt(clean.accuracy) << ',' << fmt(clean.macro_f1) << ",0,0,0,0,0,1\n";
    ctx.log() << "clean accuracy " << fixed(clean.accuracy) << "\n";
    for (auto kind : cfg.attack.evaluate) {
        const auto& ac = cfg.attack_config(kind);
        const auto r = attack::evaluate_under_attack(model, set, ac);
        const std::string k = attack::to_string(kind);
        attack::write_adversarial_set(ctx.output("adversarial/" + name + "-" + k + ".csv"), r.adversarial, windows,
                                      trace.feature_names, ac, ctx.header());
        rows.push_back({{"attack", k},
                        {"config", attack::to_json(ac)},
                        {"metrics", metrics_json(r.metrics)},
                        {"success_rate", r.success_rate},
                        {"mean_linf", r.mean_linf},
                        {"max_linf", r.max_linf},
                        {"mean_l2", r.mean_l2},
                        {"max_l2", r.max_l2},
                        {"mean_pcc", r.mean_pcc},
                        {"pcc_count", r.pcc_count}});
        csv << k << ',' << fmt(r.metrics.accuracy) << ',' << fmt(r.metrics.macro_f1) << ',' << fmt(r.success_rate)
            << ',' << fmt(r.mean_linf) << ',' << fmt(r.max_linf) << ',' << fmt(r.mean_l2) << ',' << fmt(r.max_l2)
            << ',' << fmt(r.mean_pcc) << '\n';
        ctx.log() << k << " accuracy " << fixed(r.metrics.accuracy) << " success " << fixed(r.success_rate)
                  << " mean L2 " << fixed(r.mean_l2) << " mean PCC " << fixed(r.mean_pcc) << "\n";
    }
    ctx.write_json("metrics/attack-" + name + ".json",
                   {{"model", name}, {"windows", set.size()}, {"clean", metrics_json(clean)}, {"attacks", rows}});
    ctx.write_text("metrics/attack-" + name + ".csv", csv.str());
}

void run_transfer(const Context& ctx, const CommandOptions&)
{
    const auto& cfg = ctx.config();
    const auto source_family = cfg.model.transfer_source, target_family = cfg.model.family;
    if (source_family == target_family)
        throw ConfigError("'model.transfer_source' must differ from 'model.family' for a transfer run");
    const auto source = ctx.load_model(source_family);
    const auto target = ctx.load_model(target_family);
    if (!(source.normalization == target.normalization))
        throw ContractViolation("source and target models were trained with different normalization stats");
    const auto set = test_set(ctx, target);
    const std::string sname = clf::to_string(source_family), tname = clf::to_string(target_family);

    const double source_clean = clf::evaluate(source, set).accuracy;
    const double target_clean = clf::evaluate(target, set).accuracy;
    json rows = json::array();
    std::ostringstream csv;
    csv << "# " << ctx.header() << "\nattack,source,target,source_accuracy,target_accuracy,target_drop\n";
    csv << "clean," << sname << ',' << tname << ',' << fmt(source_clean) << ',' << fmt(target_clean) << ",0\n";
    for (const auto& ac : cfg.attack.transfer) {
        const auto adv = attack::craft(source, set.x, set.y, ac);
        const double white = attack::evaluate_on(source, adv, set.y).accuracy;
        const double black = attack::evaluate_on(target, adv, set.y).accuracy;
        const std::string k = attack::to_string(ac.kind);
        rows.push_back({{"attack", k},
                        {"config", attack::to_json(ac)},
                        {"source_accuracy", white},
                        {"target_accuracy", black},
                        {"target_drop", target_clean - black}});
        csv << k << ',' << sname << ',' << tname << ',' << fmt(white) << ',' << fmt(black) << ','
            << fmt(target_clean - black) << '\n';
        ctx.log() << k << " crafted on " << sname << ": " << sname << " " << fixed(white) << ", " << tname << " "
                  << fixed(black) << " (clean " << fixed(target_clean) << ")\n";
    }
    ctx.write_json("metrics/transfer.json", {{"source", sname},
                                             {"target", tname},
                                             {"windows", set.size()},
                                             {"source_clean_accuracy", source_clean},
                                             {"target_clean_accuracy", target_clean},
                                             {"attacks", rows}});
    ctx.write_text("metrics/transfer.csv", csv.str());
}

}  // namespace csd::cli
