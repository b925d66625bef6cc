#pragma once

#include <optional>
#include <string>

#include "context.hpp"

namespace csd::cli {

struct CommandOptions {
    std::optional<clf::Family> family;  // train, eval, attack
    std::optional<detect::Kind> kind;   // fit-detector, detect-eval
    std::string mode = "all";           // simulate: baseline | attacked | defended | all
};

void run_synth(const Context& ctx, const CommandOptions& opt);
void run_train(const Context& ctx, const CommandOptions& opt);
void run_eval(const Context& ctx, const CommandOptions& opt);
void run_attack(const Context& ctx, const CommandOptions& opt);
void run_transfer(const Context& ctx, const CommandOptions& opt);
void run_explain(const Context& ctx, const CommandOptions& opt);
void run_sign(const Context& ctx, const CommandOptions& opt);
void run_fit_detector(const Context& ctx, const CommandOptions& opt);
void run_detect_eval(const Context& ctx, const CommandOptions& opt);
void run_simulate(const Context& ctx, const CommandOptions& opt);
void run_compare(const Context& ctx, const CommandOptions& opt);
void run_report(const Context& ctx, const CommandOptions& opt);

}  // namespace csd::cli
