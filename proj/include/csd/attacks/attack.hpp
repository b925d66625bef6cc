#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "csd/classifiers/metrics.hpp"
#include "csd/classifiers/model.hpp"
#include "csd/data/window.hpp"

namespace csd::attack {

enum class Kind { FGSM, PGD, CW };

std::string to_string(Kind k);
Kind parse_kind(const std::string& s);  // "fgsm" | "pgd" | "cw"

struct AttackConfig {
    Kind kind = Kind::FGSM;
    double epsilon = 0.1;  // L-inf budget (FGSM, PGD)
    double alpha = 0.01;   // PGD step
    std::size_t iterations = 20;
    bool random_start = false;  // PGD: uniform start inside the epsilon ball

    double kappa = 0.0;  // C&W confidence
    double c = 1.0;      // C&W initial trade-off constant
    std::size_t binary_steps = 5;  // 1 = single-c mode
    std::size_t cw_iterations = 1000;
    double cw_learning_rate = 0.01;

    std::optional<int> target;  // targeted mode toward this class
    double clip_min = 0.0;
    double clip_max = 1.0;
    std::uint64_t seed = 0;

    // Throws ConfigError on a violated invariant.
    void validate() const;
    // FNV-1a of the canonical JSON form.
    std::string hash() const;
};

nlohmann::json to_json(const AttackConfig& cfg);
// Unknown keys are rejected with ConfigError.
AttackConfig attack_from_json(const nlohmann::json& j);

struct PerturbationStats {
    double linf = 0.0;
    double l2 = 0.0;
    double pcc = 0.0;
};

// L-inf and L2 of the flattened difference plus the Pearson correlation of the
// flattened windows. Throws NumericError when either window has zero variance
// and ContractViolation on a shape mismatch.
PerturbationStats perturbation_stats(const num::Tensor& original, const num::Tensor& adversarial);
double pearson(std::span<const float> a, std::span<const float> b);

struct AdversarialWindow {
    std::string source_id;  // id of the original window, when known
    num::Tensor original;   // [T, N]
    num::Tensor values;     // [T, N], within the clip range
    Kind kind = Kind::FGSM;
    std::string config_hash;
    int reference_label = 0;  // the label attacked away from, or the target
    bool targeted = false;
    int prediction = 0;       // model argmax on `values`
    bool success = false;     // prediction != reference (untargeted) / == target (targeted)
    bool degenerate_gradient = false;
    double linf = 0.0;
    double l2 = 0.0;
};

// Batched crafting against `model`. `labels` are the true (or trusted)
// classes; `targets`, when given, are per-sample target classes and override
// cfg.target. The model is read-only; windows are independent of how they
// are batched.
std::vector<AdversarialWindow> craft(const clf::Model& model, const num::Tensor& batch, const std::vector<int>& labels,
                                     const AttackConfig& cfg, const std::vector<int>* targets = nullptr);

AdversarialWindow craft_fgsm(const clf::Model& model, const num::Tensor& window, int label, const AttackConfig& cfg);
AdversarialWindow craft_pgd(const clf::Model& model, const num::Tensor& window, int label, const AttackConfig& cfg);
AdversarialWindow craft_cw(const clf::Model& model, const num::Tensor& window, int label, const AttackConfig& cfg);

struct UnderAttackResult {
    clf::ClassificationMetrics metrics;
    double mean_linf = 0.0, max_linf = 0.0;
    double mean_l2 = 0.0, max_l2 = 0.0;
    double mean_pcc = 0.0;  // over windows where PCC is defined
    std::size_t pcc_count = 0;
    double success_rate = 0.0;
    std::vector<AdversarialWindow> adversarial;
};

UnderAttackResult evaluate_under_attack(const clf::Model& model, const clf::LabeledSet& set, const AttackConfig& cfg,
                                        const std::vector<int>* targets = nullptr);
// Scores `model` on windows crafted elsewhere (the transfer setting).
clf::ClassificationMetrics evaluate_on(const clf::Model& model, const std::vector<AdversarialWindow>& adversarial,
                                       const std::vector<int>& labels);

struct TransferMatrix {
    std::vector<std::string> models;
    std::vector<Kind> kinds;
    // accuracy[source][target][kind]
    std::vector<std::vector<std::vector<double>>> accuracy;
    double at(std::size_t source, std::size_t target, std::size_t kind) const
    {
        return accuracy.at(source).at(target).at(kind);
    }
};

struct NamedModel {
    std::string name;
    const clf::Model* model;
};

// Crafts white-box against every source and scores every model on the result.
TransferMatrix transfer_matrix(const std::vector<NamedModel>& models, const clf::LabeledSet& set,
                               const std::vector<AttackConfig>& cfgs);

// Adversarial set: the window CSV container plus a JSON sidecar holding the
// config and per-window success and budget figures.
void write_adversarial_set(const std::filesystem::path& csv_path, const std::vector<AdversarialWindow>& windows,
                           const std::vector<data::TimeSeriesWindow>& originals,
                           const std::vector<std::string>& feature_names, const AttackConfig& cfg,
                           const std::string& header_comment);

struct AdversarialSet {
    std::vector<data::TimeSeriesWindow> windows;  // perturbed values, clean labels
    std::vector<std::string> feature_names;
    std::vector<bool> success;
    AttackConfig config;
};
// Reads `csv_path` and its "<csv_path>.json" sidecar.
AdversarialSet read_adversarial_set(const std::filesystem::path& csv_path);

}  // namespace csd::attack
