#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "csd/numerics/tensor.hpp"

namespace csd::detect {

enum class Kind { RF, GBT, FFNN };

std::string to_string(Kind k);
Kind parse_kind(const std::string& s);  // "rf" | "gbt" | "ffnn"

struct DetectorSpec {
    Kind kind = Kind::GBT;

    // Random forest: Gini splits on bootstrap samples.
    std::size_t n_trees = 30;
    std::size_t rf_max_depth = 16;  // 0 = grow until pure
    std::size_t max_features = 0;   // features tried per split; 0 = floor(sqrt(d))
    bool bootstrap = true;

    // Gradient-boosted trees on logistic loss with Newton leaf values.
    std::size_t n_estimators = 40;
    double gbt_learning_rate = 0.05;
    std::size_t gbt_max_depth = 3;
    double l2_leaf = 1.0;           // lambda in -G / (H + lambda)
    double min_child_weight = 1.0;  // minimum hessian sum per child

    // Feed-forward network: ReLU hidden layers, sigmoid output, BCE + Adam.
    std::vector<std::size_t> hidden = {64, 64};
    double ffnn_learning_rate = 0.001;
    std::size_t epochs = 100;
    std::size_t batch_size = 64;

    double threshold = 0.5;  // flag = score > threshold
    std::uint64_t seed = 0;

    // Throws ConfigError on a violated invariant.
    void validate() const;
    std::string hash() const;
};

nlohmann::json to_json(const DetectorSpec& s);
// Unknown keys are rejected with ConfigError.
DetectorSpec detector_from_json(const nlohmann::json& j);

// One decision tree as parallel node arrays; node 0 is the root. Internal
// nodes send x[feature] <= threshold left; leaves have feature == -1.
struct Tree {
    std::vector<int> feature;
    std::vector<float> threshold;
    std::vector<int> left;
    std::vector<int> right;
    std::vector<double> value;

    std::size_t size() const { return feature.size(); }
    std::size_t depth() const;
    double evaluate(std::span<const float> x) const;
};

struct DetectionVerdict {
    bool attack = false;
    double score = 0.0;
    std::string signature_id;
};

class AttackDetector {
public:
    std::string config_hash;  // provenance of the run that trained it

    const DetectorSpec& spec() const { return spec_; }
    std::size_t dimension() const { return dimension_; }
    const std::vector<Tree>& trees() const { return trees_; }
    // Model fingerprint of the signatures the detector was trained on.
    const std::string& signature_fingerprint() const { return signature_fingerprint_; }
    std::string fingerprint() const;

    // Probability of the attack label; ContractViolation on a dimension mismatch.
    double score(std::span<const float> signature) const;
    std::vector<double> scores(const num::Tensor& signatures) const;  // [n, d]
    DetectionVerdict detect(std::span<const float> signature, const std::string& id = {}) const;

private:
    friend AttackDetector train_detector(const num::Tensor&, const std::vector<int>&, const DetectorSpec&,
                                         const std::string&);
    friend void save(const AttackDetector&, std::ostream&);
    friend AttackDetector load(std::istream&);

    DetectorSpec spec_;
    std::size_t dimension_ = 0;
    std::string signature_fingerprint_;
    std::string data_hash_;
    std::vector<Tree> trees_;
    double base_score_ = 0.0;  // GBT prior log-odds
    std::vector<num::Tensor> weights_;  // FFNN: w0, b0, w1, b1, ...
    std::vector<float> feature_mean_, feature_scale_;  // FFNN input standardization
};

// Pure threshold rule: score exactly equal to the threshold is normal.
bool flag(double score, double threshold);

// Fits a detector to an [n, d] signature matrix with labels in {0, 1}.
// Throws DegenerateTrainingError when only one label is present and
// ContractViolation on inconsistent shapes or labels.
AttackDetector train_detector(const num::Tensor& x, const std::vector<int>& y, const DetectorSpec& spec,
                              const std::string& signature_fingerprint = {});

struct DetectionMetrics {
    double accuracy = 0.0;
    double f1_normal = 0.0;
    double f1_attack = 0.0;
    double precision_attack = 0.0;
    double recall_attack = 0.0;
    std::size_t confusion[2][2] = {{0, 0}, {0, 0}};  // [true][predicted]
    std::size_t total = 0;
};

DetectionMetrics binary_metrics(const std::vector<int>& labels, const std::vector<int>& predicted);
// Throws ContractViolation on an empty set.
DetectionMetrics evaluate_detector(const AttackDetector& d, const num::Tensor& x, const std::vector<int>& y);

struct SweepPoint {
    double threshold = 0.0;
    double accuracy = 0.0;
};

// Accuracy of flag = score > tau for tau = 0 and every distinct score,
// computed from one sort of the scores.
std::vector<SweepPoint> threshold_sweep(const std::vector<double>& scores, const std::vector<int>& labels);

inline constexpr std::uint32_t kDetectorFormatVersion = 1;
inline constexpr const char* kDetectorMagic = "CSDDETEC";

void save(const AttackDetector& d, std::ostream& out);
void save(const AttackDetector& d, const std::filesystem::path& path);
AttackDetector load(std::istream& in);
AttackDetector load(const std::filesystem::path& path);

}  // namespace csd::detect
