#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "csd/classifiers/model.hpp"

namespace csd::clf {

struct ClassificationMetrics {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    // confusion[true][predicted]
    std::vector<std::vector<std::size_t>> confusion;
    std::vector<double> precision, recall, f1;
    std::vector<std::size_t> support;
    // Classes with no samples in the set; they score 0 and still count in the macro average.
    std::vector<int> absent_classes;
    std::size_t total = 0;
};

// Macro-averaged scores over n_classes. Throws ContractViolation on empty or
// mismatched input or out-of-range labels.
ClassificationMetrics compute_metrics(std::span<const int> labels, std::span<const int> predictions,
                                      std::size_t n_classes = 4);

// A labelled [B, T, N] batch.
struct LabeledSet {
    num::Tensor x;
    std::vector<int> y;
    std::size_t size() const noexcept { return y.size(); }
};

ClassificationMetrics evaluate(const Model& model, const LabeledSet& set);

}  // namespace csd::clf
