#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csd/classifiers/classifier.hpp"
#include "csd/classifiers/metrics.hpp"
#include "csd/data/window.hpp"

namespace csd::clf {

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t epochs = 200;
    std::size_t batch_size = 256;
    std::size_t patience = 30;
    std::uint64_t seed = 1;
    // Global gradient-norm clip; 0 disables.
    double clip_norm = 0.0;

    // Throws ConfigError unless all positive and patience <= epochs.
    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;  // 1-based epoch whose parameters were kept
    bool stopped_early = false;
};

LabeledSet to_labeled(std::span<const data::TimeSeriesWindow> windows);

// Minimises mean cross-entropy with Adam, monitors validation loss, stops
// after `patience` epochs without strict improvement and restores the best
// parameters. Throws DivergenceError on a non-finite loss and
// ContractViolation on an empty split.
TrainHistory train(Classifier& model, const LabeledSet& train_set, const LabeledSet& val_set,
                   const TrainConfig& cfg);

// Mean cross-entropy and accuracy of a model on a set, inference mode.
std::pair<double, double> loss_and_accuracy(const Model& model, const LabeledSet& set);

}  // namespace csd::clf
