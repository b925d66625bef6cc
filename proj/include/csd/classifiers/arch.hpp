#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

namespace csd::clf {

enum class Family { LSTM, GRU, CNNLSTM };

std::string to_string(Family f);
Family parse_family(const std::string& s);  // "lstm" | "gru" | "cnn-lstm"; ConfigError otherwise

// Layer descriptor for the three severity classifiers. Recurrent layers pass
// full sequences to the next layer; the last layer's final hidden state feeds
// a stack of ReLU dense layers and then a softmax layer of n_classes units.
struct ArchSpec {
    Family family = Family::LSTM;
    std::size_t timestep = 30;
    std::size_t n_features = 6;
    std::size_t n_classes = 4;

    std::vector<std::size_t> recurrent_widths{32};
    // LSTM: dropout on h_{t-1} with one mask per sequence.
    double recurrent_dropout = 0.15;
    // GRU: after every recurrent layer. CNN-LSTM: after the ReLU that follows the LSTM.
    double dropout = 0.0;

    // CNN-LSTM front end: conv_layers valid convolutions (ReLU) then max pooling.
    std::size_t conv_layers = 2;
    std::size_t conv_filters = 64;
    std::size_t conv_kernel = 3;
    std::size_t pool_size = 2;

    // Hidden ReLU dense widths; the last one is the penultimate layer.
    std::vector<std::size_t> dense_widths{32};

    // Throws ConfigError on an inconsistent descriptor.
    void validate() const;
    // Time steps reaching the recurrent stack (after convolution and pooling).
    std::size_t recurrent_steps() const;
    std::size_t penultimate_width() const { return dense_widths.back(); }

    bool operator==(const ArchSpec&) const = default;
};

// Desk-scale defaults per family.
ArchSpec desk_preset(Family f, std::size_t timestep = 30, std::size_t n_features = 6);
// The published full-size configurations (timestep 90).
ArchSpec full_scale_preset(Family f, std::size_t n_features);

nlohmann::json to_json(const ArchSpec& spec);
// Unknown keys are rejected with ConfigError.
ArchSpec arch_from_json(const nlohmann::json& j);

}  // namespace csd::clf
