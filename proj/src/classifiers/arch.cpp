#include "csd/classifiers/arch.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "csd/error.hpp"

namespace csd::clf {

std::string to_string(Family f)
{
    switch (f) {
    case Family::LSTM: return "lstm";
    case Family::GRU: return "gru";
    case Family::CNNLSTM: return "cnn-lstm";
    }
    return "?";
}

Family parse_family(const std::string& s)
{
    std::string lower;
    for (char ch : s) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (lower == "lstm") return Family::LSTM;
    if (lower == "gru") return Family::GRU;
    if (lower == "cnn-lstm" || lower == "cnn_lstm" || lower == "cnnlstm") return Family::CNNLSTM;
    throw ConfigError("unknown model family '" + s + "' (expected lstm, gru or cnn-lstm)");
}

std::size_t ArchSpec::recurrent_steps() const
{
    if (family != Family::CNNLSTM) return timestep;
    const std::size_t shrink = conv_layers * (conv_kernel - 1);
    if (conv_kernel == 0 || shrink >= timestep) return 0;
    return (timestep - shrink) / pool_size;
}

void ArchSpec::validate() const
{
    auto fail = [](const std::string& msg) { throw ConfigError("invalid architecture: " + msg); };
    if (timestep == 0) fail("timestep must be positive");
    if (n_features == 0) fail("n_features must be positive");
    if (n_classes < 2) fail("n_classes must be at least 2");
    if (recurrent_widths.empty()) fail("at least one recurrent layer is required");
    if (std::find(recurrent_widths.begin(), recurrent_widths.end(), 0u) != recurrent_widths.end())
        fail("recurrent widths must be positive");
    if (dense_widths.empty()) fail("at least one hidden dense layer is required");
    if (std::find(dense_widths.begin(), dense_widths.end(), 0u) != dense_widths.end())
        fail("dense widths must be positive");
    if (recurrent_dropout < 0.0 || recurrent_dropout >= 1.0) fail("recurrent_dropout must lie in [0, 1)");
    if (dropout < 0.0 || dropout >= 1.0) fail("dropout must lie in [0, 1)");
    if (family == Family::CNNLSTM) {
        if (conv_layers == 0 || conv_filters == 0 || conv_kernel == 0 || pool_size == 0)
            fail("convolution sizes must be positive");
        if (conv_kernel > timestep) fail("kernel size exceeds timestep");
        if (recurrent_steps() == 0) fail("convolution and pooling leave no time steps");
    }
}

ArchSpec desk_preset(Family f, std::size_t timestep, std::size_t n_features)
{
    ArchSpec s;
    s.family = f;
    s.timestep = timestep;
    s.n_features = n_features;
    s.dense_widths = {32};
    switch (f) {
    case Family::LSTM:
        s.recurrent_widths = {32};
        s.recurrent_dropout = 0.15;
        break;
    case Family::GRU:
        s.recurrent_widths = {32};
        s.recurrent_dropout = 0.0;
        s.dropout = 0.2;
        break;
    case Family::CNNLSTM:
        s.recurrent_widths = {32};
        s.recurrent_dropout = 0.0;
        s.dropout = 0.15;
        s.conv_filters = 16;
        break;
    }
    return s;
}

ArchSpec full_scale_preset(Family f, std::size_t n_features)
{
    ArchSpec s = desk_preset(f, 90, n_features);
    s.dense_widths = {64};
    switch (f) {
    case Family::LSTM: s.recurrent_widths = std::vector<std::size_t>(6, 128); break;
    case Family::GRU: s.recurrent_widths = {32, 64, 128}; break;
    case Family::CNNLSTM:
        s.recurrent_widths = {128};
        s.conv_filters = 64;
        break;
    }
    return s;
}

nlohmann::json to_json(const ArchSpec& s)
{
    return {
        {"family", to_string(s.family)},
        {"timestep", s.timestep},
        {"n_features", s.n_features},
        {"n_classes", s.n_classes},
        {"recurrent_widths", s.recurrent_widths},
        {"recurrent_dropout", s.recurrent_dropout},
        {"dropout", s.dropout},
        {"conv_layers", s.conv_layers},
        {"conv_filters", s.conv_filters},
        {"conv_kernel", s.conv_kernel},
        {"pool_size", s.pool_size},
        {"dense_widths", s.dense_widths},
    };
}

ArchSpec arch_from_json(const nlohmann::json& j)
{
    static const std::set<std::string> known{"family",       "timestep",    "n_features",  "n_classes",
                                             "recurrent_widths", "recurrent_dropout", "dropout",
                                             "conv_layers",  "conv_filters", "conv_kernel", "pool_size",
                                             "dense_widths"};
    if (!j.is_object()) throw ConfigError("architecture must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("unknown architecture key '" + key + "'");
    ArchSpec s = desk_preset(j.contains("family") ? parse_family(j["family"].get<std::string>()) : Family::LSTM,
                             j.value("timestep", std::size_t{30}), j.value("n_features", std::size_t{6}));
    try {
        s.n_classes = j.value("n_classes", s.n_classes);
        s.recurrent_widths = j.value("recurrent_widths", s.recurrent_widths);
        s.recurrent_dropout = j.value("recurrent_dropout", s.recurrent_dropout);
        s.dropout = j.value("dropout", s.dropout);
        s.conv_layers = j.value("conv_layers", s.conv_layers);
        s.conv_filters = j.value("conv_filters", s.conv_filters);
        s.conv_kernel = j.value("conv_kernel", s.conv_kernel);
        s.pool_size = j.value("pool_size", s.pool_size);
        s.dense_widths = j.value("dense_widths", s.dense_widths);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("architecture: ") + e.what());
    }
    s.validate();
    return s;
}

}  // namespace csd::clf
