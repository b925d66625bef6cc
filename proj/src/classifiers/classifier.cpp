#include "csd/classifiers/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <type_traits>

#include "csd/error.hpp"
#include "csd/version.hpp"
#include "csd/io/container.hpp"
#include "csd/io/hash.hpp"
#include "csd/numerics/ops.hpp"

namespace csd::clf {

using num::BasicTape;
using num::BasicVar;
using num::Shape;
using num::Tensor;

namespace {

const char* const kMagic = "CSDMODEL";

template <typename T>
struct ParamCursor {
    const std::vector<BasicVar<T>>& params;
    std::size_t next = 0;
    const BasicVar<T>& take()
    {
        if (next >= params.size()) throw ArchitectureError("parameter list shorter than the architecture requires");
        return params[next++];
    }
};

// Gathers a [B, S, F] sequence into [B*S, F] rows, projects, and restores [B, S, G].
template <typename T>
BasicVar<T> project_sequence(const BasicVar<T>& seq, const BasicVar<T>& w, const BasicVar<T>& b)
{
    const std::size_t batch = seq.shape()[0], steps = seq.shape()[1], in = seq.shape()[2];
    auto rows = num::reshape(seq, {batch * steps, in});
    auto proj = num::add_bias(num::matmul(rows, w), b);
    return num::reshape(proj, {batch, steps, w.shape()[1]});
}

template <typename T>
BasicVar<T> lstm_layer(const BasicVar<T>& seq, ParamCursor<T>& p, std::size_t width, double rec_dropout,
                       num::SeededRng* rng, bool keep_sequence)
{
    const auto& wx = p.take();
    const auto& wh = p.take();
    const auto& b = p.take();
    const std::size_t batch = seq.shape()[0], steps = seq.shape()[1], h = width;
    auto proj = project_sequence(seq, wx, b);

    std::optional<num::BasicTensor<T>> mask;
    if (rng != nullptr && rec_dropout > 0.0) mask = num::dropout_mask<T>({batch, h}, rec_dropout, *rng);

    BasicVar<T> hidden, cell;
    std::vector<BasicVar<T>> outputs;
    for (std::size_t t = 0; t < steps; ++t) {
        auto gates = num::time_step(proj, t);
        if (t > 0) {
            auto h_in = mask ? num::mul_const(hidden, *mask) : hidden;
            gates = num::add(gates, num::matmul(h_in, wh));
        }
        auto i = num::sigmoid(num::slice_cols(gates, 0, h));
        auto g = num::tanh(num::slice_cols(gates, 2 * h, h));
        auto o = num::sigmoid(num::slice_cols(gates, 3 * h, h));
        if (t == 0) {
            cell = num::mul(i, g);
        } else {
            auto f = num::sigmoid(num::slice_cols(gates, h, h));
            cell = num::add(num::mul(f, cell), num::mul(i, g));
        }
        hidden = num::mul(o, num::tanh(cell));
        if (keep_sequence) outputs.push_back(hidden);
    }
    return keep_sequence ? num::stack_time(outputs) : hidden;
}

template <typename T>
BasicVar<T> gru_layer(const BasicVar<T>& seq, ParamCursor<T>& p, std::size_t width, bool keep_sequence)
{
    const auto& wx = p.take();
    const auto& wh = p.take();
    const auto& b = p.take();
    const std::size_t steps = seq.shape()[1], h = width;
    auto proj = project_sequence(seq, wx, b);
    auto wh_zr = num::slice_cols(wh, 0, 2 * h);
    auto wh_n = num::slice_cols(wh, 2 * h, h);

    BasicVar<T> hidden;
    std::vector<BasicVar<T>> outputs;
    for (std::size_t t = 0; t < steps; ++t) {
        auto xp = num::time_step(proj, t);
        if (t == 0) {
            // h_{-1} = 0: h = (1 - z) * n
            auto z = num::sigmoid(num::slice_cols(xp, 0, h));
            auto n = num::tanh(num::slice_cols(xp, 2 * h, h));
            hidden = num::sub(n, num::mul(z, n));
        } else {
            auto hzr = num::matmul(hidden, wh_zr);
            auto z = num::sigmoid(num::add(num::slice_cols(xp, 0, h), num::slice_cols(hzr, 0, h)));
            auto r = num::sigmoid(num::add(num::slice_cols(xp, h, h), num::slice_cols(hzr, h, h)));
            auto n = num::tanh(num::add(num::slice_cols(xp, 2 * h, h), num::matmul(num::mul(r, hidden), wh_n)));
            hidden = num::add(n, num::mul(z, num::sub(hidden, n)));
        }
        if (keep_sequence) outputs.push_back(hidden);
    }
    return keep_sequence ? num::stack_time(outputs) : hidden;
}

std::vector<Classifier::Param> init_params(const ArchSpec& spec, std::uint64_t seed)
{
    num::SeededRng rng = num::SeededRng::derive(seed, 0x1a17);
    std::vector<Classifier::Param> out;
    auto uniform = [&](const std::string& name, Shape shape, double limit) {
        Tensor t(std::move(shape));
        for (auto& v : t.vec()) v = static_cast<float>(rng.uniform(-limit, limit));
        out.push_back({name, std::move(t)});
    };
    auto zeros = [&](const std::string& name, Shape shape) { out.push_back({name, Tensor(std::move(shape))}); };

    std::size_t in = spec.n_features;
    if (spec.family == Family::CNNLSTM) {
        for (std::size_t l = 0; l < spec.conv_layers; ++l) {
            const std::string p = "conv" + std::to_string(l);
            const double fan_in = static_cast<double>(spec.conv_kernel * in);
            uniform(p + ".w", {spec.conv_kernel, in, spec.conv_filters}, std::sqrt(6.0 / fan_in));
            zeros(p + ".b", {spec.conv_filters});
            in = spec.conv_filters;
        }
    }
    const std::size_t gates = spec.family == Family::GRU ? 3 : 4;
    for (std::size_t l = 0; l < spec.recurrent_widths.size(); ++l) {
        const std::size_t h = spec.recurrent_widths[l];
        const std::string p = "rnn" + std::to_string(l);
        const double limit = 1.0 / std::sqrt(static_cast<double>(h));
        uniform(p + ".wx", {in, gates * h}, limit);
        uniform(p + ".wh", {h, gates * h}, limit);
        zeros(p + ".b", {gates * h});
        if (gates == 4)
            for (std::size_t j = h; j < 2 * h; ++j) out.back().value[j] = 1.0f;  // forget-gate bias
        in = h;
    }
    for (std::size_t l = 0; l < spec.dense_widths.size(); ++l) {
        const std::string p = "dense" + std::to_string(l);
        uniform(p + ".w", {in, spec.dense_widths[l]}, std::sqrt(6.0 / static_cast<double>(in)));
        zeros(p + ".b", {spec.dense_widths[l]});
        in = spec.dense_widths[l];
    }
    uniform("head.w", {in, spec.n_classes}, 1.0 / std::sqrt(static_cast<double>(in)));
    zeros("head.b", {spec.n_classes});
    return out;
}

template <typename T>
std::vector<BasicVar<T>> as_constants(BasicTape<T>& tape, const std::vector<Classifier::Param>& params)
{
    std::vector<BasicVar<T>> out;
    out.reserve(params.size());
    for (const auto& p : params) {
        if constexpr (std::is_same_v<T, float>)
            out.push_back(tape.constant(p.value));
        else
            out.push_back(tape.constant(p.value.template cast<T>()));
    }
    return out;
}

}  // namespace

Classifier::Classifier(ArchSpec spec, std::vector<Param> params) : spec_(std::move(spec)), params_(std::move(params))
{
    spec_.validate();
    const auto expected = init_params(spec_, 0);
    if (expected.size() != params_.size())
        throw ArchitectureError("expected " + std::to_string(expected.size()) + " parameter tensors, got " +
                                std::to_string(params_.size()));
    for (std::size_t i = 0; i < expected.size(); ++i)
        if (expected[i].value.shape() != params_[i].value.shape())
            throw ArchitectureError("parameter " + expected[i].name + " has shape " +
                                    num::shape_string(params_[i].value.shape()) + ", expected " +
                                    num::shape_string(expected[i].value.shape()));
}

std::size_t Classifier::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

template <typename T>
BasicVar<T> Classifier::forward(BasicTape<T>& /*tape*/, const BasicVar<T>& x, const std::vector<BasicVar<T>>& params,
                                num::SeededRng* rng, BasicVar<T>* penult) const
{
    if (x.shape().size() != 3 || x.shape()[1] != spec_.timestep || x.shape()[2] != spec_.n_features)
        throw ContractViolation("classifier expects [B, " + std::to_string(spec_.timestep) + ", " +
                                std::to_string(spec_.n_features) + "], got " + num::shape_string(x.shape()));
    ParamCursor<T> p{params};
    const bool training = rng != nullptr;
    BasicVar<T> seq = x;

    if (spec_.family == Family::CNNLSTM) {
        for (std::size_t l = 0; l < spec_.conv_layers; ++l) {
            const auto& w = p.take();
            const auto& b = p.take();
            seq = num::relu(num::conv1d(seq, w, b));
        }
        seq = num::maxpool1d(seq, spec_.pool_size);
    }

    const std::size_t layers = spec_.recurrent_widths.size();
    for (std::size_t l = 0; l < layers; ++l) {
        const bool last = l + 1 == layers;
        const std::size_t h = spec_.recurrent_widths[l];
        if (spec_.family == Family::GRU) {
            seq = gru_layer(seq, p, h, !last);
            if (training && spec_.dropout > 0.0) seq = num::dropout(seq, spec_.dropout, *rng, true);
        } else {
            seq = lstm_layer(seq, p, h, spec_.recurrent_dropout, rng, !last);
        }
    }
    BasicVar<T> hidden = seq;  // [B, h]
    if (spec_.family == Family::CNNLSTM) {
        hidden = num::relu(hidden);
        if (training && spec_.dropout > 0.0) hidden = num::dropout(hidden, spec_.dropout, *rng, true);
    }
    for (std::size_t l = 0; l < spec_.dense_widths.size(); ++l) {
        const auto& w = p.take();
        const auto& b = p.take();
        hidden = num::relu(num::add_bias(num::matmul(hidden, w), b));
    }
    if (penult != nullptr) *penult = hidden;
    const auto& w = p.take();
    const auto& b = p.take();
    return num::add_bias(num::matmul(hidden, w), b);
}

template num::Var Classifier::forward<float>(num::Tape&, const num::Var&, const std::vector<num::Var>&,
                                             num::SeededRng*, num::Var*) const;
template num::VarD Classifier::forward<double>(num::TapeD&, const num::VarD&, const std::vector<num::VarD>&,
                                               num::SeededRng*, num::VarD*) const;

num::Var Classifier::logits(num::Tape& tape, const num::Var& x) const
{
    return forward(tape, x, as_constants(tape, params_), nullptr);
}

num::VarD Classifier::logits(num::TapeD& tape, const num::VarD& x) const
{
    return forward(tape, x, as_constants(tape, params_), nullptr);
}

num::Tensor Classifier::penultimate(const num::Tensor& batch) const
{
    check_batch(batch);
    const std::size_t b = batch.dim(0), per = batch.dim(1) * batch.dim(2), width = spec_.penultimate_width();
    const std::size_t chunk = 256;
    Tensor out(Shape{b, width});
    for (std::size_t start = 0; start < b; start += chunk) {
        const std::size_t n = std::min(chunk, b - start);
        Tensor part(Shape{n, batch.dim(1), batch.dim(2)},
                    std::vector<float>(batch.vec().begin() + static_cast<long>(start * per),
                                       batch.vec().begin() + static_cast<long>((start + n) * per)));
        num::Tape tape;
        num::Var h;
        forward(tape, tape.constant(std::move(part)), as_constants(tape, params_), nullptr, &h);
        std::copy(h.value().vec().begin(), h.value().vec().end(), out.vec().begin() + static_cast<long>(start * width));
    }
    return out;
}

const num::Tensor& Classifier::head_weight() const
{
    return params_.at(params_.size() - 2).value;
}

const num::Tensor& Classifier::head_bias() const
{
    return params_.back().value;
}

std::string Classifier::fingerprint() const
{
    std::uint64_t h = io::fnv1a(to_json(spec_).dump());
    for (const auto& p : params_)
        h = io::fnv1a(std::span(reinterpret_cast<const unsigned char*>(p.value.vec().data()), 4 * p.value.size()), h);
    return to_string(spec_.family) + "-" + io::to_hex(h);
}

Classifier build(const ArchSpec& spec, std::uint64_t seed)
{
    spec.validate();
    Classifier m(spec, init_params(spec, seed));
    m.training.seed = seed;
    return m;
}

namespace {

io::Container to_container(const Classifier& m)
{
    io::Container c;
    c.descriptor["arch"] = to_json(m.spec());
    c.descriptor["fingerprint"] = m.fingerprint();
    c.descriptor["training"] = {{"seed", m.training.seed}, {"config_hash", m.training.config_hash}};
    c.descriptor["tool_version"] = kToolVersion;
    if (m.normalization) {
        c.descriptor["normalization"] = {{"min", m.normalization->min},
                                         {"max", m.normalization->max},
                                         {"degenerate", m.normalization->degenerate}};
    }
    nlohmann::json names = nlohmann::json::array();
    for (const auto& p : m.params()) {
        names.push_back(p.name);
        c.blocks.push_back(p.value);
    }
    c.descriptor["params"] = names;
    return c;
}

Classifier from_container(io::Container c)
{
    try {
        const ArchSpec spec = arch_from_json(c.descriptor.at("arch"));
        const auto names = c.descriptor.at("params").get<std::vector<std::string>>();
        if (names.size() != c.blocks.size()) throw SchemaError("parameter names do not match blocks");
        std::vector<Classifier::Param> params;
        for (std::size_t i = 0; i < names.size(); ++i) params.push_back({names[i], std::move(c.blocks[i])});
        Classifier m(spec, std::move(params));
        m.training.seed = c.descriptor.at("training").at("seed").get<std::uint64_t>();
        m.training.config_hash = c.descriptor.at("training").at("config_hash").get<std::string>();
        if (c.descriptor.contains("normalization")) {
            const auto& n = c.descriptor["normalization"];
            m.normalization = data::NormalizationStats{n.at("min").get<std::vector<float>>(),
                                                       n.at("max").get<std::vector<float>>(),
                                                       n.at("degenerate").get<std::vector<bool>>()};
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("model descriptor: ") + e.what());
    } catch (const ConfigError& e) {
        throw SchemaError(std::string("model descriptor: ") + e.what());
    }
}

}  // namespace

void save(const Classifier& model, std::ostream& out)
{
    io::write_container(out, kMagic, kModelFormatVersion, to_container(model));
}

void save(const Classifier& model, const std::filesystem::path& path)
{
    io::save_container(path, kMagic, kModelFormatVersion, to_container(model));
}

Classifier load(std::istream& in)
{
    return from_container(io::read_container(in, kMagic, kModelFormatVersion));
}

Classifier load(const std::filesystem::path& path)
{
    return from_container(io::load_container(path, kMagic, kModelFormatVersion));
}

Classifier load_expecting(const std::filesystem::path& path, Family expected)
{
    Classifier m = load(path);
    if (m.spec().family != expected)
        throw ArchitectureError(path.string() + " holds a " + to_string(m.spec().family) + " model, expected " +
                                to_string(expected));
    return m;
}

}  // namespace csd::clf
