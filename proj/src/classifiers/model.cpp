#include "csd/classifiers/model.hpp"

#include <algorithm>
#include <cmath>

#include "csd/error.hpp"

namespace csd::clf {

namespace {

constexpr std::size_t kChunk = 256;

}  // namespace

num::Tensor Model::penultimate(const num::Tensor&) const
{
    throw ArchitectureError("model has no dense penultimate layer");
}

const num::Tensor& Model::head_weight() const
{
    throw ArchitectureError("model has no dense final layer");
}

const num::Tensor& Model::head_bias() const
{
    throw ArchitectureError("model has no dense final layer");
}

void Model::check_batch(const num::Tensor& batch) const
{
    if (batch.rank() != 3 || batch.dim(1) != timestep() || batch.dim(2) != n_features())
        throw ContractViolation("expected a [B, " + std::to_string(timestep()) + ", " + std::to_string(n_features()) +
                                "] batch, got " + num::shape_string(batch.shape()));
}

num::Tensor logits(const Model& model, const num::Tensor& batch)
{
    model.check_batch(batch);
    const std::size_t b = batch.dim(0), per = batch.dim(1) * batch.dim(2), c = model.n_classes();
    num::Tensor out(num::Shape{b, c});
    for (std::size_t start = 0; start < b; start += kChunk) {
        const std::size_t n = std::min(kChunk, b - start);
        num::Tensor chunk(num::Shape{n, batch.dim(1), batch.dim(2)},
                          std::vector<float>(batch.vec().begin() + static_cast<long>(start * per),
                                             batch.vec().begin() + static_cast<long>((start + n) * per)));
        num::Tape tape;
        const auto z = model.logits(tape, tape.constant(std::move(chunk)));
        std::copy(z.value().vec().begin(), z.value().vec().end(), out.vec().begin() + static_cast<long>(start * c));
    }
    return out;
}

num::Tensor predict_proba(const Model& model, const num::Tensor& batch)
{
    num::Tensor p = logits(model, batch);
    const std::size_t c = p.dim(1);
    for (std::size_t r = 0; r < p.dim(0); ++r) {
        float* row = p.vec().data() + r * c;
        const float hi = *std::max_element(row, row + c);
        double total = 0.0;
        for (std::size_t i = 0; i < c; ++i) total += std::exp(static_cast<double>(row[i] - hi));
        for (std::size_t i = 0; i < c; ++i)
            row[i] = static_cast<float>(std::exp(static_cast<double>(row[i] - hi)) / total);
    }
    return p;
}

std::vector<float> predict(const Model& model, const num::Tensor& window)
{
    if (window.rank() != 2) throw ContractViolation("window must be [T, N], got " + num::shape_string(window.shape()));
    return predict_proba(model, window.reshaped({1, window.dim(0), window.dim(1)})).vec();
}

int argmax(std::span<const float> row)
{
    if (row.empty()) throw ContractViolation("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
        if (row[i] > row[best]) best = i;
    return static_cast<int>(best);
}

int predict_label(const Model& model, const num::Tensor& window)
{
    if (window.rank() != 2) throw ContractViolation("window must be [T, N], got " + num::shape_string(window.shape()));
    return predict_labels(model, window.reshaped({1, window.dim(0), window.dim(1)})).front();
}

std::vector<int> predict_labels(const Model& model, const num::Tensor& batch)
{
    const num::Tensor z = logits(model, batch);
    const std::size_t c = z.dim(1);
    std::vector<int> out(z.dim(0));
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = argmax(z.data().subspan(r * c, c));
    return out;
}

}  // namespace csd::clf
