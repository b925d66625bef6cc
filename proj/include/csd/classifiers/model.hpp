#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "csd/numerics/tape.hpp"
#include "csd/numerics/tensor.hpp"

namespace csd::clf {

// A differentiable window classifier in inference mode: [B, T, N] -> logits [B, C].
// Attacks and explanations are written against this interface so they apply
// equally to the trained recurrent networks and to hand-built test models.
class Model {
public:
    virtual ~Model() = default;

    virtual std::size_t timestep() const = 0;
    virtual std::size_t n_features() const = 0;
    virtual std::size_t n_classes() const = 0;

    // Parameters enter the tape as constants; gradients flow to `x` only.
    virtual num::Var logits(num::Tape& tape, const num::Var& x) const = 0;
    virtual num::VarD logits(num::TapeD& tape, const num::VarD& x) const = 0;

    // Penultimate activations [B, P] and the final dense layer z = h W + b
    // (W is [P, C]). Models without such a head throw ArchitectureError.
    virtual bool has_dense_head() const { return false; }
    virtual num::Tensor penultimate(const num::Tensor& batch) const;
    virtual const num::Tensor& head_weight() const;
    virtual const num::Tensor& head_bias() const;

    // Stable identifier of the function the model computes.
    virtual std::string fingerprint() const = 0;

    // Throws ContractViolation unless batch is [B, T, N] for this model.
    void check_batch(const num::Tensor& batch) const;
};

// Logits for a [B, T, N] batch, evaluated in chunks.
num::Tensor logits(const Model& model, const num::Tensor& batch);
// Row-wise class probabilities for a batch.
num::Tensor predict_proba(const Model& model, const num::Tensor& batch);
// Class probabilities for a single [T, N] window.
std::vector<float> predict(const Model& model, const num::Tensor& window);
// Argmax with ties broken toward the lower class index.
int argmax(std::span<const float> row);
int predict_label(const Model& model, const num::Tensor& window);
std::vector<int> predict_labels(const Model& model, const num::Tensor& batch);

}  // namespace csd::clf
