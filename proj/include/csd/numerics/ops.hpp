#pragma once

#include <cstdint>
#include <vector>

#include "csd/numerics/rng.hpp"
#include "csd/numerics/tape.hpp"

// Differentiable primitives. Every op records its result on the tape of its
// inputs and returns a handle; shapes are checked eagerly and mismatches throw
// ContractViolation. 2-D tensors are [rows, cols]; sequences are [batch, time, features].
namespace csd::num {

template <typename T> BasicVar<T> add(const BasicVar<T>& a, const BasicVar<T>& b);
template <typename T> BasicVar<T> sub(const BasicVar<T>& a, const BasicVar<T>& b);
template <typename T> BasicVar<T> mul(const BasicVar<T>& a, const BasicVar<T>& b);
template <typename T> BasicVar<T> scale(const BasicVar<T>& a, double s);
template <typename T> BasicVar<T> add_scalar(const BasicVar<T>& a, double s);
// a[..., n] + bias[n]
template <typename T> BasicVar<T> add_bias(const BasicVar<T>& a, const BasicVar<T>& bias);
// Elementwise product with a constant tensor of the same shape.
template <typename T> BasicVar<T> mul_const(const BasicVar<T>& a, const BasicTensor<T>& c);
template <typename T> BasicVar<T> matmul(const BasicVar<T>& a, const BasicVar<T>& b);

template <typename T> BasicVar<T> sigmoid(const BasicVar<T>& a);
template <typename T> BasicVar<T> tanh(const BasicVar<T>& a);
template <typename T> BasicVar<T> relu(const BasicVar<T>& a);
template <typename T> BasicVar<T> square(const BasicVar<T>& a);

// Row-wise softmax of a [m, n] tensor.
template <typename T> BasicVar<T> softmax(const BasicVar<T>& logits);

// Inverted dropout: keeps each element with probability 1-rate and scales
// survivors by 1/(1-rate). Identity when !training or rate == 0.
template <typename T> BasicVar<T> dropout(const BasicVar<T>& a, double rate, SeededRng& rng, bool training);
// Dropout mask for a tensor of `shape` (values 0 or 1/(1-rate)).
template <typename T> BasicTensor<T> dropout_mask(const Shape& shape, double rate, SeededRng& rng);

template <typename T> BasicVar<T> reshape(const BasicVar<T>& a, Shape shape);
template <typename T> BasicVar<T> slice_cols(const BasicVar<T>& a, std::size_t start, std::size_t len);
template <typename T> BasicVar<T> concat_cols(const std::vector<BasicVar<T>>& parts);
// x[:, t, :] of a [B, T, F] sequence.
template <typename T> BasicVar<T> time_step(const BasicVar<T>& x, std::size_t t);
// Inverse of time_step over all t: T tensors of [B, F] -> [B, T, F].
template <typename T> BasicVar<T> stack_time(const std::vector<BasicVar<T>>& steps);
// Mean over the time axis: [B, T, F] -> [B, F].
template <typename T> BasicVar<T> mean_time(const BasicVar<T>& x);

// Valid 1-D convolution: x[B, T, C], w[K, C, F], b[F] -> [B, T-K+1, F].
template <typename T> BasicVar<T> conv1d(const BasicVar<T>& x, const BasicVar<T>& w, const BasicVar<T>& b);
// Non-overlapping max pooling along time: [B, T, C] -> [B, T/size, C].
template <typename T> BasicVar<T> maxpool1d(const BasicVar<T>& x, std::size_t size);

template <typename T> BasicVar<T> sum(const BasicVar<T>& a);
template <typename T> BasicVar<T> mean(const BasicVar<T>& a);
// Per-row sum: [m, n] -> [m].
template <typename T> BasicVar<T> row_sum(const BasicVar<T>& a);

// Mean softmax cross-entropy of logits[B, C] against integer labels.
template <typename T> BasicVar<T> cross_entropy(const BasicVar<T>& logits, const std::vector<int>& labels);
// Mean binary cross-entropy of logits[B] (or [B, 1]) against targets in {0, 1}.
template <typename T> BasicVar<T> bce_with_logits(const BasicVar<T>& logits, const std::vector<float>& targets);
// Per-sample logit margin hinge [B]:
//   untargeted: max(Z_y - max_{i!=y} Z_i, -kappa)
//   targeted:   max(max_{i!=y} Z_i - Z_y, -kappa)
template <typename T>
BasicVar<T> margin_loss(const BasicVar<T>& logits, const std::vector<int>& classes, const std::vector<bool>& targeted,
                        double kappa);

}  // namespace csd::num
