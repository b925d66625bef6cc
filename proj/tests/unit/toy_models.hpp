#pragma once

// Small hand-built models with closed-form behaviour, shared by the attack
// and explanation tests.

#include <string>

#include "csd/classifiers/model.hpp"
#include "csd/numerics/ops.hpp"

namespace toy {

using csd::num::Shape;
using csd::num::Tensor;

// Shared plumbing: subclasses implement one templated function.
template <typename Derived>
class ToyModel : public csd::clf::Model {
public:
    ToyModel(std::size_t t, std::size_t n, std::size_t c) : t_(t), n_(n), c_(c) {}
    std::size_t timestep() const override { return t_; }
    std::size_t n_features() const override { return n_; }
    std::size_t n_classes() const override { return c_; }
    csd::num::Var logits(csd::num::Tape& tape, const csd::num::Var& x) const override
    {
        return static_cast<const Derived*>(this)->template run<float>(tape, x);
    }
    csd::num::VarD logits(csd::num::TapeD& tape, const csd::num::VarD& x) const override
    {
        return static_cast<const Derived*>(this)->template run<double>(tape, x);
    }
    std::string fingerprint() const override { return "toy"; }

protected:
    template <typename T>
    static csd::num::BasicTensor<T> as(const Tensor& t)
    {
        return t.cast<T>();
    }
    std::size_t t_, n_, c_;
};

// z = flatten(x) W + b with W [T*N, C].
class Linear : public ToyModel<Linear> {
public:
    Linear(std::size_t t, std::size_t n, Tensor w, Tensor b)
        : ToyModel(t, n, w.dim(1)), w_(std::move(w)), b_(std::move(b))
    {
    }
    template <typename T>
    csd::num::BasicVar<T> run(csd::num::BasicTape<T>& tape, const csd::num::BasicVar<T>& x) const
    {
        auto flat = csd::num::reshape(x, {x.shape()[0], t_ * n_});
        return csd::num::add_bias(csd::num::matmul(flat, tape.constant(as<T>(w_))), tape.constant(as<T>(b_)));
    }
    bool has_dense_head() const override { return true; }
    Tensor penultimate(const Tensor& batch) const override { return batch.reshaped({batch.dim(0), t_ * n_}); }
    const Tensor& head_weight() const override { return w_; }
    const Tensor& head_bias() const override { return b_; }

private:
    Tensor w_, b_;
};

// z = mean_time(x) W + b with W [N, C].
class MeanLinear : public ToyModel<MeanLinear> {
public:
    MeanLinear(std::size_t t, Tensor w, Tensor b) : ToyModel(t, w.dim(0), w.dim(1)), w_(std::move(w)), b_(std::move(b)) {}
    template <typename T>
    csd::num::BasicVar<T> run(csd::num::BasicTape<T>& tape, const csd::num::BasicVar<T>& x) const
    {
        return csd::num::add_bias(csd::num::matmul(csd::num::mean_time(x), tape.constant(as<T>(w_))),
                                  tape.constant(as<T>(b_)));
    }

private:
    Tensor w_, b_;
};

// z = tanh(mean_time(x) W1 + b1) W2: nonlinear with cross-feature interactions.
class MeanMlp : public ToyModel<MeanMlp> {
public:
    MeanMlp(std::size_t t, Tensor w1, Tensor b1, Tensor w2)
        : ToyModel(t, w1.dim(0), w2.dim(1)), w1_(std::move(w1)), b1_(std::move(b1)), w2_(std::move(w2))
    {
    }
    template <typename T>
    csd::num::BasicVar<T> run(csd::num::BasicTape<T>& tape, const csd::num::BasicVar<T>& x) const
    {
        auto h = csd::num::tanh(csd::num::add_bias(csd::num::matmul(csd::num::mean_time(x), tape.constant(as<T>(w1_))),
                                                   tape.constant(as<T>(b1_))));
        return csd::num::matmul(h, tape.constant(as<T>(w2_)));
    }

private:
    Tensor w1_, b1_, w2_;
};

// Logits fixed at `z` for every input (zero gradient everywhere).
class Constant : public ToyModel<Constant> {
public:
    Constant(std::size_t t, std::size_t n, Tensor z) : ToyModel(t, n, z.size()), z_(std::move(z)) {}
    template <typename T>
    csd::num::BasicVar<T> run(csd::num::BasicTape<T>& tape, const csd::num::BasicVar<T>& x) const
    {
        auto zero = csd::num::scale(csd::num::mean_time(x), 0.0);  // [B, N], keeps x on the path
        auto w = tape.constant(csd::num::BasicTensor<T>(Shape{n_, c_}));
        return csd::num::add_bias(csd::num::matmul(zero, w), tape.constant(as<T>(z_)));
    }

private:
    Tensor z_;
};

}  // namespace toy
