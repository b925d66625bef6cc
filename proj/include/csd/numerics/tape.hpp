#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "csd/numerics/tensor.hpp"

namespace csd::num {

template <typename T>
class BasicTape;

// Handle to a node recorded on a tape.
template <typename T>
class BasicVar {
public:
    BasicVar() = default;
    BasicVar(BasicTape<T>* tape, int id) : tape_(tape), id_(id) {}

    BasicTape<T>* tape() const noexcept { return tape_; }
    int id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr && id_ >= 0; }
    const BasicTensor<T>& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;

private:
    BasicTape<T>* tape_ = nullptr;
    int id_ = -1;
};

// Gradient accumulators for the inputs of one node during the backward sweep.
template <typename T>
class GradSink {
public:
    explicit GradSink(std::vector<BasicTensor<T>>& grads, const BasicTape<T>& tape) : grads_(grads), tape_(tape) {}
    // Accumulator for `input`, zero-initialised on first use; nullptr when the
    // input does not need a gradient.
    BasicTensor<T>* operator()(const BasicVar<T>& input);

private:
    std::vector<BasicTensor<T>>& grads_;
    const BasicTape<T>& tape_;
};

template <typename T>
class BasicGradients {
public:
    bool contains(const BasicVar<T>& v) const { return map_.count(v.id()) != 0; }
    const BasicTensor<T>& operator[](const BasicVar<T>& v) const;
    std::size_t size() const noexcept { return map_.size(); }

private:
    friend class BasicTape<T>;
    std::unordered_map<int, BasicTensor<T>> map_;
};

// Records tensor operations in execution order and replays them in reverse
// to produce exact gradients. One tape per thread; backward() does not mutate
// the tape, so it may be called repeatedly.
template <typename T>
class BasicTape {
public:
    using Tensor = BasicTensor<T>;
    using Var = BasicVar<T>;
    using BackwardFn = std::function<void(const Tensor& out_grad, GradSink<T>& sink)>;

    BasicTape() = default;
    BasicTape(const BasicTape&) = delete;
    BasicTape& operator=(const BasicTape&) = delete;

    // Differentiable leaf (parameter or attacked input).
    Var leaf(Tensor value);
    // Non-differentiable input.
    Var constant(Tensor value);

    // Op authors: append a node. `fn` may be empty when no input needs a gradient.
    Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
    Var record(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

    // Reverse sweep from a scalar node. Returns gradients for every leaf
    // reachable from `loss`.
    BasicGradients<T> backward(const Var& loss) const;

    const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
    bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }
    bool is_leaf(int id) const { return nodes_.at(static_cast<std::size_t>(id)).leaf; }
    const std::string& op_name(int id) const { return nodes_.at(static_cast<std::size_t>(id)).op; }
    const std::vector<int>& inputs(int id) const { return nodes_.at(static_cast<std::size_t>(id)).inputs; }
    std::size_t size() const noexcept { return nodes_.size(); }

    void reserve(std::size_t n) { nodes_.reserve(n); }

private:
    struct Node {
        std::string op;
        Tensor value;
        std::vector<int> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        bool leaf = false;
    };
    std::vector<Node> nodes_;
};

using Tape = BasicTape<float>;
using Var = BasicVar<float>;
using Gradients = BasicGradients<float>;
using TapeD = BasicTape<double>;
using VarD = BasicVar<double>;
using GradientsD = BasicGradients<double>;

}  // namespace csd::num
