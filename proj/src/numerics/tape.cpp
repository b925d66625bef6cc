#include "csd/numerics/tape.hpp"

#include <cmath>

namespace csd::num {

template <typename T>
const BasicTensor<T>& BasicVar<T>::value() const
{
    if (!valid()) throw ContractViolation("use of an unbound tape variable");
    return tape_->value(id_);
}

template <typename T>
bool BasicVar<T>::requires_grad() const
{
    return valid() && tape_->requires_grad(id_);
}

template <typename T>
BasicTensor<T>* GradSink<T>::operator()(const BasicVar<T>& input)
{
    if (!tape_.requires_grad(input.id())) return nullptr;
    auto& g = grads_[static_cast<std::size_t>(input.id())];
    if (g.empty() && !input.value().empty()) g = BasicTensor<T>(input.value().shape());
    if (g.shape() != input.value().shape()) g = BasicTensor<T>(input.value().shape());
    return &g;
}

template <typename T>
const BasicTensor<T>& BasicGradients<T>::operator[](const BasicVar<T>& v) const
{
    auto it = map_.find(v.id());
    if (it == map_.end()) throw ContractViolation("no gradient recorded for node " + std::to_string(v.id()));
    return it->second;
}

template <typename T>
BasicVar<T> BasicTape<T>::leaf(Tensor value)
{
    Node n;
    n.op = "leaf";
    n.value = std::move(value);
    n.requires_grad = true;
    n.leaf = true;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
BasicVar<T> BasicTape<T>::constant(Tensor value)
{
    Node n;
    n.op = "constant";
    n.value = std::move(value);
    n.leaf = true;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
BasicVar<T> BasicTape<T>::record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn)
{
    return record(op, std::move(value), std::vector<Var>(inputs), std::move(fn));
}

template <typename T>
BasicVar<T> BasicTape<T>::record(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn)
{
    Node n;
    n.op = op;
    n.value = std::move(value);
    for (const auto& in : inputs) {
        if (in.tape() != this) throw ContractViolation(std::string("op ") + op + " mixes variables from different tapes");
        n.inputs.push_back(in.id());
        n.requires_grad = n.requires_grad || requires_grad(in.id());
    }
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
BasicGradients<T> BasicTape<T>::backward(const Var& loss) const
{
    if (loss.tape() != this) throw ContractViolation("backward: loss belongs to a different tape");
    const Tensor& lv = value(loss.id());
    if (lv.size() != 1)
        throw ContractViolation("backward: loss must be scalar, got shape " + shape_string(lv.shape()));

    std::vector<Tensor> grads(nodes_.size());
    BasicGradients<T> out;
    if (!requires_grad(loss.id())) return out;
    grads[static_cast<std::size_t>(loss.id())] = Tensor(lv.shape(), T(1));
    GradSink<T> sink(grads, *this);

    for (int id = loss.id(); id >= 0; --id) {
        const Node& node = nodes_[static_cast<std::size_t>(id)];
        Tensor& g = grads[static_cast<std::size_t>(id)];
        if (g.empty() || !node.requires_grad) continue;
        if (!g.all_finite())
            throw NumericError("non-finite gradient at node " + std::to_string(id) + " (" + node.op + ")");
        if (node.leaf) continue;
        if (node.backward) node.backward(g, sink);
        // Interior gradients are not part of the result; release early.
        g = Tensor();
    }
    for (int id = 0; id <= loss.id(); ++id) {
        const Node& node = nodes_[static_cast<std::size_t>(id)];
        if (node.leaf && node.requires_grad) {
            auto& g = grads[static_cast<std::size_t>(id)];
            out.map_.emplace(id, g.empty() ? Tensor(node.value.shape()) : std::move(g));
        }
    }
    return out;
}

template class BasicVar<float>;
template class BasicVar<double>;
template class GradSink<float>;
template class GradSink<double>;
template class BasicGradients<float>;
template class BasicGradients<double>;
template class BasicTape<float>;
template class BasicTape<double>;

}  // namespace csd::num
