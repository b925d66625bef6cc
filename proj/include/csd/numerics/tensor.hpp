#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "csd/error.hpp"

namespace csd::num {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major tensor with value semantics. Production code uses the
// float32 instantiation; float64 exists for finite-difference oracles.
template <typename Scalar>
class BasicTensor {
public:
    using value_type = Scalar;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, Scalar fill = Scalar(0))
        : shape_(std::move(shape)), data_(shape_size(shape_), fill)
    {
    }
    BasicTensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        if (shape_size(shape_) != data_.size())
            throw ContractViolation("tensor shape " + shape_string(shape_) + " does not match " +
                                    std::to_string(data_.size()) + " values");
    }

    static BasicTensor scalar(Scalar v) { return BasicTensor(Shape{}, std::vector<Scalar>{v}); }
    static BasicTensor from(std::initializer_list<Scalar> values)
    {
        return BasicTensor(Shape{values.size()}, std::vector<Scalar>(values));
    }

    template <typename Other>
    BasicTensor<Other> cast() const
    {
        return BasicTensor<Other>(shape_, std::vector<Other>(data_.begin(), data_.end()));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<Scalar> data() noexcept { return data_; }
    std::span<const Scalar> data() const noexcept { return data_; }
    std::vector<Scalar>& vec() noexcept { return data_; }
    const std::vector<Scalar>& vec() const noexcept { return data_; }

    Scalar& operator[](std::size_t i) { return data_[i]; }
    Scalar operator[](std::size_t i) const { return data_[i]; }

    Scalar& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    Scalar at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    Scalar& at(std::size_t i, std::size_t j, std::size_t k) { return data_[(i * shape_[1] + j) * shape_[2] + k]; }
    Scalar at(std::size_t i, std::size_t j, std::size_t k) const
    {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    Scalar item() const
    {
        if (data_.size() != 1) throw ContractViolation("item() on tensor of shape " + shape_string(shape_));
        return data_[0];
    }

    BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), data_); }

    bool all_finite() const noexcept
    {
        return std::all_of(data_.begin(), data_.end(), [](Scalar v) { return std::isfinite(v); });
    }

    void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

    friend bool operator==(const BasicTensor& a, const BasicTensor& b)
    {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<Scalar> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

}  // namespace csd::num
