#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "contnet/errors.hpp"

namespace contnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// A rank-1 tensor of shape [n] is a single state vector; a rank-2 tensor of
/// shape [n, B] holds B states as columns. Scalars are shape [1].
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor filled(Shape shape, double value);
    static Tensor vector(std::vector<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const;

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    /// Element (row, col) of a rank-2 tensor.
    double at(std::size_t row, std::size_t col) const;
    double& at(std::size_t row, std::size_t col);

    /// Value of a single-element tensor.
    double item() const;

    bool all_finite() const noexcept;

    Tensor reshaped(Shape shape) const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor tanh(const Tensor& a);

/// [m,k]x[k,n] -> [m,n] and [m,k]x[k] -> [m].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Adds bias [D] to every column of h ([D] or [D,B]).
Tensor add_bias(const Tensor& h, const Tensor& bias);

/// Multiplies every element of a by the single value held in s (shape [1]).
Tensor scale_by(const Tensor& s, const Tensor& a);

/// Slice `index` along the leading axis: [M, ...rest] -> [...rest].
/// A rank-1 input yields shape [1].
Tensor select(const Tensor& a, std::size_t index);

Tensor sum(const Tensor& a);
/// Mean over all elements of (a - b)^2.
Tensor mse(const Tensor& a, const Tensor& b);

/// Mean negative log-softmax of the labelled class. logits: [C, B], one
/// label per column.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

/// Duplicates every leading-axis slice into two adjacent slices.
Tensor repeat_leading(const Tensor& a, std::size_t times);

double max_abs_diff(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(double factor, const Tensor& a) { return scale(a, factor); }

bool all_finite(const Tensor& t);

} // namespace contnet
