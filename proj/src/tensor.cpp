#include "contnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace contnet {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

template <class Fn>
Tensor zip(const char* op, const Tensor& a, const Tensor& b, Fn fn)
{
    require_same_shape(op, a, b);
    Tensor out(a.shape());
    auto lhs = a.data();
    auto rhs = b.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = fn(lhs[i], rhs[i]);
    }
    return out;
}

} // namespace

std::size_t shape_numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            os << ',';
        }
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor() : shape_{1}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape) : shape_(std::move(shape))
{
    if (shape_.empty() || std::find(shape_.begin(), shape_.end(), std::size_t{0}) != shape_.end()) {
        throw ShapeError("tensor: shape must be a non-empty list of positive extents, got " +
                         shape_string(shape_));
    }
    data_.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : Tensor(std::move(shape))
{
    if (data.size() != data_.size()) {
        throw ShapeError("tensor: " + std::to_string(data.size()) + " values do not fill shape " +
                         shape_string(shape_));
    }
    data_ = std::move(data);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::filled(Shape shape, double value)
{
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::vector(std::vector<double> values)
{
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const
{
    if (axis >= shape_.size()) {
        throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape_));
    }
    return shape_[axis];
}

double Tensor::at(std::size_t row, std::size_t col) const { return data_[row * shape_[1] + col]; }

double& Tensor::at(std::size_t row, std::size_t col) { return data_[row * shape_[1] + col]; }

double Tensor::item() const
{
    if (data_.size() != 1) {
        throw ShapeError("item: tensor of shape " + shape_string(shape_) + " is not a scalar");
    }
    return data_[0];
}

bool Tensor::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool all_finite(const Tensor& t) { return t.all_finite(); }

Tensor add(const Tensor& a, const Tensor& b)
{
    return zip("add", a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b)
{
    return zip("sub", a, b, [](double x, double y) { return x - y; });
}

Tensor hadamard(const Tensor& a, const Tensor& b)
{
    return zip("elementwise-multiply", a, b, [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double factor)
{
    Tensor out(a.shape());
    auto src = a.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = factor * src[i];
    }
    return out;
}

Tensor tanh(const Tensor& a)
{
    Tensor out(a.shape());
    auto src = a.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = std::tanh(src[i]);
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b)
{
    const bool conforming = a.rank() == 2 && (b.rank() == 1 || b.rank() == 2) && a.dim(1) == b.dim(0);
    if (!conforming) {
        throw ShapeError("matmul: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
    const std::size_t m = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t n = b.rank() == 2 ? b.dim(1) : 1;
    Tensor out(b.rank() == 2 ? Shape{m, n} : Shape{m});
    auto lhs = a.data();
    auto rhs = b.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = dst.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = lhs[i * k + p];
            const double* brow = rhs.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] += aip * brow[j];
            }
        }
    }
    return out;
}

Tensor transpose(const Tensor& a)
{
    if (a.rank() == 1) {
        return a.reshaped({1, a.size()});
    }
    if (a.rank() != 2) {
        throw ShapeError("transpose: expected rank 2, got " + shape_string(a.shape()));
    }
    const std::size_t rows = a.dim(0);
    const std::size_t cols = a.dim(1);
    Tensor out({cols, rows});
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            out.at(j, i) = a.at(i, j);
        }
    }
    return out;
}

Tensor add_bias(const Tensor& h, const Tensor& bias)
{
    if (bias.rank() != 1 || h.rank() < 1 || h.rank() > 2 || h.dim(0) != bias.dim(0)) {
        throw ShapeError("add-bias: shape mismatch " + shape_string(h.shape()) + " vs " +
                         shape_string(bias.shape()));
    }
    Tensor out = h;
    const std::size_t rows = h.dim(0);
    const std::size_t cols = h.rank() == 2 ? h.dim(1) : 1;
    auto dst = out.data();
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            dst[i * cols + j] += bias[i];
        }
    }
    return out;
}

Tensor scale_by(const Tensor& s, const Tensor& a)
{
    if (s.size() != 1) {
        throw ShapeError("scale-by: multiplier must be a scalar, got " + shape_string(s.shape()) + " vs " +
                         shape_string(a.shape()));
    }
    return scale(a, s[0]);
}

Tensor select(const Tensor& a, std::size_t index)
{
    if (index >= a.dim(0)) {
        throw ShapeError("select: index " + std::to_string(index) + " out of range for shape " +
                         shape_string(a.shape()));
    }
    Shape rest(a.shape().begin() + 1, a.shape().end());
    if (rest.empty()) {
        rest = {1};
    }
    const std::size_t stride = shape_numel(rest);
    auto src = a.data().subspan(index * stride, stride);
    return Tensor(std::move(rest), std::vector<double>(src.begin(), src.end()));
}

Tensor sum(const Tensor& a)
{
    double total = 0.0;
    for (double v : a.data()) {
        total += v;
    }
    return Tensor::scalar(total);
}

Tensor mse(const Tensor& a, const Tensor& b)
{
    require_same_shape("mean-squared-error", a, b);
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        total += d * d;
    }
    return Tensor::scalar(total / static_cast<double>(a.size()));
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels)
{
    if (logits.rank() != 2 || logits.dim(1) != labels.size()) {
        throw ShapeError("cross-entropy: logits " + shape_string(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
    }
    const std::size_t classes = logits.dim(0);
    const std::size_t batch = logits.dim(1);
    double total = 0.0;
    for (std::size_t j = 0; j < batch; ++j) {
        if (labels[j] >= classes) {
            throw DomainError("cross-entropy: label " + std::to_string(labels[j]) + " outside " +
                              std::to_string(classes) + " classes");
        }
        double peak = logits.at(0, j);
        for (std::size_t c = 1; c < classes; ++c) {
            peak = std::max(peak, logits.at(c, j));
        }
        double norm = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            norm += std::exp(logits.at(c, j) - peak);
        }
        total += std::log(norm) + peak - logits.at(labels[j], j);
    }
    return Tensor::scalar(total / static_cast<double>(batch));
}

Tensor repeat_leading(const Tensor& a, std::size_t times)
{
    Shape shape = a.shape();
    const std::size_t stride = a.size() / shape[0];
    shape[0] *= times;
    Tensor out(shape);
    auto src = a.data();
    auto dst = out.data();
    for (std::size_t slice = 0; slice < a.dim(0); ++slice) {
        for (std::size_t r = 0; r < times; ++r) {
            std::copy_n(src.begin() + slice * stride, stride, dst.begin() + (slice * times + r) * stride);
        }
    }
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b)
{
    require_same_shape("max-abs-diff", a, b);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

double l2_norm(const Tensor& a)
{
    double total = 0.0;
    for (double v : a.data()) {
        total += v * v;
    }
    return std::sqrt(total);
}

} // namespace contnet
