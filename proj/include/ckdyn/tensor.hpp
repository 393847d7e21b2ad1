#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ckdyn {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major float64 array. Value type: copies are deep, nothing is shared.
///
/// Rank-0 tensors (empty shape) hold a single scalar. Every dimension must be
/// positive and `product(shape) == data.size()` always holds.
class Tensor {
public:
    Tensor();  // scalar zero
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor vector(std::initializer_list<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor identity(std::size_t n);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rows() const;  // rank-2 only
    std::size_t cols() const;  // rank-2 only
    bool is_scalar() const noexcept { return data_.size() == 1; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    std::span<const double> row(std::size_t i) const;
    std::span<double> row(std::size_t i);

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;
    double item() const;  // value of a one-element tensor

    Tensor reshaped(Shape shape) const;
    Tensor transposed() const;  // rank-2 only

    bool all_finite() const noexcept;
    double max_abs() const noexcept;
    double norm2() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

// Plain (non-differentiable) arithmetic used by the equivalence oracles and
// the optimizer. Shapes must match exactly.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace ckdyn
