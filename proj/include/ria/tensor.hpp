#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ria {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major buffer with an optional gradient of the same shape.
///
/// Rank-1 tensors are vectors; most model code works on rank-2 [rows x cols]
/// tensors. `rows()` folds every leading axis together so last-axis
/// operations treat any rank uniformly.
template <typename Real>
struct Tensor {
    Shape shape;
    std::vector<Real> data;
    bool requires_grad = false;
    std::vector<Real> grad;  // empty when absent

    Tensor() = default;
    Tensor(Shape s, std::vector<Real> values);

    static Tensor zeros(Shape s);
    static Tensor filled(Shape s, Real value);

    std::size_t size() const { return data.size(); }
    std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
    std::size_t rows() const { return cols() == 0 ? 0 : data.size() / cols(); }

    Real& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    Real at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    std::span<const Real> row(std::size_t r) const {
        return {data.data() + r * cols(), cols()};
    }

    bool has_grad() const { return !grad.empty(); }
    void zero_grad();
};

extern template struct Tensor<float>;
extern template struct Tensor<double>;

}  // namespace ria
