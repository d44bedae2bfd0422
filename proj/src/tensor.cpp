#include "ria/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "ria/errors.hpp"

namespace ria {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Dimension: return "dimension";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::Contract: return "contract";
        case ErrorKind::Lookup: return "lookup";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Invariant: return "invariant";
        case ErrorKind::Config: return "config";
        case ErrorKind::Training: return "training";
        case ErrorKind::CacheMiss: return "cache_miss";
        case ErrorKind::UndefinedMetric: return "undefined_metric";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

template <typename Real>
Tensor<Real>::Tensor(Shape s, std::vector<Real> values) : shape(std::move(s)), data(std::move(values)) {
    for (auto e : shape) {
        if (e == 0) fail(ErrorKind::Dimension, "tensor extents must be positive, got " + shape_string(shape));
    }
    if (numel(shape) != data.size()) {
        fail(ErrorKind::Dimension, "shape " + shape_string(shape) + " does not match buffer of " +
                                       std::to_string(data.size()) + " elements");
    }
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape s) {
    return filled(std::move(s), Real(0));
}

template <typename Real>
Tensor<Real> Tensor<Real>::filled(Shape s, Real value) {
    const auto n = numel(s);
    return Tensor(std::move(s), std::vector<Real>(n, value));
}

template <typename Real>
void Tensor<Real>::zero_grad() {
    grad.assign(data.size(), Real(0));
}

template struct Tensor<float>;
template struct Tensor<double>;

}  // namespace ria
