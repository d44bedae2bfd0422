#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <random>
#include <vector>

#include "ria/errors.hpp"
#include "ria/graph.hpp"
#include "ria/layers.hpp"

namespace ria::testing {

using Rng64 = std::mt19937_64;

template <typename F>
std::optional<ErrorKind> kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return std::nullopt;
}

template <typename F>
std::string message_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return "<no error>";
}

inline std::vector<double> random_values(std::size_t count, Rng64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> out(count);
    for (auto& v : out) v = dist(rng);
    return out;
}

inline Tensor<double> random_tensor(Shape shape, Rng64& rng, double lo = -1.0, double hi = 1.0) {
    const auto count = numel(shape);
    return Tensor<double>(std::move(shape), random_values(count, rng, lo, hi));
}

inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Builds a scalar from inputs bound as graph leaves.
using ScalarFn = std::function<Var(Graph<double>&, std::vector<Var>&)>;

struct FdResult {
    double max_rel = 0.0;
    std::size_t probes = 0;
};

/// Reverse-mode gradients of `f` against central differences on every
/// scalar of every input.
inline FdResult finite_difference(const ScalarFn& f, std::vector<Tensor<double>> inputs, double step = 1e-4,
                                  double floor = 1e-8) {
    std::vector<std::vector<double>> analytic;
    {
        Graph<double> g;
        std::vector<Var> vars;
        for (const auto& t : inputs) vars.push_back(g.input(t, true));
        Var loss = f(g, vars);
        g.backward(loss);
        for (Var v : vars) analytic.push_back(g.grad(v));
    }
    auto eval = [&] {
        Graph<double> g;
        std::vector<Var> vars;
        for (const auto& t : inputs) vars.push_back(g.input(t, false));
        return g.scalar(f(g, vars));
    };
    FdResult out;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double saved = inputs[k].data[i];
            inputs[k].data[i] = saved + step;
            const double up = eval();
            inputs[k].data[i] = saved - step;
            const double down = eval();
            inputs[k].data[i] = saved;
            out.max_rel = std::max(out.max_rel, rel_err(analytic[k][i], (up - down) / (2 * step), floor));
            ++out.probes;
        }
    }
    return out;
}

inline double silu(double x) { return x / (1 + std::exp(-x)); }

// Plain-loop evaluation of one HSTU block, used as the oracle.
inline std::vector<double> hstu_oracle(const HstuBlock<double>& b, const std::vector<double>& x, std::size_t s) {
    const std::size_t d = b.f2.out_width();
    std::vector<double> h(s * 4 * d);
    for (std::size_t r = 0; r < s; ++r)
        for (std::size_t c = 0; c < 4 * d; ++c) {
            double acc = b.f1.bias.data[c];
            for (std::size_t i = 0; i < d; ++i) acc += x[r * d + i] * b.f1.weight.data[i * 4 * d + c];
            h[r * 4 * d + c] = silu(acc);
        }
    auto part = [&](std::size_t r, std::size_t which, std::size_t j) { return h[r * 4 * d + which * d + j]; };
    std::vector<double> gated(s * d);
    for (std::size_t r = 0; r < s; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0;
            for (std::size_t c = 0; c < s; ++c) {
                if (b.mask == MaskMode::Causal && c > r) continue;
                double qk = 0;
                for (std::size_t i = 0; i < d; ++i) qk += part(r, 2, i) * part(c, 3, i);
                acc += silu(qk / std::sqrt(static_cast<double>(d))) / static_cast<double>(s) * part(c, 1, j);
            }
            gated[r * d + j] = acc * part(r, 0, j);
        }
    }
    std::vector<double> out(s * d);
    for (std::size_t r = 0; r < s; ++r) {
        double mean = 0, var = 0;
        for (std::size_t j = 0; j < d; ++j) mean += gated[r * d + j];
        mean /= d;
        for (std::size_t j = 0; j < d; ++j) var += (gated[r * d + j] - mean) * (gated[r * d + j] - mean);
        var /= d;
        std::vector<double> normed(d);
        for (std::size_t j = 0; j < d; ++j) {
            normed[j] = (gated[r * d + j] - mean) / std::sqrt(var + kLayerNormEps) * b.gamma.data[j] + b.beta.data[j];
        }
        for (std::size_t c = 0; c < d; ++c) {
            double acc = b.f2.bias.data[c];
            for (std::size_t i = 0; i < d; ++i) acc += normed[i] * b.f2.weight.data[i * d + c];
            out[r * d + c] = x[r * d + c] + acc;
        }
    }
    return out;
}

}  // namespace ria::testing
