#include "ria/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ria/errors.hpp"

namespace ria {

namespace {

enum BinaryKind { kAdd, kSub, kMul };
enum UnaryKind { kSigmoid, kSilu, kExp, kLog };

template <typename Real>
Real sigmoid_of(Real x) {
    return Real(1) / (Real(1) + std::exp(-x));
}

bool is_suffix(const Shape& full, const Shape& tail) {
    if (tail.size() > full.size()) return false;
    return std::equal(tail.rbegin(), tail.rend(), full.rbegin());
}

std::size_t last_extent(const Shape& s) { return s.empty() ? 1 : s.back(); }

void require_rank2(const Shape& s, const char* op) {
    if (s.size() != 2) {
        fail(ErrorKind::Dimension, std::string(op) + " expects a rank-2 tensor, got " + shape_string(s));
    }
}

}  // namespace

template <typename Real>
Var Graph<Real>::push(Shape shape, std::vector<Real> value, bool needs_grad,
                      std::function<void(Graph&, std::uint32_t)> backward) {
    Node node;
    node.shape = std::move(shape);
    node.value = std::move(value);
    node.needs_grad = needs_grad;
    if (needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename Real>
std::span<Real> Graph<Real>::acc(Var v) {
    auto& node = nodes_[v.id];
    if (node.grad.empty()) node.grad.assign(numel(node.shape), Real(0));
    return node.grad;
}

template <typename Real>
Var Graph<Real>::constant(Tensor<Real> value) {
    return push(value.shape, std::move(value.data), false, {});
}

template <typename Real>
Var Graph<Real>::input(Tensor<Real> value, bool requires_grad) {
    return push(value.shape, std::move(value.data), requires_grad, {});
}

template <typename Real>
Var Graph<Real>::parameter(Tensor<Real>& param) {
    if (auto it = bound_.find(&param); it != bound_.end()) return Var{it->second};
    Node node;
    node.shape = param.shape;
    node.param = &param;
    node.needs_grad = param.requires_grad;
    nodes_.push_back(std::move(node));
    auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
    bound_.emplace(&param, id);
    return Var{id};
}

template <typename Real>
std::span<const Real> Graph<Real>::value(Var v) const {
    const auto& node = nodes_[v.id];
    if (node.param) return node.param->data;
    return node.value;
}

template <typename Real>
Tensor<Real> Graph<Real>::tensor(Var v) const {
    auto vals = value(v);
    return Tensor<Real>(shape(v), std::vector<Real>(vals.begin(), vals.end()));
}

template <typename Real>
Real Graph<Real>::scalar(Var v) const {
    auto vals = value(v);
    if (vals.size() != 1) fail(ErrorKind::Contract, "scalar() on tensor of shape " + shape_string(shape(v)));
    return vals[0];
}

template <typename Real>
std::vector<Real> Graph<Real>::grad(Var v) const {
    const auto& node = nodes_[v.id];
    if (node.grad.empty()) return std::vector<Real>(numel(node.shape), Real(0));
    return node.grad;
}

template <typename Real>
void Graph<Real>::backward(Var loss) {
    if (numel(shape(loss)) != 1) {
        fail(ErrorKind::Contract, "backward needs a scalar loss, got shape " + shape_string(shape(loss)));
    }
    for (auto& node : nodes_) node.grad.clear();
    if (!needs(loss)) return;
    acc(loss)[0] = Real(1);
    for (std::uint32_t id = loss.id + 1; id-- > 0;) {
        auto& node = nodes_[id];
        if (!node.needs_grad || node.grad.empty()) continue;
        if (node.backward) {
            node.backward(*this, id);
        } else if (node.param) {
            auto& p = *node.param;
            if (p.grad.size() != p.data.size()) p.grad.assign(p.data.size(), Real(0));
            for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += node.grad[i];
        }
    }
}

// ---------------------------------------------------------------------------

template <typename Real>
Var Graph<Real>::matmul(Var a, Var b) {
    const auto& sa = shape(a);
    const auto& sb = shape(b);
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
        fail(ErrorKind::Dimension, "matmul shape mismatch: " + shape_string(sa) + " x " + shape_string(sb));
    }
    const std::size_t r = sa[0], k = sa[1], c = sb[1];
    auto av = value(a);
    auto bv = value(b);
    std::vector<Real> out(r * c, Real(0));
    for (std::size_t i = 0; i < r; ++i) {
        Real* orow = out.data() + i * c;
        for (std::size_t p = 0; p < k; ++p) {
            const Real aip = av[i * k + p];
            const Real* brow = bv.data() + p * c;
            for (std::size_t j = 0; j < c; ++j) orow[j] += aip * brow[j];
        }
    }
    return push({r, c}, std::move(out), needs(a) || needs(b), [a, b, r, k, c](Graph& g, std::uint32_t self) {
        auto go = g.out_grad(self);
        auto av = g.value(a);
        auto bv = g.value(b);
        if (g.needs(a)) {
            auto ga = g.acc(a);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    Real s = 0;
                    for (std::size_t j = 0; j < c; ++j) s += go[i * c + j] * bv[p * c + j];
                    ga[i * k + p] += s;
                }
            }
        }
        if (g.needs(b)) {
            auto gb = g.acc(b);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const Real aip = av[i * k + p];
                    for (std::size_t j = 0; j < c; ++j) gb[p * c + j] += aip * go[i * c + j];
                }
            }
        }
    });
}

template <typename Real>
Var Graph<Real>::transpose(Var a) {
    const auto& sa = shape(a);
    require_rank2(sa, "transpose");
    const std::size_t r = sa[0], c = sa[1];
    auto av = value(a);
    std::vector<Real> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
    return push({c, r}, std::move(out), needs(a), [a, r, c](Graph& g, std::uint32_t self) {
        auto go = g.out_grad(self);
        auto ga = g.acc(a);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += go[j * r + i];
    });
}

template <typename Real>
Var Graph<Real>::broadcast_binary(Var a, Var b, int kind) {
    const auto& sa = shape(a);
    const auto& sb = shape(b);
    if (!is_suffix(sa, sb)) {
        fail(ErrorKind::Dimension, "incompatible shapes " + shape_string(sa) + " and " + shape_string(sb));
    }
    auto av = value(a);
    auto bv = value(b);
    const std::size_t n = av.size(), nb = bv.size();
    std::vector<Real> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Real x = av[i], y = bv[i % nb];
        out[i] = kind == kAdd ? x + y : kind == kSub ? x - y : x * y;
    }
    return push(sa, std::move(out), needs(a) || needs(b), [a, b, kind, n, nb](Graph& g, std::uint32_t self) {
        auto go = g.out_grad(self);
        if (g.needs(a)) {
            auto ga = g.acc(a);
            if (kind == kMul) {
                auto bv = g.value(b);
                for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * bv[i % nb];
            } else {
                for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
            }
        }
        if (g.needs(b)) {
            auto gb = g.acc(b);
            if (kind == kMul) {
                auto av = g.value(a);
                for (std::size_t i = 0; i < n; ++i) gb[i % nb] += go[i] * av[i];
            } else if (kind == kSub) {
                for (std::size_t i = 0; i < n; ++i) gb[i % nb] -= go[i];
            } else {
                for (std::size_t i = 0; i < n; ++i) gb[i % nb] += go[i];
            }
        }
    });
}

template <typename Real>
Var Graph<Real>::add(Var a, Var b) { return broadcast_binary(a, b, kAdd); }
template <typename Real>
Var Graph<Real>::sub(Var a, Var b) { return broadcast_binary(a, b, kSub); }
template <typename Real>
Var Graph<Real>::mul(Var a, Var b) { return broadcast_binary(a, b, kMul); }

template <typename Real>
Var Graph<Real>::scale(Var a, Real factor) {
    auto av = value(a);
    std::vector<Real> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
    return push(shape(a), std::move(out), needs(a), [a, factor](Graph& g, std::uint32_t self) {
        auto go = g.out_grad(self);
        auto ga = g.acc(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * factor;
    });
}

template <typename Real>
Var Graph<Real>::unary(Var a, int kind) {
    auto av = value(a);
    std::vector<Real> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        const Real x = av[i];
        switch (kind) {
            case kSigmoid: out[i] = sigmoid_of(x); break;
            case kSilu: out[i] = x * sigmoid_of(x); break;
            case kExp: out[i] = std::exp(x); break;
            case kLog:
                if (!(x > Real(0))) {
                    fail(ErrorKind::Domain, "log of non-positive value " + std::to_string(x) + " at flat index " +
                                                std::to_string(i));
                }
                out[i] = std::log(x);
                break;
        }
    }
    return push(shape(a), std::move(out), needs(a), [a, kind](Graph& g, std::uint32_t self) {
        auto go = g.out_grad(self);
        auto y = g.out_value(self);
        auto x = g.value(a);
        auto ga = g.acc(a);
        for (std::size_t i = 0; i < go.size(); ++i) {
            Real d;
            switch (kind) {
                case kSigmoid: d = y[i] * (Real(1) - y[i]); break;
                case kSilu: {
                    const Real s = sigmoid_of(x[i]);
                    d = s * (Real(1) + x[i] * (Real(1) - s));
                    break;
                }
                case kExp: d = y[i]; break;
                default: d = Real(1) / x[i]; break;
            }
            ga[i] += go[i] * d;
        }
    });
}

template <typename Real>
Var Graph<Real>::sigmoid(Var a) { return unary(a, kSigmoid); }
template <typename Real>
Var Graph<Real>::silu(Var a) { return unary(a, kSilu); }
template <typename Real>
Var Graph<Real>::exp(Var a) { return unary(a, kExp); }
template <typename Real>
Var Graph<Real>::log(Var a) { return unary(a, kLog); }

// ---------------------------------------------------------------------------

template <typename Real>
Var Graph<Real>::concat(std::span<const Var> parts) {
    if (parts.empty()) fail(ErrorKind::Contract, "concat of zero tensors");
    Shape lead(shape(parts[0]).begin(), shape(parts[0]).end() - 1);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    bool any = false;
    for (auto p : parts) {
        const auto& s = shape(p);
        if (s.empty() || !std::equal(lead.begin(), lead.end(), s.begin(), s.end() - 1) || s.size() != lead.size() + 1) {
            fail(ErrorKind::Dimension, "concat: " + shape_string(s) + " disagrees with " +
                                           shape_string(shape(parts[0])) + " on leading axes");
        }
        widths.push_back(s.back());
        total += s.back();
        any = any || needs(p);
    }
    const std::size_t rows = numel(lead);
    std::vector<Real> out(rows * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        auto pv = value(parts[k]);
        const std::size_t w = widths[k];
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(pv.data() + r * w, w, out.data() + r * total + offset);
        offset += w;
    }
    Shape out_shape = lead;
    out_shape.push_back(total);
    std::vector<Var> inputs(parts.begin(), parts.end());
    return push(std::move(out_shape), std::move(out), any,
                [inputs, widths, rows, total](Graph& g, std::uint32_t self) {
                    auto go = g.out_grad(self);
                    std::size_t offset = 0;
                    for (std::size_t k = 0; k < inputs.size(); ++k) {
                        const std::size_t w = widths[k];
                        if (g.needs(inputs[k])) {
                            auto gi = g.acc(inputs[k]);
                            for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t j = 0; j < w; ++j) gi[r * w + j] += go[r * total + offset + j];
                        }
                        offset += w;
                    }
                });
}

template <typename Real>
Var Graph<Real>::slice_cols(Var a, std::size_t begin, std::size_t width) {
    const auto& sa = shape(a);
    const std::size_t cols = last_extent(sa);
    if (width == 0 || begin + width > cols) {
        fail(ErrorKind::Dimension, "slice [" + std::to_string(begin) + ", " + std::to_string(begin + width) +
                                       ") outside last axis of " + shape_string(sa));
    }
    const std::size_t rows = numel(sa) / cols;
    auto av = value(a);
    std::vector<Real> out(rows * width);
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(av.data() + r * cols + begin, width, out.data() + r * width);
    Shape out_shape = sa;
    out_shape.back() = width;
    return push(std::move(out_shape), std::move(out), needs(a),
                [a, begin, width, rows, cols](Graph& g, std::uint32_t self) {
                    auto go = g.out_grad(self);
                    auto ga = g.acc(a);
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < width; ++j) ga[r * cols + begin + j] += go[r * width + j];
                });
}

template <typename Real>
std::vector<Var> Graph<Real>::split(Var a, std::span<const std::size_t> widths) {
    std::size_t total = 0;
    for (auto w : widths) total += w;
    if (total != last_extent(shape(a))) {
        fail(ErrorKind::Dimension, "split widths sum to " + std::to_string(total) + " but last axis of " +
                                       shape_string(shape(a)) + " differs");
    }
    std::vector<Var> out;
    std::size_t begin = 0;
    for (auto w : widths) {
        out.push_back(slice_cols(a, begin, w));
        begin += w;
    }
    return out;
}

template <typename Real>
Var Graph<Real>::concat_rows(std::span<const Var> parts) {
    if (parts.empty()) fail(ErrorKind::Contract, "concat_rows of zero tensors");
    const std::size_t cols = last_extent(shape(parts[0]));
    std::size_t rows = 0;
    bool any = false;
    std::vector<std::size_t> sizes;
    for (auto p : parts) {
        if (last_extent(shape(p)) != cols) {
            fail(ErrorKind::Dimension, "concat_rows: " + shape_string(shape(p)) + " vs " +
                                           shape_string(shape(parts[0])));
        }
        sizes.push_back(numel(shape(p)));
        rows += sizes.back() / cols;
        any = any || needs(p);
    }
    std::vector<Real> out;
    out.reserve(rows * cols);
    for (auto p : parts) {
        auto pv = value(p);
        out.insert(out.end(), pv.begin(), pv.end());
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return push({rows, cols}, std::move(out), any, [inputs, sizes](Graph& g, std::uint32_t self) {
        auto go = g.out_grad(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            if (g.needs(inputs[k])) {
                auto gi = g.acc(inputs[k]);
                for (std::size_t i = 0; i < sizes[k]; ++i) gi[i] += go[offset + i];
            }
            offset += sizes[k];
        }
    });
}

template <typename Real>
Var Graph<Real>::gather_rows(Var table, std::span<const std::size_t> indices) {
    const auto& st = shape(table);
    require_rank2(st, "gather_rows");
    const std::size_t vocab = st[0], cols = st[1];
    if (indices.empty()) fail(ErrorKind::Contract, "gather_rows with no indices");
    auto tv = value(table);
    std::vector<Real> out(indices.size() * cols);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= vocab) {
            fail(ErrorKind::Lookup, "row index " + std::to_string(indices[r]) + " out of range for " +
                                        shape_string(st));
        }
        std::copy_n(tv.data() + indices[r] * cols, cols, out.data() + r * cols);
    }
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    return push({idx.size(), cols}, std::move(out), needs(table), [table, idx, cols](Graph& g, std::uint32_t self) {
        auto go = g.out_grad(self);
        auto gt = g.acc(table);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t j = 0; j < cols; ++j) gt[idx[r] * cols + j] += go[r * cols + j];
    });
}

template <typename Real>
Var Graph<Real>::reshape(Var a, Shape new_shape) {
    if (numel(new_shape) != numel(shape(a))) {
        fail(ErrorKind::Dimension, "cannot reshape " + shape_string(shape(a)) + " to " + shape_string(new_shape));
    }
    auto av = value(a);
    return push(std::move(new_shape), std::vector<Real>(av.begin(), av.end()), needs(a),
                [a](Graph& g, std::uint32_t self) {
                    auto go = g.out_grad(self);
                    auto ga = g.acc(a);
                    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
                });
}

template <typename Real>
Var Graph<Real>::sum(Var a) {
    auto av = value(a);
    Real s = 0;
    for (auto x : av) s += x;
    return push({1}, {s}, needs(a), [a](Graph& g, std::uint32_t self) {
        const Real go = g.out_grad(self)[0];
        for (auto& x : g.acc(a)) x += go;
    });
}

template <typename Real>
Var Graph<Real>::mean(Var a) {
    auto av = value(a);
    Real s = 0;
    for (auto x : av) s += x;
    const Real n = static_cast<Real>(av.size());
    return push({1}, {s / n}, needs(a), [a, n](Graph& g, std::uint32_t self) {
        const Real go = g.out_grad(self)[0] / n;
        for (auto& x : g.acc(a)) x += go;
    });
}

// ---------------------------------------------------------------------------

template <typename Real>
Var Graph<Real>::softmax_rows(Var a) {
    const auto& sa = shape(a);
    const std::size_t cols = last_extent(sa);
    const std::size_t rows = numel(sa) / cols;
    auto av = value(a);
    std::vector<Real> out(av.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* x = av.data() + r * cols;
        Real* y = out.data() + r * cols;
        Real mx = x[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
        Real z = 0;
        for (std::size_t j = 0; j < cols; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (std::size_t j = 0; j < cols; ++j) y[j] /= z;
    }
    return push(sa, std::move(out), needs(a), [a, rows, cols](Graph& g, std::uint32_t self) {
        auto go = g.out_grad(self);
        auto y = g.out_value(self);
        auto ga = g.acc(a);
        for (std::size_t r = 0; r < rows; ++r) {
            Real dot = 0;
            for (std::size_t j = 0; j < cols; ++j) dot += go[r * cols + j] * y[r * cols + j];
            for (std::size_t j = 0; j < cols; ++j) ga[r * cols + j] += y[r * cols + j] * (go[r * cols + j] - dot);
        }
    });
}

template <typename Real>
Var Graph<Real>::layer_norm(Var x, Var gamma, Var beta, Real eps) {
    const auto& sx = shape(x);
    const std::size_t d = last_extent(sx);
    if (numel(shape(gamma)) != d || numel(shape(beta)) != d) {
        fail(ErrorKind::Dimension, "layer_norm affine shapes " + shape_string(shape(gamma)) + ", " +
                                       shape_string(shape(beta)) + " do not match last axis of " + shape_string(sx));
    }
    if (!(eps > Real(0))) fail(ErrorKind::Contract, "layer_norm eps must be positive");
    const std::size_t rows = numel(sx) / d;
    auto xv = value(x);
    auto gv = value(gamma);
    auto bv = value(beta);
    std::vector<Real> xhat(xv.size()), inv(rows), out(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* xr = xv.data() + r * d;
        Real mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<Real>(d);
        Real var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<Real>(d);
        inv[r] = Real(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (xr[j] - mu) * inv[r];
            out[r * d + j] = gv[j] * xhat[r * d + j] + bv[j];
        }
    }
    const bool any = needs(x) || needs(gamma) || needs(beta);
    return push(sx, std::move(out), any,
                [x, gamma, beta, rows, d, xhat = std::move(xhat), inv = std::move(inv)](Graph& g, std::uint32_t self) {
                    auto go = g.out_grad(self);
                    auto gv = g.value(gamma);
                    if (g.needs(gamma)) {
                        auto gg = g.acc(gamma);
                        for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t j = 0; j < d; ++j) gg[j] += go[r * d + j] * xhat[r * d + j];
                    }
                    if (g.needs(beta)) {
                        auto gb = g.acc(beta);
                        for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t j = 0; j < d; ++j) gb[j] += go[r * d + j];
                    }
                    if (g.needs(x)) {
                        auto gx = g.acc(x);
                        const Real dd = static_cast<Real>(d);
                        for (std::size_t r = 0; r < rows; ++r) {
                            Real s1 = 0, s2 = 0;
                            for (std::size_t j = 0; j < d; ++j) {
                                const Real dxh = go[r * d + j] * gv[j];
                                s1 += dxh;
                                s2 += dxh * xhat[r * d + j];
                            }
                            for (std::size_t j = 0; j < d; ++j) {
                                const Real dxh = go[r * d + j] * gv[j];
                                gx[r * d + j] += inv[r] / dd * (dd * dxh - s1 - xhat[r * d + j] * s2);
                            }
                        }
                    }
                });
}

template <typename Real>
Var Graph<Real>::pair_features(Var query, Var keys) {
    const auto& sk = shape(keys);
    require_rank2(sk, "pair_features keys");
    const std::size_t t = sk[0], d = sk[1];
    if (numel(shape(query)) != d) {
        fail(ErrorKind::Dimension, "pair_features query " + shape_string(shape(query)) + " vs keys " +
                                       shape_string(sk));
    }
    auto q = value(query);
    auto k = value(keys);
    std::vector<Real> out(t * 4 * d);
    for (std::size_t r = 0; r < t; ++r) {
        Real* o = out.data() + r * 4 * d;
        for (std::size_t j = 0; j < d; ++j) {
            const Real kj = k[r * d + j];
            o[j] = q[j];
            o[d + j] = kj;
            o[2 * d + j] = q[j] - kj;
            o[3 * d + j] = q[j] * kj;
        }
    }
    return push({t, 4 * d}, std::move(out), needs(query) || needs(keys),
                [query, keys, t, d](Graph& g, std::uint32_t self) {
                    auto go = g.out_grad(self);
                    auto q = g.value(query);
                    auto k = g.value(keys);
                    if (g.needs(query)) {
                        auto gq = g.acc(query);
                        for (std::size_t r = 0; r < t; ++r) {
                            const Real* o = go.data() + r * 4 * d;
                            for (std::size_t j = 0; j < d; ++j)
                                gq[j] += o[j] + o[2 * d + j] + o[3 * d + j] * k[r * d + j];
                        }
                    }
                    if (g.needs(keys)) {
                        auto gk = g.acc(keys);
                        for (std::size_t r = 0; r < t; ++r) {
                            const Real* o = go.data() + r * 4 * d;
                            for (std::size_t j = 0; j < d; ++j)
                                gk[r * d + j] += o[d + j] - o[2 * d + j] + o[3 * d + j] * q[j];
                        }
                    }
                });
}

template <typename Real>
Var Graph<Real>::bce_with_logits(Var logits, std::span<const Real> labels) {
    auto xv = value(logits);
    if (xv.size() != labels.size() || labels.empty()) {
        fail(ErrorKind::Dimension, "bce: " + std::to_string(xv.size()) + " logits vs " +
                                       std::to_string(labels.size()) + " labels");
    }
    Real s = 0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const Real x = xv[i], y = labels[i];
        s += std::max(x, Real(0)) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
    const Real n = static_cast<Real>(xv.size());
    std::vector<Real> y(labels.begin(), labels.end());
    return push({1}, {s / n}, needs(logits), [logits, y = std::move(y), n](Graph& g, std::uint32_t self) {
        const Real go = g.out_grad(self)[0] / n;
        auto xv = g.value(logits);
        auto gx = g.acc(logits);
        for (std::size_t i = 0; i < y.size(); ++i) gx[i] += go * (sigmoid_of(xv[i]) - y[i]);
    });
}

template class Graph<float>;
template class Graph<double>;

}  // namespace ria
