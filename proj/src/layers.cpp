#include "ria/layers.hpp"

#include <cmath>
#include <optional>

#include "ria/errors.hpp"

namespace ria {

std::string_view stage_name(Stage s) {
    switch (s) {
        case Stage::Ucdt: return "ucdt";
        case Stage::HistoryPiau: return "history_piau";
        case Stage::TargetPiau: return "target_piau";
        case Stage::Ptau: return "ptau";
        case Stage::Lmh: return "lmh";
    }
    return "unknown";
}

OpCounts& OpCounts::operator+=(const OpCounts& o) {
    hstu_evals += o.hstu_evals;
    target_attention_evals += o.target_attention_evals;
    self_attention_evals += o.self_attention_evals;
    mlp_evals += o.mlp_evals;
    return *this;
}

void OpCounters::add(Stage stage, Op op, std::uint64_t n) {
    counts_[static_cast<std::size_t>(stage)][static_cast<std::size_t>(op)].fetch_add(n, std::memory_order_relaxed);
}

OpCounts OpCounters::stage(Stage stage) const {
    const auto& row = counts_[static_cast<std::size_t>(stage)];
    return {row[0].load(), row[1].load(), row[2].load(), row[3].load()};
}

OpCounts OpCounters::total() const {
    OpCounts sum;
    for (std::size_t s = 0; s < kStageCount; ++s) sum += stage(static_cast<Stage>(s));
    return sum;
}

void OpCounters::reset() {
    for (auto& row : counts_)
        for (auto& c : row) c.store(0);
}

// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto t = Tensor<Real>::zeros(std::move(shape));
    for (auto& x : t.data) x = static_cast<Real>(dist(rng));
    t.requires_grad = true;
    return t;
}

template <typename Real>
Linear<Real> Linear<Real>::init(std::size_t in, std::size_t out, Rng& rng) {
    Linear layer;
    layer.weight = uniform_init<Real>({in, out}, in, rng);
    layer.bias = uniform_init<Real>({out}, in, rng);
    return layer;
}

template <typename Real>
void Linear<Real>::zero() {
    std::fill(weight.data.begin(), weight.data.end(), Real(0));
    std::fill(bias.data.begin(), bias.data.end(), Real(0));
}

template <typename Real>
Mlp<Real> Mlp<Real>::init(const std::vector<std::size_t>& widths, Rng& rng) {
    if (widths.size() < 2) fail(ErrorKind::Config, "an MLP needs at least an input and an output width");
    Mlp net;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) net.layers.push_back(Linear<Real>::init(widths[i], widths[i + 1], rng));
    return net;
}

template <typename Real>
HstuBlock<Real> HstuBlock<Real>::init(std::size_t d, MaskMode mask, Rng& rng) {
    HstuBlock block;
    block.f1 = Linear<Real>::init(d, 4 * d, rng);
    block.f2 = Linear<Real>::init(d, d, rng);
    block.f2.zero();
    block.gamma = Tensor<Real>::filled({d}, Real(1));
    block.gamma.requires_grad = true;
    block.beta = Tensor<Real>::zeros({d});
    block.beta.requires_grad = true;
    block.mask = mask;
    return block;
}

template <typename Real>
TargetAttention<Real> TargetAttention<Real>::init(std::size_t d, Rng& rng) {
    TargetAttention att;
    att.scorer = Mlp<Real>::init({4 * d, d, 1}, rng);
    return att;
}

template <typename Real>
SelfAttention<Real> SelfAttention<Real>::init(std::size_t d, std::size_t heads, Rng& rng) {
    if (heads == 0 || d % heads != 0) {
        fail(ErrorKind::Config, "self-attention width " + std::to_string(d) + " not divisible by " +
                                    std::to_string(heads) + " heads");
    }
    SelfAttention att;
    att.wq = uniform_init<Real>({d, d}, d, rng);
    att.wk = uniform_init<Real>({d, d}, d, rng);
    att.wv = uniform_init<Real>({d, d}, d, rng);
    att.heads = heads;
    return att;
}

template <typename Real>
EmbeddingTable<Real> EmbeddingTable<Real>::init(std::string name, std::size_t vocab, std::size_t dim, Rng& rng) {
    EmbeddingTable table;
    table.name = std::move(name);
    table.rows = uniform_init<Real>({vocab, dim}, dim, rng);
    return table;
}

// ---------------------------------------------------------------------------

template <typename Real>
Var linear(Graph<Real>& g, Linear<Real>& layer, Var x) {
    return g.add(g.matmul(x, g.parameter(layer.weight)), g.parameter(layer.bias));
}

template <typename Real>
Var mlp(Graph<Real>& g, Mlp<Real>& net, Var x, const Probe& probe) {
    probe.tally(OpCounters::Op::Mlp);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        x = linear(g, net.layers[i], x);
        if (i + 1 < net.layers.size()) x = g.silu(x);
    }
    return x;
}

template <typename Real>
Var hstu_block(Graph<Real>& g, HstuBlock<Real>& block, Var x, const Probe& probe) {
    const Shape sx = g.shape(x);
    if (sx.size() != 2 || sx[0] == 0) fail(ErrorKind::Contract, "hstu_block on empty sequence " + shape_string(sx));
    const std::size_t s = sx[0], d = block.width();
    if (sx[1] != d) fail(ErrorKind::Dimension, "hstu_block width " + std::to_string(d) + " vs input " + shape_string(sx));
    probe.tally(OpCounters::Op::Hstu);

    const std::array<std::size_t, 4> widths{d, d, d, d};
    auto parts = g.split(g.silu(linear(g, block.f1, x)), widths);
    Var u = parts[0], v = parts[1], q = parts[2], k = parts[3];

    Var scores = g.scale(g.matmul(q, g.transpose(k)), Real(1) / std::sqrt(static_cast<Real>(d)));
    Var attn = g.silu(scores);
    if (block.mask == MaskMode::Causal) {
        auto mask = Tensor<Real>::zeros({s, s});
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = 0; j <= i; ++j) mask.at(i, j) = Real(1);
        attn = g.mul(attn, g.constant(std::move(mask)));
    }
    attn = g.scale(attn, Real(1) / static_cast<Real>(s));

    Var gated = g.mul(g.matmul(attn, v), u);
    Var normed = g.layer_norm(gated, g.parameter(block.gamma), g.parameter(block.beta), Real(kLayerNormEps));
    return g.add(x, linear(g, block.f2, normed));
}

template <typename Real>
Var target_attention(Graph<Real>& g, TargetAttention<Real>& att, Var query, Var keys, const Probe& probe) {
    const Shape sk = g.shape(keys);
    if (sk.size() != 2 || sk[0] == 0) fail(ErrorKind::Contract, "target_attention with empty keys");
    probe.tally(OpCounters::Op::TargetAttention);
    const std::size_t t = sk[0];
    Var logits = mlp(g, att.scorer, g.pair_features(query, keys));
    Var weights = g.reshape(logits, {1, t});
    if (att.normalize) weights = g.softmax_rows(weights);
    return g.matmul(weights, keys);
}

template <typename Real>
Var self_attention(Graph<Real>& g, SelfAttention<Real>& att, Var e, const Probe& probe, std::size_t valid_rows) {
    const Shape se = g.shape(e);
    const std::size_t d = att.width();
    if (se.size() != 2 || se[0] == 0 || se[1] != d) {
        fail(ErrorKind::Dimension, "self_attention expects [m x " + std::to_string(d) + "], got " + shape_string(se));
    }
    const std::size_t rows = se[0];
    if (valid_rows > rows) fail(ErrorKind::Contract, "valid_rows " + std::to_string(valid_rows) + " exceeds " + std::to_string(rows));
    probe.tally(OpCounters::Op::SelfAttention);
    std::optional<Var> key_mask;
    if (valid_rows != 0 && valid_rows < rows) {
        auto mask = Tensor<Real>::zeros({rows, rows});
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = valid_rows; j < rows; ++j) mask.at(i, j) = Real(kMaskedScore);
        key_mask = g.constant(std::move(mask));
    }
    Var q = g.matmul(e, g.parameter(att.wq));
    Var k = g.matmul(e, g.parameter(att.wk));
    Var v = g.matmul(e, g.parameter(att.wv));
    const std::size_t hd = d / att.heads;
    const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(hd));
    std::vector<Var> heads;
    for (std::size_t h = 0; h < att.heads; ++h) {
        Var qh = att.heads == 1 ? q : g.slice_cols(q, h * hd, hd);
        Var kh = att.heads == 1 ? k : g.slice_cols(k, h * hd, hd);
        Var vh = att.heads == 1 ? v : g.slice_cols(v, h * hd, hd);
        Var scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt);
        if (key_mask) scores = g.add(scores, *key_mask);
        Var p = g.softmax_rows(scores);
        heads.push_back(g.matmul(p, vh));
    }
    return heads.size() == 1 ? heads[0] : g.concat(heads);
}

template <typename Real>
Var embed_features(Graph<Real>& g, std::vector<FieldLookup<Real>>& fields) {
    if (fields.empty()) fail(ErrorKind::Contract, "embed_features with no fields");
    std::vector<Var> parts;
    const std::size_t rows = fields.front().ids.size();
    for (auto& f : fields) {
        if (f.ids.size() != rows) fail(ErrorKind::Dimension, "field '" + f.field + "' has a different entity count");
        for (auto id : f.ids) {
            if (id >= f.table->vocab()) {
                fail(ErrorKind::Lookup, "field '" + f.field + "' index " + std::to_string(id) +
                                            " out of range for table '" + f.table->name + "' of " +
                                            std::to_string(f.table->vocab()) + " rows");
            }
        }
        parts.push_back(g.gather_rows(g.parameter(f.table->rows), f.ids));
    }
    return parts.size() == 1 ? parts[0] : g.concat(parts);
}

#define RIA_INSTANTIATE_LAYERS(Real)                                                                  \
    template Tensor<Real> uniform_init<Real>(Shape, std::size_t, Rng&);                                \
    template struct Linear<Real>;                                                                      \
    template struct Mlp<Real>;                                                                         \
    template struct HstuBlock<Real>;                                                                   \
    template struct TargetAttention<Real>;                                                             \
    template struct SelfAttention<Real>;                                                               \
    template struct EmbeddingTable<Real>;                                                              \
    template Var linear<Real>(Graph<Real>&, Linear<Real>&, Var);                                       \
    template Var mlp<Real>(Graph<Real>&, Mlp<Real>&, Var, const Probe&);                               \
    template Var hstu_block<Real>(Graph<Real>&, HstuBlock<Real>&, Var, const Probe&);                  \
    template Var target_attention<Real>(Graph<Real>&, TargetAttention<Real>&, Var, Var, const Probe&); \
    template Var self_attention<Real>(Graph<Real>&, SelfAttention<Real>&, Var, const Probe&, std::size_t); \
    template Var embed_features<Real>(Graph<Real>&, std::vector<FieldLookup<Real>>&);

RIA_INSTANTIATE_LAYERS(float)
RIA_INSTANTIATE_LAYERS(double)

}  // namespace ria
