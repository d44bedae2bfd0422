#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ria/graph.hpp"
#include "ria/tensor.hpp"

namespace ria {

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Operation counters
// ---------------------------------------------------------------------------

enum class Stage : std::size_t { Ucdt, HistoryPiau, TargetPiau, Ptau, Lmh };
inline constexpr std::size_t kStageCount = 5;
std::string_view stage_name(Stage s);

struct OpCounts {
    std::uint64_t hstu_evals = 0;
    std::uint64_t target_attention_evals = 0;
    std::uint64_t self_attention_evals = 0;
    std::uint64_t mlp_evals = 0;

    OpCounts& operator+=(const OpCounts& o);
    bool operator==(const OpCounts&) const = default;
};

/// Per-stage block evaluation counts. Thread-safe; only ever incremented
/// until `reset`.
class OpCounters {
public:
    enum class Op : std::size_t { Hstu, TargetAttention, SelfAttention, Mlp };

    void add(Stage stage, Op op, std::uint64_t n = 1);
    OpCounts stage(Stage stage) const;
    OpCounts total() const;
    void reset();

private:
    std::array<std::array<std::atomic<std::uint64_t>, 4>, kStageCount> counts_{};
};

/// Where a block evaluation is tallied. A default probe counts nothing.
struct Probe {
    OpCounters* counters = nullptr;
    Stage stage = Stage::Ucdt;

    void tally(OpCounters::Op op) const {
        if (counters) counters->add(stage, op);
    }
};

// ---------------------------------------------------------------------------
// Parameter containers
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> uniform_init(Shape shape, std::size_t fan_in, Rng& rng);

template <typename Real>
struct Linear {
    Tensor<Real> weight;  // [in x out]
    Tensor<Real> bias;    // [out]

    static Linear init(std::size_t in, std::size_t out, Rng& rng);
    std::size_t in_width() const { return weight.shape[0]; }
    std::size_t out_width() const { return weight.shape[1]; }
    void zero();

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".weight", weight);
        f(prefix + ".bias", bias);
    }
};

/// SiLU between layers, raw logits out of the last one.
template <typename Real>
struct Mlp {
    std::vector<Linear<Real>> layers;

    static Mlp init(const std::vector<std::size_t>& widths, Rng& rng);
    std::size_t in_width() const { return layers.front().in_width(); }
    std::size_t out_width() const { return layers.back().out_width(); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        for (std::size_t i = 0; i < layers.size(); ++i) layers[i].visit(prefix + "." + std::to_string(i), f);
    }
};

enum class MaskMode { Causal, Full };

template <typename Real>
struct HstuBlock {
    Linear<Real> f1;  // d -> 4d, split into U, V, Q, K
    Linear<Real> f2;  // d -> d, zero at init
    Tensor<Real> gamma;
    Tensor<Real> beta;
    MaskMode mask = MaskMode::Full;

    static HstuBlock init(std::size_t d, MaskMode mask, Rng& rng);
    std::size_t width() const { return f2.out_width(); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f1.visit(prefix + ".f1", f);
        f2.visit(prefix + ".f2", f);
        f(prefix + ".norm.gamma", gamma);
        f(prefix + ".norm.beta", beta);
    }
};

template <typename Real>
struct TargetAttention {
    Mlp<Real> scorer;  // 4d -> ... -> 1
    bool normalize = true;

    static TargetAttention init(std::size_t d, Rng& rng);

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        scorer.visit(prefix + ".scorer", f);
    }
};

template <typename Real>
struct SelfAttention {
    Tensor<Real> wq, wk, wv;  // [d' x d']
    std::size_t heads = 1;

    static SelfAttention init(std::size_t d, std::size_t heads, Rng& rng);
    std::size_t width() const { return wq.shape[0]; }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".wq", wq);
        f(prefix + ".wk", wk);
        f(prefix + ".wv", wv);
    }
};

template <typename Real>
struct EmbeddingTable {
    std::string name;
    Tensor<Real> rows;  // [vocab x dim]

    static EmbeddingTable init(std::string name, std::size_t vocab, std::size_t dim, Rng& rng);
    std::size_t vocab() const { return rows.shape[0]; }
    std::size_t dim() const { return rows.shape[1]; }
};

/// One feature field of an entity: which table it reads and the per-entity ids.
template <typename Real>
struct FieldLookup {
    std::string field;
    EmbeddingTable<Real>* table = nullptr;
    std::vector<std::size_t> ids;
};

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

template <typename Real>
Var linear(Graph<Real>& g, Linear<Real>& layer, Var x);

template <typename Real>
Var mlp(Graph<Real>& g, Mlp<Real>& net, Var x, const Probe& probe = {});

/// SiLU-gated attention block:
///   (U, V, Q, K) = split(SiLU(f1(X)));  A = mask(SiLU(Q K^T / sqrt(d))) / s
///   out = X + f2(layer_norm(A V * U))
template <typename Real>
Var hstu_block(Graph<Real>& g, HstuBlock<Real>& block, Var x, const Probe& probe = {});

/// e_j = scorer([q, k_j, q - k_j, q * k_j]); returns sum_j softmax(e)_j k_j.
template <typename Real>
Var target_attention(Graph<Real>& g, TargetAttention<Real>& att, Var query, Var keys, const Probe& probe = {});

/// Rows at or past `valid_rows` are padding and never serve as keys; 0 means every row is valid.
template <typename Real>
Var self_attention(Graph<Real>& g, SelfAttention<Real>& att, Var e, const Probe& probe = {}, std::size_t valid_rows = 0);

/// Concatenates the fields in declaration order; one row per entity.
template <typename Real>
Var embed_features(Graph<Real>& g, std::vector<FieldLookup<Real>>& fields);

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kMaskedScore = -1e9;

}  // namespace ria
