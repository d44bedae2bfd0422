#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ria/config.hpp"
#include "ria/data.hpp"
#include "ria/graph.hpp"
#include "ria/layers.hpp"

namespace ria {

/// Every learnable tensor of the model. `visit` walks them in a fixed order
/// under stable dotted names; that order is the registry order used by the
/// optimizer and the checkpoint format.
template <typename Real>
struct RiaParams {
    EmbeddingTable<Real> item, cat, user, position, click;
    std::vector<HstuBlock<Real>> cand_encoder;
    std::vector<HstuBlock<Real>> ctx_encoder;
    TargetAttention<Real> ucdt_attention;
    Mlp<Real> pointwise_head;
    SelfAttention<Real> piau;
    TargetAttention<Real> ptau;
    Mlp<Real> adaptor;
    std::vector<HstuBlock<Real>> lmh;
    Mlp<Real> listwise_head;

    static RiaParams init(const RiaConfig& cfg);

    template <typename F>
    void visit(F&& f) {
        f("emb.item", item.rows);
        f("emb.cat", cat.rows);
        f("emb.user", user.rows);
        f("emb.position", position.rows);
        f("emb.click", click.rows);
        for (std::size_t i = 0; i < cand_encoder.size(); ++i) cand_encoder[i].visit("ucdt.cand_hstu." + std::to_string(i), f);
        for (std::size_t i = 0; i < ctx_encoder.size(); ++i) ctx_encoder[i].visit("ucdt.ctx_hstu." + std::to_string(i), f);
        ucdt_attention.visit("ucdt.attention", f);
        pointwise_head.visit("ucdt.head", f);
        piau.visit("cuht.piau", f);
        ptau.visit("cuht.ptau", f);
        adaptor.visit("lmh.adaptor", f);
        for (std::size_t i = 0; i < lmh.size(); ++i) lmh[i].visit("lmh.hstu." + std::to_string(i), f);
        listwise_head.visit("lmh.head", f);
    }

    std::size_t scalar_count();
    void zero_grad();
};

// ---------------------------------------------------------------------------
// Records as embedding indices
// ---------------------------------------------------------------------------

/// Rows in display order (position 1 first).
struct PageIds {
    std::vector<std::size_t> item, cat, click, position;
};

inline constexpr std::size_t kClickUnknown = 2;  // marker for pages being scored

struct RequestIds {
    std::string request_id;
    std::vector<std::int64_t> candidate_ids;
    std::vector<std::size_t> cand_item, cand_cat;
    std::vector<std::size_t> ctx_user, ctx_item;
    std::vector<PageIds> history;             // at most cfg.l, oldest first
    std::vector<std::size_t> target_rows;      // candidate row per display position
    std::vector<int> target_clicks;
};

RequestIds encode_request(const ImpressionRecord& record, const RiaConfig& cfg);

/// Slot count of each history page.
std::vector<std::size_t> history_lengths(const RequestIds& ids);

/// The page a candidate permutation would be rendered as; clicks are unknown.
PageIds page_for_rows(const RequestIds& ids, std::span<const std::size_t> rows);

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

struct UcdtOutput {
    Var reprs;   // [n x D], the x'' rows
    Var logits;  // [n x 1]
    Var probs;   // [n x 1]
};

struct ListwiseOutput {
    Var target_page_encoding;  // H_{L+1}
    Var position_context;      // w, [m x D']
    Var adapted;               // t, [m x D_t]
    Var logits;                // [m x 1]
    Var probs;                 // [m x 1]
};

struct RiaOutput {
    UcdtOutput ucdt;
    std::vector<Var> history_encodings;  // H_1..H_L
    ListwiseOutput listwise;
};

template <typename Real>
Var embed_candidates(Graph<Real>& g, RiaParams<Real>& p, const RequestIds& ids);
template <typename Real>
Var embed_context(Graph<Real>& g, RiaParams<Real>& p, const RequestIds& ids);
/// [m x D'] rows: item features (+ click marker) followed by the position embedding.
/// A page shorter than cfg.m is padded with zero rows.
template <typename Real>
Var embed_page(Graph<Real>& g, RiaParams<Real>& p, const RiaConfig& cfg, const PageIds& page);

template <typename Real>
UcdtOutput ucdt_forward(Graph<Real>& g, RiaParams<Real>& p, const RequestIds& ids, OpCounters* counters = nullptr);

template <typename Real>
std::vector<Var> piau_encode(Graph<Real>& g, RiaParams<Real>& p, std::span<const Var> pages, const Probe& probe = {},
                             std::span<const std::size_t> lengths = {});

/// Throws Contract when `history` is empty; cuht_forward handles that case.
/// Position o only attends to pages with more than o slots; with none it gets a zero row.
template <typename Real>
Var ptau_attend(Graph<Real>& g, RiaParams<Real>& p, std::span<const Var> history, Var target,
                const Probe& probe = {}, std::span<const std::size_t> lengths = {});

/// PTAU with the zero-history fallback (w = 0 when there are no history pages).
template <typename Real>
Var cuht_forward(Graph<Real>& g, RiaParams<Real>& p, const RiaConfig& cfg, std::span<const Var> history, Var target,
                 const Probe& probe = {}, std::span<const std::size_t> lengths = {});

template <typename Real>
Var lmh_forward(Graph<Real>& g, RiaParams<Real>& p, Var fused, const Probe& probe = {});

/// Target-page PIAU, PTAU, adaptor, LMH and head for one candidate list,
/// given the list's x'' rows and the history encodings. Shared by the full
/// and the cached paths so both run identical arithmetic.
template <typename Real>
ListwiseOutput listwise_forward(Graph<Real>& g, RiaParams<Real>& p, const RiaConfig& cfg, Var list_reprs,
                                std::span<const Var> history_encodings, const PageIds& target_page,
                                OpCounters* counters = nullptr, std::span<const std::size_t> history_lengths = {});

/// Full model on a record; `rows` overrides the logged target page.
template <typename Real>
RiaOutput ria_forward(Graph<Real>& g, RiaParams<Real>& p, const RiaConfig& cfg, const RequestIds& ids,
                      std::optional<std::span<const std::size_t>> rows = std::nullopt,
                      OpCounters* counters = nullptr);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct LossTerms {
    Var l1;
    Var l2;
    Var total;
};

template <typename Real>
Var pointwise_loss(Graph<Real>& g, const RiaConfig& cfg, const UcdtOutput& out, const RequestIds& ids);
template <typename Real>
Var listwise_loss(Graph<Real>& g, Var logits, std::span<const int> clicks);
/// w1 * L1 + w2 * L2; non-finite terms raise a Training error tagged with the term.
template <typename Real>
Var joint_loss(Graph<Real>& g, Var l1, Var l2, const RiaConfig& cfg);
template <typename Real>
LossTerms ria_loss(Graph<Real>& g, const RiaConfig& cfg, const RiaOutput& out, const RequestIds& ids);

/// Value-level BCE on probabilities. `labels` pairs a position with its click.
double pointwise_loss(std::span<const double> probs, std::span<const std::pair<std::size_t, int>> labels);
double listwise_loss(std::span<const double> probs, std::span<const int> clicks);
double joint_loss(double l1, double l2, double w1 = 1.0, double w2 = 1.0);

}  // namespace ria
