#include "ria/model.hpp"

#include <cmath>

#include "ria/errors.hpp"

namespace ria {

template <typename Real>
RiaParams<Real> RiaParams<Real>::init(const RiaConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const std::size_t d = cfg.d, dp = cfg.d_prime(), w = cfg.lmh_width();
    RiaParams p;
    p.item = EmbeddingTable<Real>::init("item", cfg.n_items, cfg.item_width(), rng);
    p.cat = EmbeddingTable<Real>::init("cat", cfg.n_cats, cfg.half_width(), rng);
    p.user = EmbeddingTable<Real>::init("user", cfg.n_users, cfg.half_width(), rng);
    p.position = EmbeddingTable<Real>::init("position", cfg.m, cfg.p_pos, rng);
    p.click = EmbeddingTable<Real>::init("click", 3, d, rng);
    for (std::size_t i = 0; i < cfg.ucdt_depth; ++i) p.cand_encoder.push_back(HstuBlock<Real>::init(d, MaskMode::Full, rng));
    for (std::size_t i = 0; i < cfg.ucdt_depth; ++i) p.ctx_encoder.push_back(HstuBlock<Real>::init(d, MaskMode::Causal, rng));
    p.ucdt_attention = TargetAttention<Real>::init(d, rng);
    p.ucdt_attention.normalize = cfg.ta_normalize;
    p.pointwise_head = Mlp<Real>::init({d, std::max<std::size_t>(d / 2, 1), 1}, rng);
    p.piau = SelfAttention<Real>::init(dp, cfg.heads, rng);
    p.ptau = TargetAttention<Real>::init(dp, rng);
    p.ptau.normalize = cfg.ta_normalize;
    p.adaptor = Mlp<Real>::init({d, d, cfg.adaptor_width()}, rng);
    for (std::size_t i = 0; i < cfg.depth; ++i) p.lmh.push_back(HstuBlock<Real>::init(w, MaskMode::Full, rng));
    p.listwise_head = Mlp<Real>::init({w, std::max<std::size_t>(w / 2, 1), 1}, rng);
    if (cfg.zero_init_heads) {
        p.pointwise_head.layers.back().zero();
        p.listwise_head.layers.back().zero();
    }
    return p;
}

template <typename Real>
std::size_t RiaParams<Real>::scalar_count() {
    std::size_t n = 0;
    visit([&](const std::string&, Tensor<Real>& t) { n += t.size(); });
    return n;
}

template <typename Real>
void RiaParams<Real>::zero_grad() {
    visit([](const std::string&, Tensor<Real>& t) { t.zero_grad(); });
}

// ---------------------------------------------------------------------------

namespace {

std::size_t feature_index(const FeatureMap& f, const std::string& field, const std::string& owner) {
    auto it = f.find(field);
    if (it == f.end()) fail(ErrorKind::Lookup, owner + " lacks feature field '" + field + "'");
    if (it->second < 0) {
        fail(ErrorKind::Lookup, owner + " field '" + field + "' has negative index " + std::to_string(it->second));
    }
    return static_cast<std::size_t>(it->second);
}

PageIds encode_page(const Page& page, const std::string& owner) {
    PageIds ids;
    const Page ordered = ordered_page(page);
    for (std::size_t o = 0; o < ordered.size(); ++o) {
        const auto& slot = ordered[o];
        ids.item.push_back(feature_index(slot.features, "item", owner));
        ids.cat.push_back(feature_index(slot.features, "cat", owner));
        ids.click.push_back(static_cast<std::size_t>(slot.click));
        ids.position.push_back(o);
    }
    return ids;
}

}  // namespace

RequestIds encode_request(const ImpressionRecord& record, const RiaConfig& cfg) {
    RequestIds ids;
    ids.request_id = record.request_id;
    for (const auto& c : record.candidates) {
        const std::string owner = "candidate " + std::to_string(c.item_id);
        ids.candidate_ids.push_back(c.item_id);
        ids.cand_item.push_back(feature_index(c.features, "item", owner));
        ids.cand_cat.push_back(feature_index(c.features, "cat", owner));
    }
    for (const auto& e : record.context) {
        ids.ctx_user.push_back(feature_index(e.features, "user", "context event"));
        ids.ctx_item.push_back(feature_index(e.features, "item", "context event"));
    }
    if (record.target.size() != cfg.m) {
        fail(ErrorKind::Contract, "record '" + record.request_id + "' has pages of " + std::to_string(record.target.size()) +
                                      " slots, the model expects m = " + std::to_string(cfg.m));
    }
    std::vector<const Page*> pages;
    for (const auto& page : record.history) {
        bool clicked = false;
        for (const auto& s : page) clicked = clicked || s.click == 1;
        if (!cfg.history_clicked_only || clicked) pages.push_back(&page);
    }
    const std::size_t keep = std::min(cfg.l, pages.size());
    for (std::size_t k = pages.size() - keep; k < pages.size(); ++k) ids.history.push_back(encode_page(*pages[k], "history page"));

    for (const auto& slot : ordered_page(record.target)) {
        std::size_t row = record.candidates.size();
        for (std::size_t i = 0; i < record.candidates.size(); ++i) {
            if (record.candidates[i].item_id == slot.item_id) row = i;
        }
        if (row == record.candidates.size()) {
            fail(ErrorKind::Invariant, "record '" + record.request_id + "' violates rule \"target ⊆ candidates\"");
        }
        ids.target_rows.push_back(row);
        ids.target_clicks.push_back(slot.click);
    }
    return ids;
}

std::vector<std::size_t> history_lengths(const RequestIds& ids) {
    std::vector<std::size_t> out;
    for (const auto& page : ids.history) out.push_back(page.item.size());
    return out;
}

PageIds page_for_rows(const RequestIds& ids, std::span<const std::size_t> rows) {
    PageIds page;
    for (std::size_t o = 0; o < rows.size(); ++o) {
        if (rows[o] >= ids.cand_item.size()) {
            fail(ErrorKind::Contract, "list row " + std::to_string(rows[o]) + " outside the candidate set");
        }
        page.item.push_back(ids.cand_item[rows[o]]);
        page.cat.push_back(ids.cand_cat[rows[o]]);
        page.click.push_back(kClickUnknown);
        page.position.push_back(o);
    }
    return page;
}

// ---------------------------------------------------------------------------

template <typename Real>
Var embed_candidates(Graph<Real>& g, RiaParams<Real>& p, const RequestIds& ids) {
    std::vector<FieldLookup<Real>> fields{{"item", &p.item, ids.cand_item}, {"cat", &p.cat, ids.cand_cat}};
    return embed_features(g, fields);
}

template <typename Real>
Var embed_context(Graph<Real>& g, RiaParams<Real>& p, const RequestIds& ids) {
    std::vector<FieldLookup<Real>> fields{{"user", &p.user, ids.ctx_user}, {"item", &p.item, ids.ctx_item}};
    return embed_features(g, fields);
}

template <typename Real>
Var embed_page(Graph<Real>& g, RiaParams<Real>& p, const RiaConfig& cfg, const PageIds& page) {
    std::vector<FieldLookup<Real>> fields{{"item", &p.item, page.item}, {"cat", &p.cat, page.cat}};
    Var items = embed_features(g, fields);
    if (cfg.click_markers) items = g.add(items, g.gather_rows(g.parameter(p.click.rows), page.click));
    std::vector<FieldLookup<Real>> pos{{"position", &p.position, page.position}};
    const std::array<Var, 2> parts{items, embed_features(g, pos)};
    Var rows = g.concat(parts);
    const std::size_t len = page.item.size();
    if (len >= cfg.m) return rows;
    const std::array<Var, 2> padded{rows, g.constant(Tensor<Real>::zeros({cfg.m - len, cfg.d_prime()}))};
    return g.concat_rows(padded);
}

template <typename Real>
UcdtOutput ucdt_forward(Graph<Real>& g, RiaParams<Real>& p, const RequestIds& ids, OpCounters* counters) {
    const Probe probe{counters, Stage::Ucdt};
    Var x = embed_candidates(g, p, ids);
    for (auto& block : p.cand_encoder) x = hstu_block(g, block, x, probe);
    Var e = embed_context(g, p, ids);
    for (auto& block : p.ctx_encoder) e = hstu_block(g, block, e, probe);

    const std::size_t n = ids.cand_item.size();
    std::vector<Var> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx[1] = {i};
        rows.push_back(target_attention(g, p.ucdt_attention, g.gather_rows(x, idx), e, probe));
    }
    UcdtOutput out;
    out.reprs = rows.size() == 1 ? rows[0] : g.concat_rows(rows);
    out.logits = mlp(g, p.pointwise_head, out.reprs, probe);
    out.probs = g.sigmoid(out.logits);
    return out;
}

template <typename Real>
std::vector<Var> piau_encode(Graph<Real>& g, RiaParams<Real>& p, std::span<const Var> pages, const Probe& probe,
                             std::span<const std::size_t> lengths) {
    if (!lengths.empty() && lengths.size() != pages.size()) fail(ErrorKind::Contract, "one length per history page");
    std::vector<Var> out;
    out.reserve(pages.size());
    for (std::size_t k = 0; k < pages.size(); ++k)
        out.push_back(self_attention(g, p.piau, pages[k], probe, lengths.empty() ? 0 : lengths[k]));
    return out;
}

template <typename Real>
Var ptau_attend(Graph<Real>& g, RiaParams<Real>& p, std::span<const Var> history, Var target, const Probe& probe,
                std::span<const std::size_t> lengths) {
    if (history.empty()) fail(ErrorKind::Contract, "ptau_attend needs at least one history page");
    if (!lengths.empty() && lengths.size() != history.size()) fail(ErrorKind::Contract, "one length per history page");
    const Shape st = g.shape(target);
    for (Var h : history) {
        if (g.shape(h) != st) {
            fail(ErrorKind::Contract, "history encoding " + shape_string(g.shape(h)) + " vs target " + shape_string(st));
        }
    }
    const std::size_t m = st[0];
    std::vector<Var> rows;
    rows.reserve(m);
    for (std::size_t o = 0; o < m; ++o) {
        const std::size_t idx[1] = {o};
        std::vector<Var> keys;
        keys.reserve(history.size());
        for (std::size_t k = 0; k < history.size(); ++k) {
            if (lengths.empty() || o < lengths[k]) keys.push_back(g.gather_rows(history[k], idx));
        }
        if (keys.empty()) {
            rows.push_back(g.constant(Tensor<Real>::zeros({1, st[1]})));
            continue;
        }
        Var key_block = keys.size() == 1 ? keys[0] : g.concat_rows(keys);
        rows.push_back(target_attention(g, p.ptau, g.gather_rows(target, idx), key_block, probe));
    }
    return rows.size() == 1 ? rows[0] : g.concat_rows(rows);
}

template <typename Real>
Var cuht_forward(Graph<Real>& g, RiaParams<Real>& p, const RiaConfig& cfg, std::span<const Var> history, Var target,
                 const Probe& probe, std::span<const std::size_t> lengths) {
    if (history.empty()) return g.constant(Tensor<Real>::zeros({g.shape(target)[0], cfg.d_prime()}));
    return ptau_attend(g, p, history, target, probe, lengths);
}

template <typename Real>
Var lmh_forward(Graph<Real>& g, RiaParams<Real>& p, Var fused, const Probe& probe) {
    if (p.lmh.empty()) fail(ErrorKind::Contract, "LMH depth must be >= 1");
    Var m = fused;
    for (auto& block : p.lmh) m = hstu_block(g, block, m, probe);
    return mlp(g, p.listwise_head, m, probe);
}

template <typename Real>
ListwiseOutput listwise_forward(Graph<Real>& g, RiaParams<Real>& p, const RiaConfig& cfg, Var list_reprs,
                                std::span<const Var> history_encodings, const PageIds& target_page,
                                OpCounters* counters, std::span<const std::size_t> history_lengths) {
    ListwiseOutput out;
    Var e_target = embed_page(g, p, cfg, target_page);
    out.target_page_encoding = self_attention(g, p.piau, e_target, Probe{counters, Stage::TargetPiau});
    out.position_context = cuht_forward(g, p, cfg, history_encodings, out.target_page_encoding,
                                        Probe{counters, Stage::Ptau}, history_lengths);
    const Probe lmh_probe{counters, Stage::Lmh};
    out.adapted = mlp(g, p.adaptor, list_reprs, lmh_probe);
    const std::array<Var, 2> parts{out.adapted, out.position_context};
    out.logits = lmh_forward(g, p, g.concat(parts), lmh_probe);
    out.probs = g.sigmoid(out.logits);
    return out;
}

template <typename Real>
RiaOutput ria_forward(Graph<Real>& g, RiaParams<Real>& p, const RiaConfig& cfg, const RequestIds& ids,
                      std::optional<std::span<const std::size_t>> rows, OpCounters* counters) {
    RiaOutput out;
    out.ucdt = ucdt_forward(g, p, ids, counters);
    const std::span<const std::size_t> list = rows ? *rows : std::span<const std::size_t>(ids.target_rows);
    Var list_reprs = g.gather_rows(out.ucdt.reprs, list);

    std::vector<Var> pages;
    for (const auto& page : ids.history) pages.push_back(embed_page(g, p, cfg, page));
    const auto lengths = history_lengths(ids);
    out.history_encodings = piau_encode(g, p, pages, Probe{counters, Stage::HistoryPiau}, lengths);

    out.listwise = listwise_forward(g, p, cfg, list_reprs, out.history_encodings, page_for_rows(ids, list), counters,
                                    lengths);
    return out;
}

// ---------------------------------------------------------------------------

template <typename Real>
Var pointwise_loss(Graph<Real>& g, const RiaConfig& cfg, const UcdtOutput& out, const RequestIds& ids) {
    if (ids.target_rows.empty()) fail(ErrorKind::Contract, "pointwise loss needs at least one labeled position");
    if (cfg.l1_impute_negatives) {
        std::vector<Real> labels(g.shape(out.logits)[0], Real(0));
        for (std::size_t o = 0; o < ids.target_rows.size(); ++o) labels[ids.target_rows[o]] = Real(ids.target_clicks[o]);
        return g.bce_with_logits(out.logits, labels);
    }
    std::vector<Real> labels(ids.target_clicks.begin(), ids.target_clicks.end());
    return g.bce_with_logits(g.gather_rows(out.logits, ids.target_rows), labels);
}

template <typename Real>
Var listwise_loss(Graph<Real>& g, Var logits, std::span<const int> clicks) {
    std::vector<Real> labels(clicks.begin(), clicks.end());
    return g.bce_with_logits(logits, labels);
}

template <typename Real>
Var joint_loss(Graph<Real>& g, Var l1, Var l2, const RiaConfig& cfg) {
    if (!std::isfinite(static_cast<double>(g.scalar(l1)))) fail(ErrorKind::Training, "non-finite loss term [L1]");
    if (!std::isfinite(static_cast<double>(g.scalar(l2)))) fail(ErrorKind::Training, "non-finite loss term [L2]");
    return g.add(g.scale(l1, static_cast<Real>(cfg.w1)), g.scale(l2, static_cast<Real>(cfg.w2)));
}

template <typename Real>
LossTerms ria_loss(Graph<Real>& g, const RiaConfig& cfg, const RiaOutput& out, const RequestIds& ids) {
    LossTerms terms;
    terms.l1 = pointwise_loss(g, cfg, out.ucdt, ids);
    terms.l2 = listwise_loss(g, out.listwise.logits, std::span<const int>(ids.target_clicks));
    terms.total = joint_loss(g, terms.l1, terms.l2, cfg);
    return terms;
}

double pointwise_loss(std::span<const double> probs, std::span<const std::pair<std::size_t, int>> labels) {
    if (labels.empty()) fail(ErrorKind::Contract, "pointwise loss with an empty label set");
    double s = 0;
    for (const auto& [pos, y] : labels) {
        if (pos >= probs.size()) fail(ErrorKind::Contract, "labeled position " + std::to_string(pos) + " >= n");
        const double p = probs[pos];
        s += -(y * std::log(p) + (1 - y) * std::log(1 - p));
    }
    return s / static_cast<double>(labels.size());
}

double listwise_loss(std::span<const double> probs, std::span<const int> clicks) {
    if (probs.size() != clicks.size() || probs.empty()) {
        fail(ErrorKind::Dimension, "listwise loss: " + std::to_string(probs.size()) + " probs vs " +
                                       std::to_string(clicks.size()) + " clicks");
    }
    double s = 0;
    for (std::size_t o = 0; o < probs.size(); ++o) s += -(clicks[o] * std::log(probs[o]) + (1 - clicks[o]) * std::log(1 - probs[o]));
    return s / static_cast<double>(probs.size());
}

double joint_loss(double l1, double l2, double w1, double w2) {
    if (std::isnan(l1)) fail(ErrorKind::Training, "NaN loss term [L1]");
    if (std::isnan(l2)) fail(ErrorKind::Training, "NaN loss term [L2]");
    return w1 * l1 + w2 * l2;
}

#define RIA_INSTANTIATE_MODEL(Real)                                                                             \
    template struct RiaParams<Real>;                                                                            \
    template Var embed_candidates<Real>(Graph<Real>&, RiaParams<Real>&, const RequestIds&);                     \
    template Var embed_context<Real>(Graph<Real>&, RiaParams<Real>&, const RequestIds&);                        \
    template Var embed_page<Real>(Graph<Real>&, RiaParams<Real>&, const RiaConfig&, const PageIds&);            \
    template UcdtOutput ucdt_forward<Real>(Graph<Real>&, RiaParams<Real>&, const RequestIds&, OpCounters*);     \
    template std::vector<Var> piau_encode<Real>(Graph<Real>&, RiaParams<Real>&, std::span<const Var>,           \
                                                const Probe&, std::span<const std::size_t>);                     \
    template Var ptau_attend<Real>(Graph<Real>&, RiaParams<Real>&, std::span<const Var>, Var, const Probe&,     \
                                   std::span<const std::size_t>);                                                \
    template Var cuht_forward<Real>(Graph<Real>&, RiaParams<Real>&, const RiaConfig&, std::span<const Var>, Var, \
                                    const Probe&, std::span<const std::size_t>);                                 \
    template Var lmh_forward<Real>(Graph<Real>&, RiaParams<Real>&, Var, const Probe&);                          \
    template ListwiseOutput listwise_forward<Real>(Graph<Real>&, RiaParams<Real>&, const RiaConfig&, Var,       \
                                                   std::span<const Var>, const PageIds&, OpCounters*,            \
                                                   std::span<const std::size_t>);                                \
    template RiaOutput ria_forward<Real>(Graph<Real>&, RiaParams<Real>&, const RiaConfig&, const RequestIds&,   \
                                         std::optional<std::span<const std::size_t>>, OpCounters*);             \
    template Var pointwise_loss<Real>(Graph<Real>&, const RiaConfig&, const UcdtOutput&, const RequestIds&);    \
    template Var listwise_loss<Real>(Graph<Real>&, Var, std::span<const int>);                                  \
    template Var joint_loss<Real>(Graph<Real>&, Var, Var, const RiaConfig&);                                    \
    template LossTerms ria_loss<Real>(Graph<Real>&, const RiaConfig&, const RiaOutput&, const RequestIds&);

RIA_INSTANTIATE_MODEL(float)
RIA_INSTANTIATE_MODEL(double)

}  // namespace ria
