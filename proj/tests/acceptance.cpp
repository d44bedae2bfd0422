#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ria/cache.hpp"
#include "ria/config.hpp"
#include "ria/data.hpp"
#include "ria/gradcheck.hpp"
#include "ria/metrics.hpp"
#include "ria/model.hpp"
#include "ria/selection.hpp"
#include "ria/train.hpp"

using namespace ria;

namespace {

// Pinned tolerances and sizes.
constexpr double kGradTol = 1e-5;
constexpr std::size_t kGradProbes = 200;
constexpr double kGradSeconds = 60.0;
constexpr double kMetricTol = 1e-12;
constexpr std::size_t kMetricInstances = 100;
constexpr std::size_t kSelectionInstances = 100;
constexpr double kScalingPointwiseGap = 0.005;
constexpr double kAblationBand = 0.003;
constexpr double kCacheFloatTol = 1e-6;
constexpr std::size_t kCacheRequests = 100;
constexpr std::size_t kSweepSeeds = 5;

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

RiaConfig tiny_config() {
    return ria_config_from(ConfigMap::load(RIA_SOURCE_DIR "/configs/tiny.cfg"));
}

GeneratorConfig generator_for(const RiaConfig& cfg, std::size_t requests, std::uint64_t seed) {
    GeneratorConfig g;
    g.n_users = cfg.n_users;
    g.n_items = cfg.n_items;
    g.n_cats = cfg.n_cats;
    g.n = cfg.n;
    g.m = cfg.m;
    g.l = cfg.l;
    g.t = cfg.t;
    g.n_requests = requests;
    g.noise_seed = seed;
    return g;
}

template <typename Real>
void jitter(RiaParams<Real>& p, std::uint64_t seed, double scale = 0.3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    p.visit([&](const std::string&, Tensor<Real>& t) {
        for (auto& v : t.data) v += static_cast<Real>(u(rng));
    });
}

// ---------------------------------------------------------------------------

Verdict gradient_correctness() {
    auto cfg = tiny_config();
    cfg.precision = Precision::F64;
    const auto t0 = std::chrono::steady_clock::now();
    GradcheckOptions opt;
    opt.probes = kGradProbes;
    const auto rep = gradcheck_joint_loss(cfg, gradcheck_record(cfg, 1), opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = rep.probes.size() >= kGradProbes && rep.max_rel_err < kGradTol && secs < kGradSeconds;
    return {ok, "probes=" + std::to_string(rep.probes.size()) + " max_rel_err=" + fmt("%.3e", rep.max_rel_err) +
                    " seconds=" + fmt("%.1f", secs)};
}

template <typename Real>
bool identity_holds(std::size_t depth, std::uint64_t seed, std::size_t& checked) {
    auto cfg = tiny_config();
    cfg.depth = depth;
    cfg.ucdt_depth = 2;
    auto p = RiaParams<Real>::init(cfg);
    jitter(p, seed);
    auto zero_f2 = [](auto& blocks) {
        for (auto& b : blocks) b.f2.zero();
    };
    zero_f2(p.cand_encoder);
    zero_f2(p.ctx_encoder);
    zero_f2(p.lmh);
    p.pointwise_head.layers.back().zero();
    p.listwise_head.layers.back().zero();

    const auto log = generate_synthetic(generator_for(cfg, 20, seed));
    for (const auto& rec : log) {
        const auto ids = encode_request(rec, cfg);
        Graph<Real> g;
        auto out = ria_forward(g, p, cfg, ids);
        for (auto v : g.value(out.ucdt.probs)) {
            if (v != Real(0.5)) return false;
            ++checked;
        }
        for (auto v : g.value(out.listwise.probs)) {
            if (v != Real(0.5)) return false;
            ++checked;
        }
    }
    return true;
}

Verdict identity_baseline() {
    bool ok = true;
    std::size_t checked = 0;
    for (std::size_t depth : {1, 2, 4, 8}) {
        ok = ok && identity_holds<float>(depth, depth, checked);
        ok = ok && identity_holds<double>(depth, depth + 10, checked);
    }
    return {ok, "depths=1,2,4,8 precisions=32,64 probabilities_checked=" + std::to_string(checked)};
}

template <typename Real>
bool additivity_holds(std::size_t& checked) {
    auto cfg = tiny_config();
    cfg.precision = sizeof(Real) == 8 ? Precision::F64 : Precision::F32;
    const auto log = generate_synthetic(generator_for(cfg, 200, 4));
    const auto ids = encode_all(log, cfg);
    auto p = RiaParams<Real>::init(cfg);
    jitter(p, 9);
    bool ok = true;
    for (const auto& r : ids) {
        Graph<Real> g;
        auto out = ria_forward(g, p, cfg, r);
        auto terms = ria_loss(g, cfg, out, r);
        const Real l1 = g.value(terms.l1)[0], l2 = g.value(terms.l2)[0];
        ok = ok && g.value(terms.total)[0] == static_cast<Real>(l1 + l2);
        ++checked;
    }
    const auto res = evaluate(p, cfg, std::span<const RequestIds>(ids));
    ok = ok && res.loss == res.l1 + res.l2;
    ++checked;
    cfg.epochs = 1;
    cfg.batch_size = 16;
    train<Real>(std::span<const RequestIds>(ids).subspan(0, 160), std::span<const RequestIds>(ids).subspan(160), cfg,
                [&](const BatchStats& s) {
                    ok = ok && s.loss == s.l1 + s.l2;
                    ++checked;
                });
    return ok;
}

Verdict loss_additivity() {
    std::size_t checked = 0;
    const bool f = additivity_holds<float>(checked);
    const bool d = additivity_holds<double>(checked);
    return {f && d, "float=" + std::string(f ? "exact" : "differs") + " double=" + (d ? "exact" : "differs") +
                        " comparisons=" + std::to_string(checked)};
}

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0;
    double pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            pairs += 1;
            if (s[i] > s[j]) wins += 1;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

double direct_logloss(const std::vector<double>& s, const std::vector<int>& y) {
    double sum = 0;
    for (std::size_t i = 0; i < s.size(); ++i) sum += y[i] ? -std::log(s[i]) : -std::log(1 - s[i]);
    return sum / static_cast<double>(s.size());
}

Verdict metric_oracles() {
    std::mt19937_64 rng(2024);
    double worst_auc = 0, worst_ll = 0;
    for (std::size_t inst = 0; inst < kMetricInstances; ++inst) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 1000)(rng);
        const int grid = inst % 3 == 0 ? 5 : 0;
        std::uniform_real_distribution<double> u(1e-6, 1 - 1e-6);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = grid ? (1 + static_cast<int>(u(rng) * grid)) / (grid + 2.0) : u(rng);
            y[i] = u(rng) < 0.3;
        }
        y[0] = 1;
        y[1] = 0;
        worst_auc = std::max(worst_auc, std::abs(auc(s, y) - pairwise_auc(s, y)));
        worst_ll = std::max(worst_ll, std::abs(logloss(s, y) - direct_logloss(s, y)));
    }
    return {worst_auc <= kMetricTol && worst_ll <= kMetricTol,
            "instances=" + std::to_string(kMetricInstances) + " auc_err=" + fmt("%.3e", worst_auc) +
                " logloss_err=" + fmt("%.3e", worst_ll)};
}

ScoredList exhaustive_best(RiaParams<double>& p, const RiaConfig& cfg, const RequestIds& ids) {
    std::vector<std::size_t> rows(cfg.m);
    std::vector<bool> used(cfg.n, false);
    ScoredList best;
    std::vector<std::int64_t> best_ids;
    bool have = false;
    std::function<void(std::size_t)> rec = [&](std::size_t depth) {
        if (depth == cfg.m) {
            Graph<double> g;
            auto out = ria_forward(g, p, cfg, ids, std::span<const std::size_t>(rows));
            std::vector<double> pctr;
            double reward = 0;
            for (auto v : g.value(out.listwise.probs)) {
                pctr.push_back(v);
                reward += v;
            }
            std::vector<std::int64_t> seq;
            for (auto r : rows) seq.push_back(ids.candidate_ids[r]);
            if (!have || reward > best.reward || (reward == best.reward && seq < best_ids)) {
                best = ScoredList{rows, pctr, reward};
                best_ids = seq;
                have = true;
            }
            return;
        }
        for (std::size_t c = 0; c < cfg.n; ++c) {
            if (used[c]) continue;
            used[c] = true;
            rows[depth] = c;
            rec(depth + 1);
            used[c] = false;
        }
    };
    rec(0);
    return best;
}

Verdict selection_oracle() {
    std::size_t matched = 0, ties = 0;
    for (std::uint64_t seed = 1; seed <= kSelectionInstances; ++seed) {
        std::mt19937_64 rng(seed * 77);
        auto cfg = tiny_config();
        cfg.precision = Precision::F64;
        cfg.n = std::uniform_int_distribution<std::size_t>(3, 7)(rng);
        cfg.m = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
        cfg.depth = std::uniform_int_distribution<std::size_t>(1, 2)(rng);
        cfg.zero_init_heads = seed % 5 == 0;
        const auto log = generate_synthetic(generator_for(cfg, 30, seed));
        const auto ids = encode_request(log.back(), cfg);
        auto p = RiaParams<double>::init(cfg);
        if (!cfg.zero_init_heads) jitter(p, seed);
        ties += cfg.zero_init_heads;
        const auto lists = enumerate_target_lists(cfg.n, cfg.m, 5040, seed);
        if (lists.size() != permutation_count(cfg.n, cfg.m)) continue;
        const auto got = select_best_list(p, cfg, ids, lists);
        const auto want = exhaustive_best(p, cfg, ids);
        matched += got.items == want.items && got.reward == want.reward && got.per_position_pctr == want.per_position_pctr;
    }
    return {matched == kSelectionInstances, "matched=" + std::to_string(matched) + "/" +
                                                std::to_string(kSelectionInstances) +
                                                " all_tied_instances=" + std::to_string(ties)};
}

struct SweepMedians {
    double depth1 = 0, depth4 = 0, pointwise1 = 0;
    std::string detail;
};

SweepMedians run_sweep(double gamma) {
    const auto map = ConfigMap::load(RIA_SOURCE_DIR "/configs/sweep.cfg");
    auto gen = generator_config_from(map);
    gen.gamma = gamma;
    const auto cfg = ria_config_from(map);
    const auto log = generate_synthetic(gen);
    const auto [tr, va] = split_by_request(log);
    const std::vector<std::size_t> depths{1, 4};
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 1; s <= kSweepSeeds; ++s) seeds.push_back(s);
    const auto pts = depth_sweep<float>(tr, va, cfg, depths, seeds);
    SweepMedians out;
    out.depth1 = pts[0].median_listwise;
    out.depth4 = pts[1].median_listwise;
    out.pointwise1 = pts[0].median_pointwise;
    for (const auto& p : pts) {
        if (!p.error.empty() || p.listwise_auc.size() != kSweepSeeds) out.detail += " run_error_depth" + std::to_string(p.depth);
    }
    std::fprintf(stderr, "sweep gamma=%g requests=%zu\n%s", gamma, log.size(), sweep_table(pts).c_str());
    return out;
}

Verdict scaling_analog() {
    const auto s = run_sweep(0.8);
    const bool deeper = s.depth4 > s.depth1;
    const bool gap = s.depth1 - s.pointwise1 >= kScalingPointwiseGap;
    return {deeper && gap && s.detail.empty(),
            "auc_depth1=" + fmt("%.4f", s.depth1) + " auc_depth4=" + fmt("%.4f", s.depth4) +
                " depth4_minus_depth1=" + fmt("%+.4f", s.depth4 - s.depth1) +
                " listwise_minus_pointwise=" + fmt("%+.4f", s.depth1 - s.pointwise1) + s.detail};
}

Verdict context_ablation() {
    const auto s = run_sweep(0.0);
    const double diff = s.depth4 - s.depth1;
    return {std::abs(diff) <= kAblationBand && s.detail.empty(),
            "auc_depth1=" + fmt("%.4f", s.depth1) + " auc_depth4=" + fmt("%.4f", s.depth4) +
                " depth4_minus_depth1=" + fmt("%+.4f", diff) + s.detail};
}

template <typename Real>
double verify_cache(bool& counters_ok) {
    auto cfg = tiny_config();
    cfg.precision = sizeof(Real) == 8 ? Precision::F64 : Precision::F32;
    const auto ids = encode_all(generate_synthetic(generator_for(cfg, kCacheRequests, 12)), cfg);
    auto p = RiaParams<Real>::init(cfg);
    jitter(p, 13);
    ReprCache<Real> cache;
    PipelineOptions opt;
    opt.mode = RerankMode::Verify;
    const auto run = simulate_pipeline(std::span<const RequestIds>(ids), p, cfg, cache, opt);
    opt.mode = RerankMode::Cached;
    ReprCache<Real> cache2;
    const auto cached = simulate_pipeline(std::span<const RequestIds>(ids), p, cfg, cache2, opt);
    counters_ok = counters_ok && run.requests == kCacheRequests &&
                  cached.rerank_cached[static_cast<std::size_t>(Stage::Ucdt)] == OpCounts{} &&
                  cached.rerank_cached[static_cast<std::size_t>(Stage::HistoryPiau)] == OpCounts{} &&
                  !(cached.rerank_cached[static_cast<std::size_t>(Stage::Lmh)] == OpCounts{});
    return run.max_abs_diff;
}

Verdict cache_equivalence() {
    bool counters = true;
    const double d64 = verify_cache<double>(counters);
    const double d32 = verify_cache<float>(counters);
    return {d64 == 0.0 && d32 < kCacheFloatTol && counters,
            "requests=" + std::to_string(kCacheRequests) + " max_abs_diff_64=" + fmt("%.3e", d64) +
                " max_abs_diff_32=" + fmt("%.3e", d32) + " cached_ucdt_and_history_piau_zero=" + (counters ? "yes" : "no")};
}

Verdict sparsity_phenomenon() {
    std::size_t logs = 0;
    bool ok = true;
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        auto cfg = tiny_config();
        auto g = generator_for(cfg, 150 + 25 * seed, seed);
        g.m = 2 + seed % 4;
        g.n = g.m + seed % 3;
        g.n_items = 10 + 4 * seed;
        g.gamma = seed % 2 ? 0.8 : 0.0;
        g.history_mode = seed % 3 ? HistoryMode::AllPages : HistoryMode::ClickedPages;
        const auto log = generate_synthetic(g);
        const auto rows = sparsity_report(log, g.m);
        std::vector<std::uint64_t> distinct(g.m + 1), occ(g.m + 1);
        for (std::size_t k = 1; k <= g.m; ++k) {
            std::map<std::vector<std::int64_t>, std::uint64_t> counts;
            for (const auto& r : log) {
                for (unsigned mask = 1; mask < (1u << g.m); ++mask) {
                    if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
                    std::vector<std::int64_t> t;
                    for (unsigned b = 0; b < g.m; ++b)
                        if (mask & (1u << b)) t.push_back(r.target[b].item_id);
                    std::sort(t.begin(), t.end());
                    ++counts[t];
                }
            }
            distinct[k] = counts.size();
            for (const auto& [t, c] : counts) occ[k] += c;
            ok = ok && rows[k - 1].distinct_tuples == distinct[k] && rows[k - 1].occurrences == occ[k];
            if (k > 1) ok = ok && occ[k] * distinct[k - 1] <= occ[k - 1] * distinct[k];
        }
        ++logs;
    }
    return {ok, "logs=" + std::to_string(logs) + " m=2..5 brute_force_counts_match_and_nonincreasing=" + (ok ? "yes" : "no")};
}

template <typename Real>
std::pair<std::string, std::string> train_and_eval(const RiaConfig& cfg, const std::vector<ImpressionRecord>& log) {
    const auto [tr, va] = split_by_request(log);
    const auto tr_ids = encode_all(tr, cfg), va_ids = encode_all(va, cfg);
    auto res = train<Real>(tr_ids, va_ids, cfg);
    std::string report;
    for (const auto& e : res.epochs) report += format_epoch(e);
    const auto ev = evaluate(res.params, cfg, std::span<const RequestIds>(va_ids));
    report += format_report(ev.listwise) + format_report(ev.pointwise, "pointwise_");
    return {checkpoint_bytes(res.params, cfg), report};
}

Verdict determinism() {
    bool ok = true;
    std::size_t bytes = 0;
    for (auto prec : {Precision::F32, Precision::F64}) {
        auto cfg = tiny_config();
        cfg.precision = prec;
        cfg.epochs = 2;
        cfg.batch_size = 16;
        cfg.seed = 3;
        const auto log = generate_synthetic(generator_for(cfg, 400, 5));
        const auto a = prec == Precision::F32 ? train_and_eval<float>(cfg, log) : train_and_eval<double>(cfg, log);
        const auto b = prec == Precision::F32 ? train_and_eval<float>(cfg, generate_synthetic(generator_for(cfg, 400, 5)))
                                              : train_and_eval<double>(cfg, generate_synthetic(generator_for(cfg, 400, 5)));
        ok = ok && a == b;
        bytes += a.first.size();
    }
    return {ok, "precisions=32,64 checkpoint_bytes=" + std::to_string(bytes) + " identical=" + (ok ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<std::size_t> only;
    for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"gradient correctness", gradient_correctness},
        {"identity baseline", identity_baseline},
        {"loss additivity", loss_additivity},
        {"metric oracles", metric_oracles},
        {"selection oracle", selection_oracle},
        {"scaling-law analog", scaling_analog},
        {"context ablation", context_ablation},
        {"cache equivalence", cache_equivalence},
        {"sparsity phenomenon", sparsity_phenomenon},
        {"determinism", determinism},
    };
    int failed = 0;
    std::size_t ran = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!only.empty() && !only.count(i + 1)) continue;
        ++ran;
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.pass;
        std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(ran) - failed, ran);
    return failed == 0 ? 0 : 1;
}
