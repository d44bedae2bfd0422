#include "ria/cache.hpp"

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>

#include "ria/config.hpp"
#include "ria/errors.hpp"

namespace ria {

Clock steady_clock_seconds() {
    return [] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
    };
}

std::string to_string(const CacheKey& key) {
    return (key.kind == CacheKey::Kind::Item ? "item/" : "page/") + key.request_id + "/" + std::to_string(key.index);
}

double CacheStats::hit_rate() const {
    const auto total = hits + misses;
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

std::string checksum(std::span<const std::byte> bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64,
                  fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
    return buf;
}

template <typename Real>
ReprCache<Real>::ReprCache(Options options, Clock clock) : options_(options), clock_(std::move(clock)) {}

template <typename Real>
void ReprCache<Real>::evict_for(const std::string& request_id) {
    while (options_.capacity > 0 && entries_.size() >= options_.capacity) {
        const std::string* victim = nullptr;
        std::uint64_t oldest = 0;
        for (const auto& [id, group] : groups_) {
            if (id == request_id) continue;
            if (!victim || group.last_write < oldest) victim = &id, oldest = group.last_write;
        }
        if (!victim) return;  // the group being written is the only one left
        const std::string doomed = *victim;
        for (auto it = entries_.begin(); it != entries_.end();) {
            if (it->first.request_id == doomed) {
                it = entries_.erase(it);
                ++evictions_;
            } else {
                ++it;
            }
        }
        groups_.erase(doomed);
    }
}

template <typename Real>
void ReprCache<Real>::put(const CacheKey& key, const Tensor<Real>& value) {
    std::unique_lock lock(mutex_);
    const bool fresh = !entries_.contains(key);
    if (fresh) evict_for(key.request_id);
    entries_[key] = Entry{value, clock_()};
    auto& group = groups_[key.request_id];
    group.last_write = ++write_seq_;
    if (fresh) ++group.entries;
    ++writes_;
}

template <typename Real>
typename ReprCache<Real>::RequestEntries ReprCache<Real>::fetch(const std::string& request_id,
                                                                std::span<const std::int64_t> item_ids,
                                                                std::size_t page_count) const {
    std::shared_lock lock(mutex_);
    const double now = clock_();
    const std::uint64_t wanted = item_ids.size() + page_count;
    RequestEntries out;
    auto read = [&](const CacheKey& key) -> const Tensor<Real>& {
        auto it = entries_.find(key);
        const char* why = nullptr;
        if (it == entries_.end()) {
            why = "absent";
        } else if (options_.ttl_seconds > 0 && now - it->second.written_at > options_.ttl_seconds) {
            why = "expired";
        }
        if (why) {
            misses_ += wanted;
            fail(ErrorKind::CacheMiss, "cache miss (" + std::string(why) + "): " + to_string(key));
        }
        return it->second.value;
    };
    for (auto id : item_ids) out.items.push_back(read(CacheKey{request_id, CacheKey::Kind::Item, id}));
    for (std::size_t k = 1; k <= page_count; ++k) {
        out.pages.push_back(read(CacheKey{request_id, CacheKey::Kind::Page, static_cast<std::int64_t>(k)}));
    }
    hits_ += wanted;
    return out;
}

template <typename Real>
bool ReprCache<Real>::contains(const CacheKey& key) const {
    std::shared_lock lock(mutex_);
    return entries_.contains(key);
}

template <typename Real>
std::size_t ReprCache<Real>::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

template <typename Real>
CacheStats ReprCache<Real>::stats() const {
    return CacheStats{hits_.load(), misses_.load(), evictions_.load(), writes_.load()};
}

template <typename Real>
void ReprCache<Real>::reset_stats() {
    hits_ = 0;
    misses_ = 0;
    evictions_ = 0;
    writes_ = 0;
}

template <typename Real>
void ReprCache<Real>::clear() {
    std::unique_lock lock(mutex_);
    entries_.clear();
    groups_.clear();
}

template <typename Real>
std::string ReprCache<Real>::dump() const {
    std::shared_lock lock(mutex_);
    std::ostringstream out;
    for (const auto& [key, entry] : entries_) {
        std::string shape;
        for (auto e : entry.value.shape) shape += (shape.empty() ? "" : "x") + std::to_string(e);
        const auto& data = entry.value.data;
        out << to_string(key) << " shape=" << shape << " checksum="
            << checksum(std::as_bytes(std::span<const Real>(data.data(), data.size()))) << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------

template <typename Real>
std::size_t rank_stage_precompute(const RequestIds& ids, RiaParams<Real>& params, const RiaConfig& cfg,
                                  ReprCache<Real>& cache, OpCounters* counters) {
    Graph<Real> g;
    auto ucdt = ucdt_forward(g, params, ids, counters);
    const Tensor<Real> reprs = g.tensor(ucdt.reprs);
    const std::size_t width = reprs.cols();
    for (std::size_t i = 0; i < ids.candidate_ids.size(); ++i) {
        auto row = reprs.row(i);
        cache.put(CacheKey{ids.request_id, CacheKey::Kind::Item, ids.candidate_ids[i]},
                  Tensor<Real>({1, width}, std::vector<Real>(row.begin(), row.end())));
    }
    std::vector<Var> pages;
    for (const auto& page : ids.history) pages.push_back(embed_page(g, params, cfg, page));
    auto encodings = piau_encode(g, params, pages, Probe{counters, Stage::HistoryPiau}, history_lengths(ids));
    for (std::size_t k = 0; k < encodings.size(); ++k) {
        cache.put(CacheKey{ids.request_id, CacheKey::Kind::Page, static_cast<std::int64_t>(k + 1)},
                  g.tensor(encodings[k]));
    }
    return ids.candidate_ids.size() + encodings.size();
}

RerankMode parse_rerank_mode(const std::string& text) {
    if (text == "cached") return RerankMode::Cached;
    if (text == "recompute") return RerankMode::Recompute;
    if (text == "verify") return RerankMode::Verify;
    fail(ErrorKind::Config, "unknown rerank mode '" + text + "' (expected cached, recompute or verify)");
}

std::string_view rerank_mode_name(RerankMode mode) {
    switch (mode) {
        case RerankMode::Cached: return "cached";
        case RerankMode::Recompute: return "recompute";
        case RerankMode::Verify: return "verify";
    }
    return "?";
}

StageCounts snapshot(const OpCounters& counters) {
    StageCounts out{};
    for (std::size_t s = 0; s < kStageCount; ++s) out[s] = counters.stage(static_cast<Stage>(s));
    return out;
}

namespace {

template <typename Real>
std::vector<ScoredList> score_cached(const RequestIds& ids, std::span<const CandidateList> lists,
                                     RiaParams<Real>& params, const RiaConfig& cfg, const ReprCache<Real>& cache,
                                     OpCounters& counters) {
    const auto entries = cache.fetch(ids.request_id, ids.candidate_ids, ids.history.size());
    const auto lengths = history_lengths(ids);
    std::vector<ScoredList> out;
    for (const auto& rows : lists) {
        Graph<Real> g;
        std::vector<Real> stacked;
        std::size_t width = 0;
        for (auto row : rows) {
            if (row >= entries.items.size()) fail(ErrorKind::Lookup, "candidate row " + std::to_string(row) + " out of range");
            const auto& t = entries.items[row];
            width = t.cols();
            stacked.insert(stacked.end(), t.data.begin(), t.data.end());
        }
        Var list_reprs = g.constant(Tensor<Real>({rows.size(), width}, std::move(stacked)));
        std::vector<Var> history;
        for (const auto& page : entries.pages) history.push_back(g.constant(page));
        auto lw = listwise_forward(g, params, cfg, list_reprs, history, page_for_rows(ids, rows), &counters, lengths);
        ScoredList s;
        s.items = rows;
        for (auto p : g.value(lw.probs)) s.per_position_pctr.push_back(static_cast<double>(p));
        s.reward = list_reward(s.per_position_pctr);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

template <typename Real>
RerankResult rerank_stage_score(const RequestIds& ids, std::span<const CandidateList> lists, RiaParams<Real>& params,
                                const RiaConfig& cfg, const ReprCache<Real>& cache, RerankMode mode) {
    if (lists.empty()) fail(ErrorKind::Contract, "no candidate lists to score");
    RerankResult result;
    std::vector<ScoredList> full;
    if (mode != RerankMode::Recompute) {
        OpCounters counters;
        result.lists = score_cached(ids, lists, params, cfg, cache, counters);
        result.cached = snapshot(counters);
    }
    if (mode != RerankMode::Cached) {
        OpCounters counters;
        for (const auto& rows : lists) full.push_back(score_list(params, cfg, ids, rows, &counters));
        result.recompute = snapshot(counters);
    }
    if (mode == RerankMode::Recompute) {
        result.lists = std::move(full);
    } else if (mode == RerankMode::Verify) {
        for (std::size_t i = 0; i < lists.size(); ++i) {
            for (std::size_t o = 0; o < full[i].per_position_pctr.size(); ++o) {
                result.max_abs_diff = std::max(
                    result.max_abs_diff, std::abs(full[i].per_position_pctr[o] - result.lists[i].per_position_pctr[o]));
            }
        }
    }
    return result;
}

namespace {

void accumulate(StageCounts& into, const StageCounts& add) {
    for (std::size_t s = 0; s < kStageCount; ++s) into[s] += add[s];
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

template <typename Real>
PipelineRun simulate_pipeline(std::span<const RequestIds> requests, RiaParams<Real>& params, const RiaConfig& cfg,
                              ReprCache<Real>& cache, const PipelineOptions& options,
                              const std::function<void(double)>& advance) {
    PipelineRun run;
    run.mode = options.mode;
    const auto before = cache.stats();
    for (const auto& ids : requests) {
        ++run.requests;
        auto t0 = std::chrono::steady_clock::now();
        OpCounters rank_counters;
        run.entries_written += rank_stage_precompute(ids, params, cfg, cache, &rank_counters);
        accumulate(run.rank, snapshot(rank_counters));
        run.rank_seconds += seconds_since(t0);
        if (advance && options.rerank_delay > 0) advance(options.rerank_delay);

        const auto lists = enumerate_target_lists(ids.candidate_ids.size(), cfg.m, options.list_budget,
                                                  options.seed ^ fnv1a64(ids.request_id));
        run.lists += lists.size();
        t0 = std::chrono::steady_clock::now();
        RerankResult res;
        try {
            res = rerank_stage_score(ids, lists, params, cfg, cache, options.mode);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::CacheMiss || !options.fallback) throw;
            ++run.fallbacks;
            res = rerank_stage_score(ids, lists, params, cfg, cache, RerankMode::Recompute);
        }
        run.rerank_seconds += seconds_since(t0);
        accumulate(run.rerank_cached, res.cached);
        accumulate(run.rerank_recompute, res.recompute);
        run.max_abs_diff = std::max(run.max_abs_diff, res.max_abs_diff);
    }
    const auto after = cache.stats();
    run.cache = CacheStats{after.hits - before.hits, after.misses - before.misses, after.evictions - before.evictions,
                           after.writes - before.writes};
    return run;
}

std::string pipeline_report(const PipelineRun& run, bool include_timings) {
    std::ostringstream out;
    char buf[128];
    out << "mode=" << rerank_mode_name(run.mode) << "\n";
    out << "requests=" << run.requests << "\n";
    out << "lists=" << run.lists << "\n";
    out << "entries=" << run.entries_written << "\n";
    out << "hits=" << run.cache.hits << "\n";
    out << "misses=" << run.cache.misses << "\n";
    out << "evictions=" << run.cache.evictions << "\n";
    std::snprintf(buf, sizeof buf, "hit_rate=%.9f\n", run.cache.hit_rate());
    out << buf;
    out << "fallbacks=" << run.fallbacks << "\n";
    std::snprintf(buf, sizeof buf, "max_abs_diff=%.17g\n", run.max_abs_diff);
    out << buf;
    auto counts = [&](const char* phase, const StageCounts& c) {
        for (std::size_t s = 0; s < kStageCount; ++s) {
            const std::string p = std::string(phase) + "." + std::string(stage_name(static_cast<Stage>(s))) + ".";
            out << p << "hstu_evals=" << c[s].hstu_evals << "\n";
            out << p << "target_attention_evals=" << c[s].target_attention_evals << "\n";
            out << p << "self_attention_evals=" << c[s].self_attention_evals << "\n";
            out << p << "mlp_evals=" << c[s].mlp_evals << "\n";
        }
    };
    counts("rank", run.rank);
    counts("rerank_cached", run.rerank_cached);
    counts("rerank_recompute", run.rerank_recompute);
    if (include_timings) {
        std::snprintf(buf, sizeof buf, "rank_seconds_nondeterministic=%.6f\n", run.rank_seconds);
        out << buf;
        std::snprintf(buf, sizeof buf, "rerank_seconds_nondeterministic=%.6f\n", run.rerank_seconds);
        out << buf;
    }
    return out.str();
}

#define RIA_INSTANTIATE_CACHE(Real)                                                                            \
    template class ReprCache<Real>;                                                                            \
    template std::size_t rank_stage_precompute<Real>(const RequestIds&, RiaParams<Real>&, const RiaConfig&,   \
                                                     ReprCache<Real>&, OpCounters*);                           \
    template RerankResult rerank_stage_score<Real>(const RequestIds&, std::span<const CandidateList>,          \
                                                   RiaParams<Real>&, const RiaConfig&, const ReprCache<Real>&, \
                                                   RerankMode);                                                \
    template PipelineRun simulate_pipeline<Real>(std::span<const RequestIds>, RiaParams<Real>&,               \
                                                 const RiaConfig&, ReprCache<Real>&, const PipelineOptions&,   \
                                                 const std::function<void(double)>&);

RIA_INSTANTIATE_CACHE(float)
RIA_INSTANTIATE_CACHE(double)

}  // namespace ria
