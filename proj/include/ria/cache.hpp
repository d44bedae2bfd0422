#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "ria/model.hpp"
#include "ria/selection.hpp"

namespace ria {

using Clock = std::function<double()>;  // seconds
Clock steady_clock_seconds();

struct CacheKey {
    enum class Kind { Item, Page };
    std::string request_id;
    Kind kind = Kind::Item;
    std::int64_t index = 0;  // item id, or page index k (1-based)

    auto operator<=>(const CacheKey&) const = default;
};

std::string to_string(const CacheKey& key);

struct CacheStats {
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t evictions = 0;  // entries removed by the capacity policy
    std::uint64_t writes = 0;

    double hit_rate() const;
};

/// In-process representation store keyed by request. Expiry is checked
/// against the injected clock on every read. When a write would exceed
/// `capacity` entries, whole request groups are evicted oldest-written
/// first. Concurrent readers, exclusive writers.
template <typename Real>
class ReprCache {
public:
    struct Options {
        double ttl_seconds = 0.0;  // <= 0 never expires
        std::size_t capacity = 0;  // entries; 0 is unbounded
    };

    struct RequestEntries {
        std::vector<Tensor<Real>> items;  // one [1 x D] row per requested item id, in order
        std::vector<Tensor<Real>> pages;  // H_1..H_L
    };

    explicit ReprCache(Options options = {}, Clock clock = steady_clock_seconds());

    void put(const CacheKey& key, const Tensor<Real>& value);

    /// Strict all-or-nothing read of a request group. Any absent or expired
    /// entry makes the whole request a miss and throws CacheMiss naming the
    /// first offending key.
    RequestEntries fetch(const std::string& request_id, std::span<const std::int64_t> item_ids,
                         std::size_t page_count) const;

    bool contains(const CacheKey& key) const;
    std::size_t size() const;
    CacheStats stats() const;
    void reset_stats();
    void clear();

    /// One line per entry in key order: `key shape=AxB checksum=<hex>`.
    std::string dump() const;

private:
    struct Entry {
        Tensor<Real> value;
        double written_at;
    };
    struct Group {
        std::uint64_t last_write = 0;
        std::size_t entries = 0;
    };

    void evict_for(const std::string& request_id);

    Options options_;
    Clock clock_;
    mutable std::shared_mutex mutex_;
    std::map<CacheKey, Entry> entries_;
    std::map<std::string, Group> groups_;
    std::uint64_t write_seq_ = 0;
    mutable std::atomic<std::uint64_t> hits_{0}, misses_{0};
    std::atomic<std::uint64_t> evictions_{0}, writes_{0};
};

std::string checksum(std::span<const std::byte> bytes);

// ---------------------------------------------------------------------------
// Rank and rerank stages
// ---------------------------------------------------------------------------

/// Runs UCDT over all candidates and PIAU over the history pages, storing
/// every x'' row and every H_k. Returns the number of entries written (n + L).
template <typename Real>
std::size_t rank_stage_precompute(const RequestIds& ids, RiaParams<Real>& params, const RiaConfig& cfg,
                                  ReprCache<Real>& cache, OpCounters* counters = nullptr);

enum class RerankMode { Cached, Recompute, Verify };
RerankMode parse_rerank_mode(const std::string& text);
std::string_view rerank_mode_name(RerankMode mode);

using StageCounts = std::array<OpCounts, kStageCount>;
StageCounts snapshot(const OpCounters& counters);

struct RerankResult {
    std::vector<ScoredList> lists;
    StageCounts cached{};     // counts from the cached path (Cached, Verify)
    StageCounts recompute{};  // counts from the full path (Recompute, Verify)
    double max_abs_diff = 0.0;  // Verify only
};

/// Scores `lists` at rerank time. Cached mode reads x'' and H_k from the
/// cache and runs only target-page PIAU, PTAU, adaptor, LMH and heads.
/// Verify returns the cached scores and the largest per-position difference.
template <typename Real>
RerankResult rerank_stage_score(const RequestIds& ids, std::span<const CandidateList> lists, RiaParams<Real>& params,
                                const RiaConfig& cfg, const ReprCache<Real>& cache, RerankMode mode);

// ---------------------------------------------------------------------------
// Pipeline simulation
// ---------------------------------------------------------------------------

struct PipelineRun {
    RerankMode mode = RerankMode::Cached;
    std::size_t requests = 0;
    std::size_t lists = 0;
    std::size_t entries_written = 0;
    std::size_t fallbacks = 0;  // cached-mode misses served by recomputation
    CacheStats cache;
    StageCounts rank{};
    StageCounts rerank_cached{};
    StageCounts rerank_recompute{};
    double max_abs_diff = 0.0;
    double rank_seconds = 0.0;
    double rerank_seconds = 0.0;
};

struct PipelineOptions {
    RerankMode mode = RerankMode::Cached;
    std::size_t list_budget = 24;
    std::uint64_t seed = 1;
    bool fallback = true;    // recompute on a cache miss instead of failing
    double rerank_delay = 0.0;  // seconds advanced on the clock between stages (simulated clocks only)
};

/// Rank then rerank every request in order. `advance` moves an injected
/// clock forward; pass an empty function with a real clock.
template <typename Real>
PipelineRun simulate_pipeline(std::span<const RequestIds> requests, RiaParams<Real>& params, const RiaConfig& cfg,
                              ReprCache<Real>& cache, const PipelineOptions& options,
                              const std::function<void(double)>& advance = {});

/// Fixed-key `key=value` lines. Wall-clock keys carry a `_nondeterministic` suffix.
std::string pipeline_report(const PipelineRun& run, bool include_timings = true);

}  // namespace ria
