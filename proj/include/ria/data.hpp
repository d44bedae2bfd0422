#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace ria {

/// field name -> category id
using FeatureMap = std::map<std::string, std::int64_t>;

struct ContextEvent {
    std::int64_t timestamp = 0;
    FeatureMap features;

    bool operator==(const ContextEvent&) const = default;
};

struct Candidate {
    std::int64_t item_id = 0;
    FeatureMap features;

    bool operator==(const Candidate&) const = default;
};

/// One displayed slot. Target-page slots leave `features` empty on disk and
/// borrow them from the matching candidate.
struct PageSlot {
    std::int64_t item_id = 0;
    FeatureMap features;
    int position = 0;  // 1-based
    int click = 0;

    bool operator==(const PageSlot&) const = default;
};

using Page = std::vector<PageSlot>;

struct ImpressionRecord {
    std::string request_id;
    std::string user_id;
    std::vector<ContextEvent> context;
    std::vector<Candidate> candidates;
    std::vector<Page> history;  // most recent last
    Page target;

    bool operator==(const ImpressionRecord&) const = default;
};

/// Throws Error{Invariant} naming the record and the violated rule.
void validate_record(const ImpressionRecord& record);

/// Slots ordered by position, target slots filled with candidate features.
Page ordered_page(const Page& page);
Page resolved_target(const ImpressionRecord& record);

// ---------------------------------------------------------------------------
// Serialization: one JSON object per line after a header line.
// ---------------------------------------------------------------------------

inline constexpr int kSchemaVersion = 1;

std::string header_line(int schema_version = kSchemaVersion);
std::string record_to_line(const ImpressionRecord& record);
ImpressionRecord record_from_line(const std::string& line, std::size_t line_no);

/// Writes gzip when the path ends in ".gz".
void write_impressions(const std::string& path, const std::vector<ImpressionRecord>& records);
std::vector<ImpressionRecord> load_impressions(const std::string& path, int schema_version = kSchemaVersion);

// ---------------------------------------------------------------------------
// Synthetic click logs
// ---------------------------------------------------------------------------

enum class HistoryMode { AllPages, ClickedPages };

struct GeneratorConfig {
    std::size_t n_users = 200;
    std::size_t n_items = 300;
    std::size_t n_cats = 12;
    std::size_t n_requests = 1000;
    std::size_t m = 3;
    std::size_t n = 5;
    std::size_t l = 2;
    std::size_t t = 6;
    double gamma = 0.8;
    std::vector<double> position_bias;  // empty -> default ladder
    double base_logit = -1.0;
    double cluster_spread = 0.35;
    double user_scale = 1.0;
    std::uint64_t noise_seed = 7;
    HistoryMode history_mode = HistoryMode::AllPages;

    void validate() const;
    std::vector<double> effective_position_bias() const;
};

inline constexpr std::size_t kLatentDim = 16;

/// The latent ground truth behind a synthetic log.
class ClickWorld {
public:
    explicit ClickWorld(const GeneratorConfig& cfg);

    const GeneratorConfig& config() const { return cfg_; }
    std::int64_t category(std::int64_t item) const { return item_cat_[item]; }
    const std::vector<std::int64_t>& preferred_items(std::size_t user) const { return preferred_[user]; }

    double affinity(std::size_t user, std::int64_t item) const;
    double similarity(std::int64_t a, std::int64_t b) const;
    /// sum_{j != o} sim(i_o, i_j) 2^{-|o-j|}, o and j 0-based display slots
    double context_term(const std::vector<std::int64_t>& page, std::size_t o) const;
    double click_probability(std::size_t user, const std::vector<std::int64_t>& page, std::size_t o) const;

private:
    GeneratorConfig cfg_;
    std::vector<double> user_vec_;  // n_users x kLatentDim
    std::vector<double> item_vec_;  // n_items x kLatentDim, unit rows
    std::vector<std::int64_t> item_cat_;
    std::vector<std::vector<std::int64_t>> preferred_;
    std::vector<double> pos_bias_;
};

/// Streams `n_requests` records to `sink`, deterministic in `noise_seed`.
void generate_synthetic(const GeneratorConfig& cfg, const std::function<void(ImpressionRecord&&)>& sink);
std::vector<ImpressionRecord> generate_synthetic(const GeneratorConfig& cfg);

// ---------------------------------------------------------------------------
// Combinatorial sparsity
// ---------------------------------------------------------------------------

struct SparsityRow {
    std::size_t k = 0;
    std::uint64_t distinct_tuples = 0;
    std::uint64_t occurrences = 0;
    double mean_count = 0.0;
};

/// Counts unordered item k-subsets co-exposed on logged (target) pages.
std::vector<SparsityRow> sparsity_report(const std::vector<ImpressionRecord>& log, std::size_t k_max);

}  // namespace ria
