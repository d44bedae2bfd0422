#include "ria/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "ria/errors.hpp"

namespace ria {

using ojson = nlohmann::ordered_json;

namespace {

void violation(const ImpressionRecord& r, const std::string& rule, const std::string& detail = {}) {
    fail(ErrorKind::Invariant, "record '" + r.request_id + "' violates rule \"" + rule + "\"" +
                                   (detail.empty() ? "" : ": " + detail));
}

void check_page(const ImpressionRecord& r, const Page& page, std::size_t m, const std::string& what) {
    if (page.empty() || page.size() > m) {
        violation(r, "history pages hold 1..m slots", what + " has " + std::to_string(page.size()) + " slots, m is " +
                                                          std::to_string(m));
    }
    std::vector<int> positions;
    for (const auto& s : page) {
        positions.push_back(s.position);
        if (s.click != 0 && s.click != 1) violation(r, "clicks are binary", what);
    }
    std::sort(positions.begin(), positions.end());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (positions[i] != static_cast<int>(i + 1)) violation(r, "positions form a permutation", what);
    }
}

}  // namespace

void validate_record(const ImpressionRecord& r) {
    if (r.request_id.empty()) fail(ErrorKind::Invariant, "record with empty request_id");
    if (r.context.empty()) violation(r, "context nonempty");
    for (std::size_t i = 1; i < r.context.size(); ++i) {
        if (r.context[i].timestamp < r.context[i - 1].timestamp) violation(r, "timestamps nondecreasing");
    }
    if (r.candidates.empty()) violation(r, "candidates nonempty");
    std::set<std::int64_t> ids;
    for (const auto& c : r.candidates) {
        if (!ids.insert(c.item_id).second) violation(r, "candidate ids unique", std::to_string(c.item_id));
    }
    if (r.target.empty()) violation(r, "target nonempty");
    const std::size_t m = r.target.size();
    if (m > r.candidates.size()) violation(r, "m <= n");
    check_page(r, r.target, m, "target page");
    std::set<std::int64_t> shown;
    for (const auto& s : r.target) {
        if (!ids.count(s.item_id)) violation(r, "target ⊆ candidates", "item " + std::to_string(s.item_id));
        if (!shown.insert(s.item_id).second) violation(r, "target items distinct", std::to_string(s.item_id));
    }
    for (std::size_t k = 0; k < r.history.size(); ++k) check_page(r, r.history[k], m, "history page " + std::to_string(k));
}

Page ordered_page(const Page& page) {
    Page out = page;
    std::stable_sort(out.begin(), out.end(), [](const PageSlot& a, const PageSlot& b) { return a.position < b.position; });
    return out;
}

Page resolved_target(const ImpressionRecord& record) {
    Page out = ordered_page(record.target);
    for (auto& slot : out) {
        for (const auto& c : record.candidates) {
            if (c.item_id == slot.item_id) {
                slot.features = c.features;
                break;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string header_line(int schema_version) {
    ojson h;
    h["format"] = "ria-impressions";
    h["schema_version"] = schema_version;
    return h.dump();
}

namespace {

ojson features_json(const FeatureMap& f) {
    ojson o = ojson::object();
    for (const auto& [k, v] : f) o[k] = v;
    return o;
}

ojson slot_json(const PageSlot& s, bool with_features) {
    ojson o;
    o["id"] = s.item_id;
    if (with_features) o["f"] = features_json(s.features);
    o["pos"] = s.position;
    o["click"] = s.click;
    return o;
}

FeatureMap features_from(const ojson& o) {
    FeatureMap f;
    for (auto it = o.begin(); it != o.end(); ++it) f[it.key()] = it.value().get<std::int64_t>();
    return f;
}

PageSlot slot_from(const ojson& o) {
    PageSlot s;
    s.item_id = o.at("id").get<std::int64_t>();
    if (o.contains("f")) s.features = features_from(o.at("f"));
    s.position = o.at("pos").get<int>();
    s.click = o.at("click").get<int>();
    return s;
}

}  // namespace

std::string record_to_line(const ImpressionRecord& r) {
    ojson o;
    o["request_id"] = r.request_id;
    o["user_id"] = r.user_id;
    ojson ctx = ojson::array();
    for (const auto& e : r.context) ctx.push_back(ojson{{"ts", e.timestamp}, {"f", features_json(e.features)}});
    o["context"] = std::move(ctx);
    ojson cands = ojson::array();
    for (const auto& c : r.candidates) cands.push_back(ojson{{"id", c.item_id}, {"f", features_json(c.features)}});
    o["candidates"] = std::move(cands);
    ojson hist = ojson::array();
    for (const auto& page : r.history) {
        ojson p = ojson::array();
        for (const auto& s : page) p.push_back(slot_json(s, true));
        hist.push_back(std::move(p));
    }
    o["history"] = std::move(hist);
    ojson target = ojson::array();
    for (const auto& s : r.target) target.push_back(slot_json(s, false));
    o["target"] = std::move(target);
    return o.dump();
}

ImpressionRecord record_from_line(const std::string& line, std::size_t line_no) {
    ojson o;
    try {
        o = ojson::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ", column " + std::to_string(e.byte) + ": " +
                                   e.what());
    }
    ImpressionRecord r;
    try {
        r.request_id = o.at("request_id").get<std::string>();
        r.user_id = o.at("user_id").get<std::string>();
        for (const auto& e : o.at("context")) {
            r.context.push_back({e.at("ts").get<std::int64_t>(), features_from(e.at("f"))});
        }
        for (const auto& c : o.at("candidates")) {
            r.candidates.push_back({c.at("id").get<std::int64_t>(), features_from(c.at("f"))});
        }
        for (const auto& page : o.at("history")) {
            Page p;
            for (const auto& s : page) p.push_back(slot_from(s));
            r.history.push_back(std::move(p));
        }
        for (const auto& s : o.at("target")) r.target.push_back(slot_from(s));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ", column 1: " + e.what());
    }
    return r;
}

void write_impressions(const std::string& path, const std::vector<ImpressionRecord>& records) {
    std::string text = header_line() + "\n";
    for (const auto& r : records) {
        text += record_to_line(r);
        text += '\n';
    }
    const bool gz = path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
    if (gz) {
        gzFile f = gzopen(path.c_str(), "wb");
        if (!f) fail(ErrorKind::Io, "cannot open " + path + " for writing");
        const int written = gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
        gzclose(f);
        if (written != static_cast<int>(text.size())) fail(ErrorKind::Io, "short write to " + path);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot open " + path + " for writing");
    out << text;
    if (!out) fail(ErrorKind::Io, "write failed for " + path);
}

std::vector<ImpressionRecord> load_impressions(const std::string& path, int schema_version) {
    // gzread passes uncompressed files through unchanged.
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) fail(ErrorKind::Io, "cannot open " + path);
    std::string content;
    char buf[1 << 16];
    int got;
    while ((got = gzread(f, buf, sizeof buf)) > 0) content.append(buf, static_cast<std::size_t>(got));
    gzclose(f);
    if (got < 0) fail(ErrorKind::Io, "read error in " + path);

    std::vector<ImpressionRecord> out;
    std::set<std::string> seen;
    std::size_t line_no = 0, begin = 0;
    bool header = false;
    while (begin < content.size()) {
        auto end = content.find('\n', begin);
        if (end == std::string::npos) end = content.size();
        std::string line = content.substr(begin, end - begin);
        begin = end + 1;
        ++line_no;
        if (line.empty()) continue;
        if (!header) {
            ojson h;
            try {
                h = ojson::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                fail(ErrorKind::Parse, "line 1, column " + std::to_string(e.byte) + ": bad header");
            }
            if (h.value("format", "") != "ria-impressions") fail(ErrorKind::Parse, "line 1, column 1: not an impression log");
            if (h.value("schema_version", -1) != schema_version) {
                fail(ErrorKind::Parse, "line 1, column 1: schema_version " + h.value("schema_version", ojson()).dump() +
                                           ", expected " + std::to_string(schema_version));
            }
            header = true;
            continue;
        }
        auto record = record_from_line(line, line_no);
        try {
            validate_record(record);
        } catch (const Error& e) {
            fail(e.kind(), "line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!seen.insert(record.request_id).second) {
            fail(ErrorKind::Invariant, "line " + std::to_string(line_no) + ": record '" + record.request_id +
                                           "' violates rule \"request ids unique\"");
        }
        out.push_back(std::move(record));
    }
    if (!header) fail(ErrorKind::Parse, "line 1, column 1: missing header in " + path);
    return out;
}

// ---------------------------------------------------------------------------

void GeneratorConfig::validate() const {
    auto bad = [](const std::string& msg) { fail(ErrorKind::Config, msg); };
    if (n_users == 0 || n_items == 0 || n_cats == 0 || n_requests == 0) bad("generator counts must be positive");
    if (m == 0 || t == 0) bad("m and t must be positive");
    if (n < m) bad("n must be >= m");
    if (n > n_items) bad("n must not exceed n_items");
    if (!(gamma >= 0.0)) bad("gamma must be >= 0");
    if (!position_bias.empty() && position_bias.size() != m) bad("position_bias needs exactly m values");
}

std::vector<double> GeneratorConfig::effective_position_bias() const {
    if (!position_bias.empty()) return position_bias;
    std::vector<double> out(m);
    for (std::size_t o = 0; o < m; ++o) out[o] = -0.25 * static_cast<double>(o);
    return out;
}

ClickWorld::ClickWorld(const GeneratorConfig& cfg) : cfg_(cfg), pos_bias_(cfg.effective_position_bias()) {
    cfg.validate();
    std::mt19937_64 rng(cfg.noise_seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<double> centroids(cfg.n_cats * kLatentDim);
    for (std::size_t c = 0; c < cfg.n_cats; ++c) {
        double norm = 0;
        for (std::size_t j = 0; j < kLatentDim; ++j) {
            centroids[c * kLatentDim + j] = normal(rng);
            norm += centroids[c * kLatentDim + j] * centroids[c * kLatentDim + j];
        }
        for (std::size_t j = 0; j < kLatentDim; ++j) centroids[c * kLatentDim + j] /= std::sqrt(norm);
    }

    std::uniform_int_distribution<std::size_t> pick_cat(0, cfg.n_cats - 1);
    item_vec_.resize(cfg.n_items * kLatentDim);
    item_cat_.resize(cfg.n_items);
    const double noise = cfg.cluster_spread / std::sqrt(static_cast<double>(kLatentDim));
    for (std::size_t i = 0; i < cfg.n_items; ++i) {
        const std::size_t c = pick_cat(rng);
        item_cat_[i] = static_cast<std::int64_t>(c);
        double norm = 0;
        for (std::size_t j = 0; j < kLatentDim; ++j) {
            double v = centroids[c * kLatentDim + j] + noise * normal(rng);
            item_vec_[i * kLatentDim + j] = v;
            norm += v * v;
        }
        for (std::size_t j = 0; j < kLatentDim; ++j) item_vec_[i * kLatentDim + j] /= std::sqrt(norm);
    }

    user_vec_.resize(cfg.n_users * kLatentDim);
    for (auto& x : user_vec_) x = cfg.user_scale * normal(rng);

    constexpr std::size_t kPreferred = 20;
    preferred_.resize(cfg.n_users);
    std::vector<std::int64_t> order(cfg.n_items);
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> score(cfg.n_items);
        for (std::size_t i = 0; i < cfg.n_items; ++i) score[i] = affinity(u, static_cast<std::int64_t>(i));
        const std::size_t keep = std::min(kPreferred, cfg.n_items);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                          [&](std::int64_t a, std::int64_t b) { return score[a] != score[b] ? score[a] > score[b] : a < b; });
        preferred_[u].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
    }
}

double ClickWorld::affinity(std::size_t user, std::int64_t item) const {
    double s = 0;
    for (std::size_t j = 0; j < kLatentDim; ++j) s += user_vec_[user * kLatentDim + j] * item_vec_[item * kLatentDim + j];
    return s;
}

double ClickWorld::similarity(std::int64_t a, std::int64_t b) const {
    double s = 0;
    for (std::size_t j = 0; j < kLatentDim; ++j) s += item_vec_[a * kLatentDim + j] * item_vec_[b * kLatentDim + j];
    return s;
}

double ClickWorld::context_term(const std::vector<std::int64_t>& page, std::size_t o) const {
    double s = 0;
    for (std::size_t j = 0; j < page.size(); ++j) {
        if (j == o) continue;
        const auto dist = o > j ? o - j : j - o;
        s += similarity(page[o], page[j]) * std::ldexp(1.0, -static_cast<int>(dist));
    }
    return s;
}

double ClickWorld::click_probability(std::size_t user, const std::vector<std::int64_t>& page, std::size_t o) const {
    const double logit = cfg_.base_logit + affinity(user, page[o]) + pos_bias_[o] + cfg_.gamma * context_term(page, o);
    return 1.0 / (1.0 + std::exp(-logit));
}

void generate_synthetic(const GeneratorConfig& cfg, const std::function<void(ImpressionRecord&&)>& sink) {
    ClickWorld world(cfg);
    std::mt19937_64 rng(cfg.noise_seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_int_distribution<std::size_t> pick_user(0, cfg.n_users - 1);
    std::uniform_int_distribution<std::int64_t> pick_item(0, static_cast<std::int64_t>(cfg.n_items) - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::deque<Page>> history(cfg.n_users);

    auto item_features = [&](std::int64_t item) { return FeatureMap{{"item", item}, {"cat", world.category(item)}}; };

    for (std::size_t r = 0; r < cfg.n_requests; ++r) {
        ImpressionRecord rec;
        char id[32];
        std::snprintf(id, sizeof id, "r%07zu", r);
        rec.request_id = id;
        const std::size_t u = pick_user(rng);
        rec.user_id = "u" + std::to_string(u);

        const std::int64_t now = 1'000'000 + static_cast<std::int64_t>(r) * 60;
        const auto& pool = world.preferred_items(u);
        std::uniform_int_distribution<std::size_t> pick_pref(0, pool.size() - 1);
        for (std::size_t j = 0; j < cfg.t; ++j) {
            const auto item = pool[pick_pref(rng)];
            rec.context.push_back({now - static_cast<std::int64_t>((cfg.t - j) * 30),
                                   FeatureMap{{"user", static_cast<std::int64_t>(u)}, {"item", item}}});
        }

        std::set<std::int64_t> chosen;
        while (rec.candidates.size() < cfg.n) {
            const auto item = pick_item(rng);
            if (chosen.insert(item).second) rec.candidates.push_back({item, item_features(item)});
        }

        std::vector<std::size_t> order(cfg.n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<std::int64_t> shown(cfg.m);
        for (std::size_t o = 0; o < cfg.m; ++o) shown[o] = rec.candidates[order[o]].item_id;

        Page page;
        bool any_click = false;
        for (std::size_t o = 0; o < cfg.m; ++o) {
            const double p = world.click_probability(u, shown, o);
            PageSlot slot;
            slot.item_id = shown[o];
            slot.position = static_cast<int>(o + 1);
            slot.click = unit(rng) < p ? 1 : 0;
            any_click = any_click || slot.click;
            rec.target.push_back(slot);
            slot.features = item_features(shown[o]);
            page.push_back(std::move(slot));
        }

        auto& past = history[u];
        rec.history.assign(past.begin(), past.end());
        if (cfg.history_mode == HistoryMode::AllPages || any_click) {
            past.push_back(std::move(page));
            if (past.size() > cfg.l) past.pop_front();
        }
        sink(std::move(rec));
    }
}

std::vector<ImpressionRecord> generate_synthetic(const GeneratorConfig& cfg) {
    std::vector<ImpressionRecord> out;
    out.reserve(cfg.n_requests);
    generate_synthetic(cfg, [&](ImpressionRecord&& r) { out.push_back(std::move(r)); });
    return out;
}

// ---------------------------------------------------------------------------

std::vector<SparsityRow> sparsity_report(const std::vector<ImpressionRecord>& log, std::size_t k_max) {
    std::size_t m = 0;
    for (const auto& r : log) m = m == 0 ? r.target.size() : std::min(m, r.target.size());
    if (k_max == 0 || (!log.empty() && k_max > m)) {
        fail(ErrorKind::Contract, "sparsity k_max " + std::to_string(k_max) + " must lie in [1, m=" + std::to_string(m) + "]");
    }
    std::vector<SparsityRow> rows;
    for (std::size_t k = 1; k <= k_max; ++k) {
        std::map<std::vector<std::int64_t>, std::uint64_t> counts;
        std::uint64_t occurrences = 0;
        for (const auto& r : log) {
            std::vector<std::int64_t> items;
            for (const auto& s : r.target) items.push_back(s.item_id);
            std::sort(items.begin(), items.end());
            std::vector<bool> select(items.size(), false);
            std::fill(select.begin(), select.begin() + static_cast<std::ptrdiff_t>(k), true);
            do {
                std::vector<std::int64_t> subset;
                for (std::size_t i = 0; i < items.size(); ++i)
                    if (select[i]) subset.push_back(items[i]);
                ++counts[subset];
                ++occurrences;
            } while (std::prev_permutation(select.begin(), select.end()));
        }
        SparsityRow row;
        row.k = k;
        row.distinct_tuples = counts.size();
        row.occurrences = occurrences;
        row.mean_count = counts.empty() ? 0.0 : static_cast<double>(occurrences) / static_cast<double>(counts.size());
        rows.push_back(row);
    }
    return rows;
}

}  // namespace ria
