#include "ria/selection.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "ria/errors.hpp"

namespace ria {

std::uint64_t permutation_count(std::size_t n, std::size_t m) {
    if (m > n) return 0;
    std::uint64_t count = 1;
    for (std::size_t i = 0; i < m; ++i) {
        const std::uint64_t f = n - i;
        if (count > std::numeric_limits<std::uint64_t>::max() / f) return std::numeric_limits<std::uint64_t>::max();
        count *= f;
    }
    return count;
}

namespace {

void extend(std::size_t n, std::size_t m, CandidateList& prefix, std::vector<bool>& used,
            std::vector<CandidateList>& out) {
    if (prefix.size() == m) {
        out.push_back(prefix);
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (used[i]) continue;
        used[i] = true;
        prefix.push_back(i);
        extend(n, m, prefix, used, out);
        prefix.pop_back();
        used[i] = false;
    }
}

}  // namespace

std::vector<CandidateList> enumerate_target_lists(std::size_t n, std::size_t m, std::size_t budget,
                                                  std::uint64_t seed) {
    if (m > n) fail(ErrorKind::Contract, "list length " + std::to_string(m) + " exceeds " + std::to_string(n) + " candidates");
    if (m == 0) fail(ErrorKind::Contract, "list length must be positive");
    if (budget == 0) fail(ErrorKind::Contract, "enumeration budget must be at least 1");

    std::vector<CandidateList> out;
    if (permutation_count(n, m) <= budget) {
        CandidateList prefix;
        std::vector<bool> used(n, false);
        extend(n, m, prefix, used, out);
        return out;
    }
    std::mt19937_64 rng(seed);
    std::set<CandidateList> drawn;
    std::vector<std::size_t> pool(n);
    while (drawn.size() < budget) {
        std::iota(pool.begin(), pool.end(), 0);
        for (std::size_t i = 0; i < m; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        drawn.emplace(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
    }
    out.assign(drawn.begin(), drawn.end());
    return out;
}

double list_reward(std::span<const double> pctr) {
    double s = 0;
    for (auto p : pctr) s += p;
    return s;
}

const ScoredList& pick_best(std::span<const ScoredList> scored, std::span<const std::int64_t> candidate_ids) {
    if (scored.empty()) fail(ErrorKind::Contract, "no candidate lists to select from");
    auto ids_of = [&](const ScoredList& s) {
        std::vector<std::int64_t> seq;
        for (auto row : s.items) {
            if (row >= candidate_ids.size()) fail(ErrorKind::Lookup, "candidate row " + std::to_string(row) + " out of range");
            seq.push_back(candidate_ids[row]);
        }
        return seq;
    };
    std::size_t best = 0;
    for (std::size_t i = 1; i < scored.size(); ++i) {
        if (scored[i].reward > scored[best].reward ||
            (scored[i].reward == scored[best].reward && ids_of(scored[i]) < ids_of(scored[best]))) {
            best = i;
        }
    }
    return scored[best];
}

template <typename Real>
ScoredList score_list(RiaParams<Real>& params, const RiaConfig& cfg, const RequestIds& ids, const CandidateList& rows,
                      OpCounters* counters) {
    Graph<Real> g;
    auto out = ria_forward(g, params, cfg, ids, std::span<const std::size_t>(rows), counters);
    ScoredList s;
    s.items = rows;
    for (auto p : g.value(out.listwise.probs)) s.per_position_pctr.push_back(static_cast<double>(p));
    s.reward = list_reward(s.per_position_pctr);
    return s;
}

template <typename Real>
ScoredList select_best_list(RiaParams<Real>& params, const RiaConfig& cfg, const RequestIds& ids,
                            std::span<const CandidateList> lists) {
    if (lists.empty()) fail(ErrorKind::Contract, "no candidate lists to select from");
    std::vector<ScoredList> scored;
    scored.reserve(lists.size());
    for (const auto& rows : lists) scored.push_back(score_list(params, cfg, ids, rows));
    return pick_best(scored, ids.candidate_ids);
}

#define RIA_INSTANTIATE_SELECTION(Real)                                                                        \
    template ScoredList score_list<Real>(RiaParams<Real>&, const RiaConfig&, const RequestIds&,              \
                                         const CandidateList&, OpCounters*);                                   \
    template ScoredList select_best_list<Real>(RiaParams<Real>&, const RiaConfig&, const RequestIds&,        \
                                               std::span<const CandidateList>);

RIA_INSTANTIATE_SELECTION(float)
RIA_INSTANTIATE_SELECTION(double)

}  // namespace ria
