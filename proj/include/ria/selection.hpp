#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ria/model.hpp"

namespace ria {

using CandidateList = std::vector<std::size_t>;  // candidate rows in display order

struct ScoredList {
    CandidateList items;
    std::vector<double> per_position_pctr;
    double reward = 0.0;  // sum of per_position_pctr, left to right
};

/// Number of ordered m-permutations of n, saturating at UINT64_MAX.
std::uint64_t permutation_count(std::size_t n, std::size_t m);

/// All ordered m-permutations in lexicographic order when there are at most
/// `budget` of them; otherwise `budget` distinct permutations drawn with
/// `seed`, returned sorted.
std::vector<CandidateList> enumerate_target_lists(std::size_t n, std::size_t m, std::size_t budget,
                                                  std::uint64_t seed);

double list_reward(std::span<const double> pctr);

/// Argmax by reward; ties go to the lexicographically smallest item-id
/// sequence, where `candidate_ids[row]` is the item id of a candidate row.
const ScoredList& pick_best(std::span<const ScoredList> scored, std::span<const std::int64_t> candidate_ids);

template <typename Real>
ScoredList score_list(RiaParams<Real>& params, const RiaConfig& cfg, const RequestIds& ids, const CandidateList& rows,
                      OpCounters* counters = nullptr);

template <typename Real>
ScoredList select_best_list(RiaParams<Real>& params, const RiaConfig& cfg, const RequestIds& ids,
                            std::span<const CandidateList> lists);

}  // namespace ria
