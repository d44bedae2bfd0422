#pragma once

#include <span>
#include <string>
#include <vector>

#include "ria/config.hpp"

namespace ria {

struct EvalReport {
    double auc = 0.0;
    double logloss = 0.0;
    std::size_t n_examples = 0;
    AucPooling pooling = AucPooling::Global;
};

inline constexpr double kLogLossClamp = 1e-7;

/// Mann-Whitney AUC, ties credited 0.5. O(N log N). Throws UndefinedMetric
/// when only one class is present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Mean BCE with probabilities clamped to [eps, 1 - eps].
double logloss(std::span<const double> scores, std::span<const int> labels);

/// `groups[i]` names the request of example i. PerRequest pooling averages
/// the AUC of every request that has both classes.
EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels,
                           std::span<const std::size_t> groups, AucPooling pooling);

/// `auc=...`, `logloss=...`, `n=...` lines under an optional key prefix.
std::string format_report(const EvalReport& report, const std::string& prefix = "");

}  // namespace ria
