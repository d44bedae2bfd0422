#include "ria/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ria/errors.hpp"

namespace ria {

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        fail(ErrorKind::Dimension, "auc: " + std::to_string(scores.size()) + " scores vs " +
                                       std::to_string(labels.size()) + " labels");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of positive midranks, one tie group at a time.
    double pos_rank_sum = 0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::size_t group_pos = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            group_pos += labels[order[j]] == 1;
            ++j;
        }
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        pos_rank_sum += midrank * static_cast<double>(group_pos);
        positives += group_pos;
        i = j;
    }
    const std::size_t negatives = scores.size() - positives;
    if (positives == 0 || negatives == 0) {
        fail(ErrorKind::UndefinedMetric, "auc undefined: " + std::to_string(positives) + " positives, " +
                                             std::to_string(negatives) + " negatives");
    }
    const double p = static_cast<double>(positives), n = static_cast<double>(negatives);
    return (pos_rank_sum - p * (p + 1) / 2) / (p * n);
}

double logloss(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        fail(ErrorKind::Dimension, "logloss: " + std::to_string(scores.size()) + " scores vs " +
                                       std::to_string(labels.size()) + " labels");
    }
    double s = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double p = std::clamp(scores[i], kLogLossClamp, 1.0 - kLogLossClamp);
        s += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    return s / static_cast<double>(scores.size());
}

EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels,
                           std::span<const std::size_t> groups, AucPooling pooling) {
    EvalReport report;
    report.pooling = pooling;
    report.n_examples = scores.size();
    report.logloss = logloss(scores, labels);
    if (pooling == AucPooling::Global) {
        report.auc = auc(scores, labels);
        return report;
    }
    if (groups.size() != scores.size()) fail(ErrorKind::Dimension, "per-request AUC needs one group id per example");
    double total = 0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < scores.size();) {
        std::size_t j = i;
        int pos = 0, neg = 0;
        while (j < scores.size() && groups[j] == groups[i]) {
            (labels[j] == 1 ? pos : neg)++;
            ++j;
        }
        if (pos > 0 && neg > 0) {
            total += auc(scores.subspan(i, j - i), labels.subspan(i, j - i));
            ++counted;
        }
        i = j;
    }
    if (counted == 0) fail(ErrorKind::UndefinedMetric, "no request has both clicked and unclicked positions");
    report.auc = total / static_cast<double>(counted);
    return report;
}

std::string format_report(const EvalReport& r, const std::string& prefix) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%sauc=%.9f\n%slogloss=%.9f\n%sn=%zu\n", prefix.c_str(), r.auc, prefix.c_str(),
                  r.logloss, prefix.c_str(), r.n_examples);
    return buf;
}

}  // namespace ria
