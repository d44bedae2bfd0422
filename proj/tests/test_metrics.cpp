#include <doctest.h>

#include <array>
#include <cmath>

#include "ria/metrics.hpp"
#include "support.hpp"

using namespace ria;
using namespace ria::testing;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double credit = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            credit += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            pairs += 1;
        }
    }
    return credit / pairs;
}

struct Instance {
    std::vector<double> scores;
    std::vector<int> labels;
};

// Coarse score grids force ties; both classes always present.
Instance random_instance(Rng64& rng, std::size_t n_max = 1000) {
    std::uniform_int_distribution<std::size_t> size(2, n_max);
    std::uniform_int_distribution<int> grid(0, 2);
    const std::size_t n = size(rng);
    const int levels = std::array<int, 3>{5, 50, 1 << 30}[static_cast<std::size_t>(grid(rng))];
    std::uniform_int_distribution<int> level(0, levels - 1);
    std::uniform_real_distribution<double> rate(0.05, 0.95);
    std::bernoulli_distribution click(rate(rng));
    Instance inst;
    for (std::size_t i = 0; i < n; ++i) {
        inst.scores.push_back(static_cast<double>(level(rng)) / levels);
        inst.labels.push_back(click(rng) ? 1 : 0);
    }
    inst.labels[0] = 1;
    inst.labels[1] = 0;
    return inst;
}

}  // namespace

TEST_CASE("auc examples") {
    CHECK(auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
    CHECK(auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0}) == 0.0);
    CHECK(auc(std::vector<double>{0.5, 0.5, 0.2}, std::vector<int>{1, 0, 0}) == 0.75);
    CHECK(auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1, 0}) == 0.5);
}

TEST_CASE("auc with one class is undefined") {
    CHECK(kind_of([] { auc(std::vector<double>{0.2, 0.4}, std::vector<int>{1, 1}); }) == ErrorKind::UndefinedMetric);
    CHECK(kind_of([] { auc(std::vector<double>{0.2}, std::vector<int>{0}); }) == ErrorKind::UndefinedMetric);
    CHECK(kind_of([] { auc(std::vector<double>{0.2}, std::vector<int>{0, 1}); }) == ErrorKind::Dimension);
}

TEST_CASE("logloss examples") {
    CHECK(logloss(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{1, 0, 1}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const double clamped = logloss(std::vector<double>{1.0}, std::vector<int>{1});
    CHECK(clamped == doctest::Approx(-std::log1p(-kLogLossClamp)).epsilon(1e-12));
    CHECK(clamped > 0.99e-7);
    CHECK(clamped < 1.01e-7);
    CHECK(std::isfinite(logloss(std::vector<double>{0.0}, std::vector<int>{1})));
    const double two = logloss(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 1});
    CHECK(two == doctest::Approx((-std::log(0.9) - std::log(0.1)) / 2).epsilon(1e-15));
    CHECK(two == doctest::Approx(1.2039728043).epsilon(1e-10));
}

TEST_CASE("fast auc matches the pairwise oracle on random instances") {
    Rng64 rng(5);
    double worst = 0;
    for (int k = 0; k < 100; ++k) {
        const auto inst = random_instance(rng);
        worst = std::max(worst, std::abs(auc(inst.scores, inst.labels) - pairwise_auc(inst.scores, inst.labels)));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("logloss matches direct summation on random instances") {
    Rng64 rng(6);
    std::uniform_real_distribution<double> p(0.0, 1.0);
    for (int k = 0; k < 100; ++k) {
        auto inst = random_instance(rng, 300);
        for (auto& s : inst.scores) s = p(rng);
        double sum = 0;
        for (std::size_t i = 0; i < inst.scores.size(); ++i) {
            const double q = std::min(std::max(inst.scores[i], 1e-7), 1 - 1e-7);
            sum += inst.labels[i] ? -std::log(q) : -std::log(1 - q);
        }
        CHECK(std::abs(logloss(inst.scores, inst.labels) - sum / static_cast<double>(inst.scores.size())) < 1e-12);
    }
}

TEST_CASE("auc is invariant under strictly increasing maps") {
    Rng64 rng(7);
    std::uniform_real_distribution<double> coef(0.1, 3.0);
    for (int k = 0; k < 50; ++k) {
        const auto inst = random_instance(rng, 300);
        const double a = coef(rng), b = coef(rng);
        std::vector<double> mapped;
        for (double s : inst.scores) mapped.push_back(std::exp(a * s) + b * s * s * s);
        CHECK(auc(mapped, inst.labels) == auc(inst.scores, inst.labels));
    }
}

TEST_CASE("auc of negated scores is the complement") {
    Rng64 rng(8);
    for (int k = 0; k < 50; ++k) {
        const auto inst = random_instance(rng, 300);
        std::vector<double> neg;
        for (double s : inst.scores) neg.push_back(-s);
        CHECK(auc(inst.scores, inst.labels) + auc(neg, inst.labels) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("per-request pooling averages requests with both classes") {
    const std::vector<double> s{0.9, 0.1, 0.5, 0.2, 0.4, 0.3, 0.7};
    const std::vector<int> y{1, 0, 1, 1, 0, 1, 0};
    const std::vector<std::size_t> g{0, 0, 1, 1, 1, 2, 2};
    const auto per = evaluate_scores(s, y, g, AucPooling::PerRequest);
    CHECK(per.auc == doctest::Approx((1.0 + 0.5 + 0.0) / 3).epsilon(1e-15));
    CHECK(per.n_examples == 7);
    const auto glob = evaluate_scores(s, y, g, AucPooling::Global);
    CHECK(glob.auc == pairwise_auc(s, y));
    CHECK(glob.logloss == per.logloss);

    const std::vector<int> one_class{1, 1, 0, 0};
    const std::vector<std::size_t> sep{0, 0, 1, 1};
    CHECK(kind_of([&] { evaluate_scores(std::vector<double>{0.1, 0.2, 0.3, 0.4}, one_class, sep, AucPooling::PerRequest); }) ==
          ErrorKind::UndefinedMetric);
}

TEST_CASE("report formatting") {
    EvalReport r;
    r.auc = 0.75;
    r.logloss = 0.5;
    r.n_examples = 3;
    CHECK(format_report(r, "val_") == "val_auc=0.750000000\nval_logloss=0.500000000\nval_n=3\n");
}
