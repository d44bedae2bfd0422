#include "ria/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "ria/errors.hpp"
#include "ria/train.hpp"

namespace ria {

double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

ImpressionRecord gradcheck_record(const RiaConfig& cfg, std::uint64_t seed) {
    GeneratorConfig gen;
    gen.n_users = 3;
    gen.n_items = cfg.n_items;
    gen.n_cats = cfg.n_cats;
    gen.m = cfg.m;
    gen.n = cfg.n;
    gen.l = cfg.l;
    gen.t = cfg.t;
    gen.n_requests = 8 * (cfg.l + 1);
    gen.noise_seed = seed;
    for (auto& r : generate_synthetic(gen)) {
        if (r.history.size() == cfg.l) {
            int clicks = 0;
            for (const auto& s : r.target) clicks += s.click;
            if (clicks > 0 && clicks < static_cast<int>(r.target.size())) return r;
        }
    }
    for (auto& r : generate_synthetic(gen)) {
        if (r.history.size() == cfg.l) return r;
    }
    fail(ErrorKind::Invariant, "no synthetic record with a full history");
}

GradcheckReport gradcheck_joint_loss(const RiaConfig& cfg_in, const ImpressionRecord& record,
                                     const GradcheckOptions& options) {
    RiaConfig cfg = cfg_in;
    cfg.precision = Precision::F64;
    auto params = RiaParams<double>::init(cfg);
    auto reg = registry(params);
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> jitter(-options.perturb, options.perturb);
    for (auto& [name, t] : reg) {
        for (auto& v : t->data) v += jitter(rng);
    }
    const auto ids = encode_request(record, cfg);
    auto loss_value = [&] {
        Graph<double> g;
        auto out = ria_forward(g, params, cfg, ids);
        return g.scalar(ria_loss(g, cfg, out, ids).total);
    };

    GradcheckReport report;
    params.zero_grad();
    {
        Graph<double> g;
        auto out = ria_forward(g, params, cfg, ids);
        Var total = ria_loss(g, cfg, out, ids).total;
        report.loss = g.scalar(total);
        g.backward(total);
    }

    std::vector<std::size_t> offsets;
    for (const auto& [name, t] : reg) {
        offsets.push_back(report.scalar_params);
        report.scalar_params += t->size();
    }
    std::uniform_int_distribution<std::size_t> pick(0, report.scalar_params - 1);
    for (std::size_t p = 0; p < options.probes; ++p) {
        const std::size_t flat = pick(rng);
        const std::size_t k = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin()) - 1;
        auto& [name, t] = reg[k];
        const std::size_t i = flat - offsets[k];
        const double saved = t->data[i];
        auto at = [&](double offset) {
            t->data[i] = saved + offset;
            const double v = loss_value();
            t->data[i] = saved;
            return v;
        };
        const double h = options.step;

        GradProbe probe;
        probe.param = name;
        probe.index = i;
        probe.analytic = t->has_grad() ? t->grad[i] : 0.0;
        probe.numeric = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h);
        probe.rel_err = relative_error(probe.analytic, probe.numeric, options.floor);
        report.max_rel_err = std::max(report.max_rel_err, probe.rel_err);
        report.max_abs_err = std::max(report.max_abs_err, std::abs(probe.analytic - probe.numeric));
        report.probes.push_back(std::move(probe));
    }
    return report;
}

std::string format_gradcheck(const GradcheckReport& report) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "probes=%zu\nscalar_params=%zu\nloss=%.17g\nmax_rel_err=%.6e\nmax_abs_err=%.6e\n",
                  report.probes.size(), report.scalar_params, report.loss, report.max_rel_err, report.max_abs_err);
    return buf;
}

}  // namespace ria
