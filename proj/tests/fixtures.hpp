#pragma once

#include <random>
#include <string>

#include "ria/config.hpp"
#include "ria/data.hpp"
#include "ria/gradcheck.hpp"
#include "ria/model.hpp"

namespace ria::testing {

inline RiaConfig small_config() {
    RiaConfig cfg;
    cfg.d = 8;
    cfg.p_pos = 4;
    cfg.t = 6;
    cfg.n = 5;
    cfg.m = 3;
    cfg.l = 2;
    cfg.depth = 2;
    cfg.n_users = 20;
    cfg.n_items = 40;
    cfg.n_cats = 4;
    return cfg;
}

inline GeneratorConfig generator_for(const RiaConfig& cfg, std::size_t requests, std::uint64_t seed) {
    GeneratorConfig g;
    g.n_users = cfg.n_users;
    g.n_items = cfg.n_items;
    g.n_cats = cfg.n_cats;
    g.m = cfg.m;
    g.n = cfg.n;
    g.l = cfg.l;
    g.t = cfg.t;
    g.n_requests = requests;
    g.noise_seed = seed;
    return g;
}

/// A request whose history is full.
inline RequestIds sample_request(const RiaConfig& cfg, std::uint64_t seed = 3) {
    return encode_request(gradcheck_record(cfg, seed), cfg);
}

/// Keeps the first lengths[k] display positions of history page k.
inline ImpressionRecord shorten_history(ImpressionRecord record, const std::vector<std::size_t>& lengths) {
    for (std::size_t k = 0; k < record.history.size() && k < lengths.size(); ++k) {
        Page kept;
        for (const auto& s : record.history[k])
            if (static_cast<std::size_t>(s.position) <= lengths[k]) kept.push_back(s);
        record.history[k] = kept;
    }
    return record;
}

/// Makes every block non-trivial: f2 maps and heads are otherwise zero or near-identity.
template <typename Real>
void jitter(RiaParams<Real>& p, std::uint64_t seed, double scale = 0.3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    p.visit([&](const std::string&, Tensor<Real>& t) {
        for (auto& v : t.data) v += static_cast<Real>(u(rng));
    });
}

}  // namespace ria::testing
