#include <doctest.h>

#include <algorithm>
#include <cstring>

#include "support.hpp"

using namespace ria;
using namespace ria::testing;

namespace {

HstuBlock<double> random_block(std::size_t d, MaskMode mask, std::uint64_t seed) {
    Rng rng(seed);
    auto b = HstuBlock<double>::init(d, mask, rng);
    Rng64 jitter(seed + 100);
    for (auto& v : b.f2.weight.data) v = random_values(1, jitter, -0.5, 0.5)[0];
    for (auto& v : b.f2.bias.data) v = random_values(1, jitter, -0.5, 0.5)[0];
    for (auto& v : b.gamma.data) v = random_values(1, jitter, 0.5, 1.5)[0];
    for (auto& v : b.beta.data) v = random_values(1, jitter, -0.2, 0.2)[0];
    return b;
}

std::vector<double> run_block(HstuBlock<double>& b, const Tensor<double>& x) {
    Graph<double> g;
    auto out = g.value(hstu_block(g, b, g.constant(x)));
    return {out.begin(), out.end()};
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("hstu with zero f2 is the identity") {
    Rng rng(1);
    Rng64 data(2);
    for (auto mask : {MaskMode::Full, MaskMode::Causal}) {
        auto b = HstuBlock<double>::init(6, mask, rng);
        const auto x = random_tensor({4, 6}, data);
        CHECK(run_block(b, x) == x.data);
    }
}

TEST_CASE("hstu matches the loop oracle") {
    Rng64 data(3);
    for (std::size_t s : {1, 2, 5}) {
        for (auto mask : {MaskMode::Full, MaskMode::Causal}) {
            auto b = random_block(4, mask, 10 + s);
            const auto x = random_tensor({s, 4}, data);
            const auto got = run_block(b, x);
            CHECK(got.size() == s * 4);
            CHECK(max_diff(got, hstu_oracle(b, x.data, s)) < 1e-12);
        }
    }
}

TEST_CASE("hstu causal mask only propagates forward") {
    auto b = random_block(4, MaskMode::Causal, 5);
    Rng64 data(6);
    const std::size_t s = 5;
    const auto x = random_tensor({s, 4}, data);
    const auto base = run_block(b, x);
    for (std::size_t j = 0; j < s; ++j) {
        auto y = x;
        y.at(j, 1) += 0.7;
        const auto out = run_block(b, y);
        for (std::size_t r = 0; r < s; ++r) {
            bool changed = false;
            for (std::size_t c = 0; c < 4; ++c) changed = changed || out[r * 4 + c] != base[r * 4 + c];
            if (r < j) CHECK_FALSE(changed);
            if (r >= j) CHECK(changed);
        }
    }
}

TEST_CASE("hstu is shape preserving") {
    Rng64 data(7);
    for (std::size_t d = 1; d <= 5; ++d)
        for (std::size_t s = 1; s <= 4; ++s) {
            auto b = random_block(d, MaskMode::Full, d * 10 + s);
            Graph<double> g;
            CHECK(g.shape(hstu_block(g, b, g.constant(random_tensor({s, d}, data)))) == Shape{s, d});
        }
}

TEST_CASE("hstu gradients match central differences") {
    auto b = random_block(3, MaskMode::Causal, 8);
    Rng64 data(9);
    auto r = finite_difference(
        [&](Graph<double>& g, std::vector<Var>& v) {
            Var y = hstu_block(g, b, v[0]);
            return g.sum(g.mul(y, y));
        },
        {random_tensor({4, 3}, data)});
    CHECK(r.max_rel < 1e-5);
}

TEST_CASE("target attention over one key returns it") {
    Rng rng(11);
    auto att = TargetAttention<double>::init(3, rng);
    Rng64 data(12);
    const auto key = random_tensor({1, 3}, data);
    Graph<double> g;
    auto out = g.value(target_attention(g, att, g.constant(random_tensor({1, 3}, data)), g.constant(key)));
    CHECK(std::vector<double>(out.begin(), out.end()) == key.data);
}

TEST_CASE("target attention over identical keys returns the key") {
    Rng rng(13);
    auto att = TargetAttention<double>::init(3, rng);
    Graph<double> g;
    Tensor<double> keys({4, 3}, {0.25, -0.5, 1, 0.25, -0.5, 1, 0.25, -0.5, 1, 0.25, -0.5, 1});
    auto out = g.value(target_attention(g, att, g.constant(Tensor<double>({1, 3}, {1, 2, 3})), g.constant(keys)));
    CHECK(std::abs(out[0] - 0.25) < 1e-15);
    CHECK(std::abs(out[1] + 0.5) < 1e-15);
    CHECK(std::abs(out[2] - 1) < 1e-15);
}

TEST_CASE("target attention ignores key order") {
    Rng rng(14);
    auto att = TargetAttention<double>::init(4, rng);
    Rng64 data(15);
    const auto q = random_tensor({1, 4}, data);
    const auto keys = random_tensor({6, 4}, data);
    auto run = [&](const Tensor<double>& k) {
        Graph<double> g;
        auto v = g.value(target_attention(g, att, g.constant(q), g.constant(k)));
        return std::vector<double>(v.begin(), v.end());
    };
    const auto base = run(keys);
    std::vector<std::size_t> order{0, 1, 2, 3, 4, 5};
    for (int trial = 0; trial < 10; ++trial) {
        std::shuffle(order.begin(), order.end(), data);
        Tensor<double> shuffled({6, 4}, std::vector<double>(24));
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t c = 0; c < 4; ++c) shuffled.at(r, c) = keys.at(order[r], c);
        CHECK(max_diff(run(shuffled), base) < 1e-14);
    }
}

TEST_CASE("target attention stays inside the hull of its keys") {
    Rng rng(16);
    auto att = TargetAttention<double>::init(1, rng);
    Rng64 data(17);
    for (int trial = 0; trial < 50; ++trial) {
        const auto keys = random_tensor({5, 1}, data, -3, 3);
        Graph<double> g;
        const double out = g.value(target_attention(g, att, g.constant(random_tensor({1, 1}, data)), g.constant(keys)))[0];
        CHECK(out >= *std::min_element(keys.data.begin(), keys.data.end()) - 1e-15);
        CHECK(out <= *std::max_element(keys.data.begin(), keys.data.end()) + 1e-15);
    }
}

TEST_CASE("target attention gradients match central differences") {
    Rng rng(18);
    auto att = TargetAttention<double>::init(3, rng);
    Rng64 data(19);
    auto r = finite_difference(
        [&](Graph<double>& g, std::vector<Var>& v) { return g.sum(g.silu(target_attention(g, att, v[0], v[1]))); },
        {random_tensor({1, 3}, data), random_tensor({4, 3}, data)});
    CHECK(r.max_rel < 1e-5);
}

TEST_CASE("self attention over one row applies the value map") {
    Rng rng(20);
    auto att = SelfAttention<double>::init(3, 1, rng);
    Rng64 data(21);
    const auto e = random_tensor({1, 3}, data);
    Graph<double> g;
    auto out = g.value(self_attention(g, att, g.constant(e)));
    for (std::size_t c = 0; c < 3; ++c) {
        double expect = 0;
        for (std::size_t i = 0; i < 3; ++i) expect += e.data[i] * att.wv.data[i * 3 + c];
        CHECK(std::abs(out[c] - expect) < 1e-15);
    }
}

TEST_CASE("self attention weights are a distribution per row") {
    // With W_V = I, a constant input column passes through unchanged iff
    // every attention row sums to one.
    Rng rng(22);
    auto att = SelfAttention<double>::init(3, 1, rng);
    att.wv = Tensor<double>({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Rng64 data(23);
    auto e = random_tensor({5, 3}, data);
    for (std::size_t r = 0; r < 5; ++r) e.at(r, 2) = 0.75;
    Graph<double> g;
    auto out = g.tensor(self_attention(g, att, g.constant(e)));
    for (std::size_t r = 0; r < 5; ++r) CHECK(std::abs(out.at(r, 2) - 0.75) < 1e-6);
}

TEST_CASE("self attention shares parameters and respects row symmetry") {
    Rng rng(24);
    auto att = SelfAttention<double>::init(4, 2, rng);
    Rng64 data(25);
    const auto page = random_tensor({3, 4}, data);
    Graph<double> g;
    Var h1 = self_attention(g, att, g.constant(page));
    Var h2 = self_attention(g, att, g.constant(page));
    CHECK(g.tensor(h1).data == g.tensor(h2).data);

    Tensor<double> same({3, 4}, std::vector<double>(12));
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) same.at(r, c) = page.at(0, c);
    auto out = g.tensor(self_attention(g, att, g.constant(same)));
    for (std::size_t r = 1; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) CHECK(out.at(r, c) == out.at(0, c));
}

TEST_CASE("self attention gradients match central differences") {
    Rng rng(26);
    for (std::size_t heads : {1, 2}) {
        auto att = SelfAttention<double>::init(4, heads, rng);
        Rng64 data(27);
        auto r = finite_difference(
            [&](Graph<double>& g, std::vector<Var>& v) {
                Var y = self_attention(g, att, v[0]);
                return g.sum(g.mul(y, y));
            },
            {random_tensor({3, 4}, data)});
        CHECK(r.max_rel < 1e-5);
    }
}

TEST_CASE("self attention ignores padded key rows") {
    Rng rng(40);
    for (std::size_t heads : {1, 2}) {
        auto att = SelfAttention<double>::init(4, heads, rng);
        Rng64 data(41);
        auto page = random_tensor({4, 4}, data);
        const auto head = Tensor<double>({2, 4}, std::vector<double>(page.data.begin(), page.data.begin() + 8));
        Graph<double> g;
        const auto full = g.tensor(self_attention(g, att, g.constant(page), {}, 2));
        const auto trunc = g.tensor(self_attention(g, att, g.constant(head)));
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(full.at(r, c) - trunc.at(r, c)) < 1e-15);
        for (std::size_t i = 8; i < 16; ++i) page.data[i] = 50.0 - static_cast<double>(i);
        const auto moved = g.tensor(self_attention(g, att, g.constant(page), {}, 2));
        for (std::size_t i = 0; i < 8; ++i) CHECK(moved.data[i] == full.data[i]);
        CHECK(g.tensor(self_attention(g, att, g.constant(page), {}, 4)).data ==
              g.tensor(self_attention(g, att, g.constant(page))).data);
        CHECK(kind_of([&] { self_attention(g, att, g.constant(page), {}, 5); }) == ErrorKind::Contract);
    }
}

TEST_CASE("masked self attention gradients match central differences") {
    Rng rng(42);
    auto att = SelfAttention<double>::init(4, 2, rng);
    Rng64 data(43);
    auto r = finite_difference(
        [&](Graph<double>& g, std::vector<Var>& v) {
            Var y = self_attention(g, att, v[0], {}, 2);
            return g.sum(g.mul(y, y));
        },
        {random_tensor({3, 4}, data)});
    CHECK(r.max_rel < 1e-5);
}

TEST_CASE("embedding lookups") {
    Rng rng(28);
    auto a = EmbeddingTable<double>::init("a", 5, 2, rng);
    auto b = EmbeddingTable<double>::init("b", 3, 2, rng);
    {
        std::vector<FieldLookup<double>> fields{{"a", &a, {0}}};
        Graph<double> g;
        auto out = g.value(embed_features(g, fields));
        CHECK(out[0] == a.rows.at(0, 0));
        CHECK(out[1] == a.rows.at(0, 1));
    }
    {
        std::vector<FieldLookup<double>> fields{{"a", &a, {4, 1}}, {"b", &b, {2, 0}}};
        Graph<double> g;
        auto out = g.tensor(embed_features(g, fields));
        CHECK(out.shape == Shape{2, 4});
        CHECK(out.at(0, 0) == a.rows.at(4, 0));
        CHECK(out.at(0, 3) == b.rows.at(2, 1));
        CHECK(out.at(1, 2) == b.rows.at(0, 0));
    }
}

TEST_CASE("embedding gradients touch only looked-up rows") {
    Rng rng(29);
    auto a = EmbeddingTable<double>::init("a", 6, 3, rng);
    std::vector<FieldLookup<double>> fields{{"a", &a, {1, 4, 1}}};
    Graph<double> g;
    Var e = embed_features(g, fields);
    g.backward(g.sum(g.mul(e, e)));
    for (std::size_t r = 0; r < 6; ++r) {
        bool nonzero = false;
        for (std::size_t c = 0; c < 3; ++c) nonzero = nonzero || a.rows.grad[r * 3 + c] != 0.0;
        CHECK(nonzero == (r == 1 || r == 4));
    }
    CHECK(a.rows.grad[1 * 3] == 4 * a.rows.at(1, 0));
}

TEST_CASE("embedding out of range names field and index") {
    Rng rng(30);
    auto a = EmbeddingTable<double>::init("items", 4, 2, rng);
    std::vector<FieldLookup<double>> fields{{"item", &a, {2, 9}}};
    Graph<double> g;
    const auto msg = message_of([&] { embed_features(g, fields); });
    CHECK(kind_of([&] { embed_features(g, fields); }) == ErrorKind::Lookup);
    CHECK(msg.find("item") != std::string::npos);
    CHECK(msg.find("9") != std::string::npos);
}

TEST_CASE("mlp gradients match central differences") {
    Rng rng(31);
    auto net = Mlp<double>::init({3, 4, 2}, rng);
    Rng64 data(32);
    auto r = finite_difference([&](Graph<double>& g, std::vector<Var>& v) { return g.sum(mlp(g, net, v[0])); },
                               {random_tensor({2, 3}, data)});
    CHECK(r.max_rel < 1e-5);
}

TEST_CASE("initialization is seeded and bounded") {
    Rng a(33), b(33);
    auto x = Linear<double>::init(9, 4, a);
    auto y = Linear<double>::init(9, 4, b);
    CHECK(x.weight.data == y.weight.data);
    for (auto v : x.weight.data) CHECK(std::abs(v) <= 1.0 / 3.0);
}

TEST_CASE("counters tally block evaluations per stage") {
    OpCounters counters;
    Rng rng(34);
    auto b = HstuBlock<double>::init(2, MaskMode::Full, rng);
    Graph<double> g;
    Var x = g.constant(Tensor<double>::zeros({2, 2}));
    hstu_block(g, b, x, Probe{&counters, Stage::Lmh});
    hstu_block(g, b, x, Probe{&counters, Stage::Lmh});
    hstu_block(g, b, x);
    CHECK(counters.stage(Stage::Lmh).hstu_evals == 2);
    CHECK(counters.total().hstu_evals == 2);
    counters.reset();
    CHECK(counters.total() == OpCounts{});
}
