#include "ria/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "ria/errors.hpp"

namespace ria {

template <typename Real>
Registry<Real> registry(RiaParams<Real>& params) {
    Registry<Real> reg;
    params.visit([&](const std::string& name, Tensor<Real>& t) { reg.emplace_back(name, &t); });
    return reg;
}

template <typename Real>
void adam_step(const Registry<Real>& reg, AdamState<Real>& state, const AdamHyper& hyper) {
    if (state.first.empty()) {
        for (const auto& [name, t] : reg) {
            state.first.emplace_back(t->size(), Real(0));
            state.second.emplace_back(t->size(), Real(0));
        }
    }
    if (state.first.size() != reg.size()) fail(ErrorKind::Contract, "optimizer state does not match the registry");
    for (std::size_t k = 0; k < reg.size(); ++k) {
        const auto& [name, t] = reg[k];
        if (t->has_grad() && t->grad.size() != t->size()) fail(ErrorKind::Contract, "gradient shape mismatch for " + name);
        for (std::size_t i = 0; i < t->grad.size(); ++i) {
            if (std::isnan(static_cast<double>(t->grad[i]))) fail(ErrorKind::Training, "NaN gradient in parameter " + name);
        }
    }
    ++state.step;
    const double t_step = static_cast<double>(state.step);
    const Real b1 = static_cast<Real>(hyper.beta1), b2 = static_cast<Real>(hyper.beta2);
    const Real c1 = static_cast<Real>(1.0 - std::pow(hyper.beta1, t_step));
    const Real c2 = static_cast<Real>(1.0 - std::pow(hyper.beta2, t_step));
    const Real lr = static_cast<Real>(hyper.learning_rate), eps = static_cast<Real>(hyper.eps);
    for (std::size_t k = 0; k < reg.size(); ++k) {
        Tensor<Real>& t = *reg[k].second;
        auto& m = state.first[k];
        auto& v = state.second[k];
        for (std::size_t i = 0; i < t.size(); ++i) {
            const Real g = t.has_grad() ? t.grad[i] : Real(0);
            m[i] = b1 * m[i] + (Real(1) - b1) * g;
            v[i] = b2 * v[i] + (Real(1) - b2) * g * g;
            const Real mhat = m[i] / c1;
            const Real vhat = v[i] / c2;
            t.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// ---------------------------------------------------------------------------

template <typename Real>
void predict(RiaParams<Real>& params, const RiaConfig& cfg, const RequestIds& ids, std::vector<double>& listwise,
             std::vector<double>& pointwise) {
    Graph<Real> g;
    auto out = ria_forward(g, params, cfg, ids);
    for (auto p : g.value(out.listwise.probs)) listwise.push_back(static_cast<double>(p));
    auto pw = g.value(out.ucdt.probs);
    for (auto row : ids.target_rows) pointwise.push_back(static_cast<double>(pw[row]));
}

template <typename Real>
EvalResult evaluate(RiaParams<Real>& params, const RiaConfig& cfg, std::span<const RequestIds> data) {
    std::vector<double> lw, pw;
    std::vector<int> labels;
    std::vector<std::size_t> groups;
    double l1 = 0, l2 = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto& ids = data[r];
        Graph<Real> g;
        auto out = ria_forward(g, params, cfg, ids);
        auto terms = ria_loss(g, cfg, out, ids);
        l1 += static_cast<double>(g.scalar(terms.l1));
        l2 += static_cast<double>(g.scalar(terms.l2));
        for (auto p : g.value(out.listwise.probs)) lw.push_back(static_cast<double>(p));
        auto probs = g.value(out.ucdt.probs);
        for (std::size_t o = 0; o < ids.target_rows.size(); ++o) {
            pw.push_back(static_cast<double>(probs[ids.target_rows[o]]));
            labels.push_back(ids.target_clicks[o]);
            groups.push_back(r);
        }
    }
    EvalResult res;
    res.listwise = evaluate_scores(lw, labels, groups, cfg.pooling);
    res.pointwise = evaluate_scores(pw, labels, groups, cfg.pooling);
    const double n = static_cast<double>(std::max<std::size_t>(data.size(), 1));
    res.l1 = l1 / n;
    res.l2 = l2 / n;
    res.loss = joint_loss(res.l1, res.l2, cfg.w1, cfg.w2);
    return res;
}

std::vector<std::size_t> batch_order(std::size_t count, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + epoch + 1);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

std::pair<std::vector<ImpressionRecord>, std::vector<ImpressionRecord>> split_by_request(
    const std::vector<ImpressionRecord>& records) {
    std::pair<std::vector<ImpressionRecord>, std::vector<ImpressionRecord>> out;
    for (const auto& r : records) {
        (fnv1a64(r.request_id) % 10 == 0 ? out.second : out.first).push_back(r);
    }
    return out;
}

std::vector<RequestIds> encode_all(std::span<const ImpressionRecord> records, const RiaConfig& cfg) {
    std::vector<RequestIds> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(encode_request(r, cfg));
    return out;
}

template <typename Real>
TrainResult<Real> train(std::span<const RequestIds> train_set, std::span<const RequestIds> val_set,
                        const RiaConfig& cfg, const BatchHook& hook) {
    if (train_set.empty()) fail(ErrorKind::Contract, "training set is empty");
    if (val_set.empty()) fail(ErrorKind::Contract, "validation set is empty");

    TrainResult<Real> result{RiaParams<Real>::init(cfg), {}, {}, 0, false, {}};
    RiaParams<Real> params = result.params;
    auto reg = registry(params);
    AdamState<Real> state;
    const AdamHyper hyper = AdamHyper::from(cfg);

    result.initial_val = evaluate(params, cfg, val_set);
    double best = result.initial_val.listwise.logloss;
    std::size_t stale = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = batch_order(train_set.size(), cfg.seed, epoch);
        std::vector<double> seen_scores;
        std::vector<int> seen_labels;
        double loss_sum = 0;
        try {
            for (std::size_t begin = 0, batch = 0; begin < order.size(); begin += cfg.batch_size, ++batch) {
                const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
                const Real inv = Real(1) / static_cast<Real>(end - begin);
                params.zero_grad();
                double l1 = 0, l2 = 0;
                for (std::size_t i = begin; i < end; ++i) {
                    const auto& ids = train_set[order[i]];
                    Graph<Real> g;
                    auto out = ria_forward(g, params, cfg, ids);
                    auto terms = ria_loss(g, cfg, out, ids);
                    l1 += static_cast<double>(g.scalar(terms.l1));
                    l2 += static_cast<double>(g.scalar(terms.l2));
                    for (auto p : g.value(out.listwise.probs)) seen_scores.push_back(static_cast<double>(p));
                    seen_labels.insert(seen_labels.end(), ids.target_clicks.begin(), ids.target_clicks.end());
                    g.backward(g.scale(terms.total, inv));
                }
                const double count = static_cast<double>(end - begin);
                BatchStats stats{epoch, batch, l1 / count, l2 / count, 0.0};
                stats.loss = joint_loss(stats.l1, stats.l2, cfg.w1, cfg.w2);
                loss_sum += stats.loss * count;
                if (hook) hook(stats);
                adam_step(reg, state, hyper);
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Training) throw;
            result.diverged = true;
            result.error = "epoch " + std::to_string(epoch) + ": " + e.what();
            return result;
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_sum / static_cast<double>(train_set.size());
        log.train_listwise = evaluate_scores(seen_scores, seen_labels, {}, AucPooling::Global);
        log.val = evaluate(params, cfg, val_set);
        result.epochs.push_back(log);
        if (log.val.listwise.logloss < best) {
            best = log.val.listwise.logloss;
            result.params = params;
            result.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= cfg.patience && cfg.patience > 0) {
            break;
        }
    }
    return result;
}

std::string format_epoch(const EpochLog& log) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "epoch=%zu train_loss=%.9f train_auc=%.9f val_auc=%.9f val_logloss=%.9f val_pointwise_auc=%.9f "
                  "val_l1=%.9f val_l2=%.9f val_loss=%.9f\n",
                  log.epoch, log.train_loss, log.train_listwise.auc, log.val.listwise.auc, log.val.listwise.logloss,
                  log.val.pointwise.auc, log.val.l1, log.val.l2, log.val.loss);
    return buf;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'R', 'I', 'A', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

    template <typename T>
    T get() {
        T value;
        std::memcpy(&value, take(sizeof(T)), sizeof(T));
        return value;
    }
    std::string str(std::size_t n) { return std::string(take(n), n); }
    const char* take(std::size_t n) {
        if (pos_ + n > bytes_.size()) fail(ErrorKind::Parse, "truncated checkpoint " + path_ + " at byte " + std::to_string(pos_));
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::string bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

Reader open_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open checkpoint " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    Reader r(ss.str(), path);
    if (std::memcmp(r.take(8), kMagic, 8) != 0) fail(ErrorKind::Parse, path + " is not a checkpoint");
    if (r.get<std::uint32_t>() != kCheckpointVersion) fail(ErrorKind::Parse, "unsupported checkpoint version in " + path);
    return r;
}

}  // namespace

template <typename Real>
std::string checkpoint_bytes(RiaParams<Real>& params, const RiaConfig& cfg) {
    std::string out(kMagic, 8);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, sizeof(Real));
    const std::string echo = config_echo(cfg);
    put<std::uint64_t>(out, echo.size());
    out += echo;
    auto reg = registry(params);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(reg.size()));
    for (const auto& [name, t] : reg) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t->shape.size()));
        for (auto e : t->shape) put<std::uint64_t>(out, e);
        out.append(reinterpret_cast<const char*>(t->data.data()), t->data.size() * sizeof(Real));
    }
    return out;
}

template <typename Real>
void save_checkpoint(const std::string& path, RiaParams<Real>& params, const RiaConfig& cfg) {
    const auto bytes = checkpoint_bytes(params, cfg);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Io, "write failed for " + path);
}

RiaConfig checkpoint_config(const std::string& path) {
    Reader r = open_checkpoint(path);
    r.get<std::uint32_t>();
    const auto len = r.get<std::uint64_t>();
    return ria_config_from(ConfigMap::parse(r.str(len)));
}

template <typename Real>
RiaParams<Real> load_checkpoint(const std::string& path, RiaConfig* cfg_out) {
    Reader r = open_checkpoint(path);
    const auto width = r.get<std::uint32_t>();
    if (width != sizeof(Real)) {
        fail(ErrorKind::Parse, path + " stores " + std::to_string(width * 8) + "-bit scalars, expected " +
                                   std::to_string(sizeof(Real) * 8));
    }
    const auto len = r.get<std::uint64_t>();
    const RiaConfig cfg = ria_config_from(ConfigMap::parse(r.str(len)));
    auto params = RiaParams<Real>::init(cfg);
    auto reg = registry(params);
    const auto count = r.get<std::uint32_t>();
    if (count != reg.size()) fail(ErrorKind::Parse, path + ": parameter count " + std::to_string(count) + " vs " + std::to_string(reg.size()));
    for (const auto& [name, t] : reg) {
        const auto stored_name = r.str(r.get<std::uint32_t>());
        if (stored_name != name) fail(ErrorKind::Parse, path + ": expected parameter " + name + ", found " + stored_name);
        Shape shape(r.get<std::uint32_t>());
        for (auto& e : shape) e = r.get<std::uint64_t>();
        if (shape != t->shape) fail(ErrorKind::Parse, path + ": " + name + " has shape " + shape_string(shape));
        std::memcpy(t->data.data(), r.take(t->size() * sizeof(Real)), t->size() * sizeof(Real));
    }
    if (!r.done()) fail(ErrorKind::Parse, path + ": trailing bytes");
    if (cfg_out) *cfg_out = cfg;
    return params;
}

// ---------------------------------------------------------------------------

double median(std::vector<double> values) {
    if (values.empty()) return std::nan("");
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

template <typename Real>
std::vector<SweepPoint> depth_sweep(std::span<const ImpressionRecord> train_records,
                                    std::span<const ImpressionRecord> val_records, const RiaConfig& cfg,
                                    std::span<const std::size_t> depths, std::span<const std::uint64_t> seeds) {
    if (depths.empty()) fail(ErrorKind::Contract, "depth sweep needs at least one depth");
    const auto train_ids = encode_all(train_records, cfg);
    const auto val_ids = encode_all(val_records, cfg);
    std::vector<SweepPoint> points;
    for (auto depth : depths) {
        SweepPoint point;
        point.depth = depth;
        for (auto seed : seeds) {
            RiaConfig run = cfg;
            run.depth = depth;
            run.seed = seed;
            try {
                auto res = train<Real>(train_ids, val_ids, run);
                if (res.diverged) throw Error(ErrorKind::Training, res.error);
                auto eval = evaluate(res.params, run, val_ids);
                point.seeds.push_back(seed);
                point.listwise_auc.push_back(eval.listwise.auc);
                point.pointwise_auc.push_back(eval.pointwise.auc);
            } catch (const Error& e) {
                point.error += "seed " + std::to_string(seed) + ": " + e.what() + "; ";
            }
        }
        point.median_listwise = median(point.listwise_auc);
        point.median_pointwise = median(point.pointwise_auc);
        points.push_back(std::move(point));
    }
    return points;
}

std::string sweep_table(const std::vector<SweepPoint>& points) {
    std::ostringstream out;
    char buf[256];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof buf, "depth=%zu median_listwise_auc=%.9f median_pointwise_auc=%.9f runs=%zu", p.depth,
                      p.median_listwise, p.median_pointwise, p.listwise_auc.size());
        out << buf;
        for (std::size_t i = 0; i < p.listwise_auc.size(); ++i) {
            std::snprintf(buf, sizeof buf, " seed%llu=%.9f", static_cast<unsigned long long>(p.seeds[i]), p.listwise_auc[i]);
            out << buf;
        }
        if (!p.error.empty()) out << " error=\"" << p.error << "\"";
        out << "\n";
    }
    return out.str();
}

std::string sweep_svg(const std::vector<SweepPoint>& points) {
    constexpr double W = 480, H = 320, L = 60, R = 20, T = 20, B = 50;
    double lo = 1, hi = 0;
    std::size_t dmax = 1;
    for (const auto& p : points) {
        for (auto a : p.listwise_auc) lo = std::min(lo, a), hi = std::max(hi, a);
        dmax = std::max(dmax, p.depth);
    }
    if (lo > hi) lo = 0.5, hi = 1.0;
    if (hi - lo < 1e-4) lo -= 5e-5, hi += 5e-5;
    auto x = [&](double d) { return L + (W - L - R) * (dmax == 1 ? 0.5 : (d - 1) / static_cast<double>(dmax - 1)); };
    auto y = [&](double a) { return H - B - (H - T - B) * (a - lo) / (hi - lo); };
    std::ostringstream s;
    s.precision(6);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">LMH layers</text>\n";
    s << "<text x=\"14\" y=\"" << H / 2 << "\" transform=\"rotate(-90 14 " << H / 2 << ")\" text-anchor=\"middle\">validation AUC</text>\n";
    s << "<text x=\"" << L - 4 << "\" y=\"" << y(lo) << "\" text-anchor=\"end\" font-size=\"10\">" << lo << "</text>\n";
    s << "<text x=\"" << L - 4 << "\" y=\"" << y(hi) << "\" text-anchor=\"end\" font-size=\"10\">" << hi << "</text>\n";
    std::string path;
    for (const auto& p : points) {
        s << "<text x=\"" << x(static_cast<double>(p.depth)) << "\" y=\"" << H - B + 14
          << "\" text-anchor=\"middle\" font-size=\"10\">" << p.depth << "</text>\n";
        for (auto a : p.listwise_auc) {
            s << "<circle cx=\"" << x(static_cast<double>(p.depth)) << "\" cy=\"" << y(a) << "\" r=\"2\" fill=\"gray\"/>\n";
        }
        if (!p.listwise_auc.empty()) {
            path += (path.empty() ? "M" : " L") + std::to_string(x(static_cast<double>(p.depth))) + " " +
                    std::to_string(y(p.median_listwise));
        }
    }
    if (!path.empty()) s << "<path d=\"" << path << "\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n";
    s << "</svg>\n";
    return s.str();
}

#define RIA_INSTANTIATE_TRAIN(Real)                                                                            \
    template Registry<Real> registry<Real>(RiaParams<Real>&);                                                  \
    template void adam_step<Real>(const Registry<Real>&, AdamState<Real>&, const AdamHyper&);                  \
    template void predict<Real>(RiaParams<Real>&, const RiaConfig&, const RequestIds&, std::vector<double>&,   \
                                std::vector<double>&);                                                         \
    template EvalResult evaluate<Real>(RiaParams<Real>&, const RiaConfig&, std::span<const RequestIds>);      \
    template TrainResult<Real> train<Real>(std::span<const RequestIds>, std::span<const RequestIds>,           \
                                           const RiaConfig&, const BatchHook&);                                \
    template std::string checkpoint_bytes<Real>(RiaParams<Real>&, const RiaConfig&);                           \
    template void save_checkpoint<Real>(const std::string&, RiaParams<Real>&, const RiaConfig&);               \
    template RiaParams<Real> load_checkpoint<Real>(const std::string&, RiaConfig*);                            \
    template std::vector<SweepPoint> depth_sweep<Real>(std::span<const ImpressionRecord>,                      \
                                                       std::span<const ImpressionRecord>, const RiaConfig&,    \
                                                       std::span<const std::size_t>, std::span<const std::uint64_t>);

RIA_INSTANTIATE_TRAIN(float)
RIA_INSTANTIATE_TRAIN(double)

}  // namespace ria
