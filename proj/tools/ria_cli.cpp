#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ria/cache.hpp"
#include "ria/errors.hpp"
#include "ria/gradcheck.hpp"
#include "ria/selection.hpp"
#include "ria/train.hpp"

#ifndef RIA_CODE_VERSION
#define RIA_CODE_VERSION "unknown"
#endif

using namespace ria;
using json = nlohmann::ordered_json;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + path);
    out << text;
    if (!out) fail(ErrorKind::Io, "write failed for " + path);
}

struct Run {
    std::string command;
    std::string config_path;
    std::vector<std::string> overrides;
    std::string report_path;
    std::string manifest_path;
    std::vector<std::pair<std::string, std::string>> inputs, outputs;
    ConfigMap config;
    std::uint64_t seed = 0;
    std::string started;

    ConfigMap load_config() {
        config = config_path.empty() ? ConfigMap{} : ConfigMap::load(config_path);
        for (const auto& a : overrides) config.set_assignment(a);
        if (!config_path.empty()) inputs.emplace_back("config", config_path);
        return config;
    }

    void report(const std::string& text) {
        std::cout << text;
        if (!report_path.empty()) {
            write_file(report_path, text);
            outputs.emplace_back("report", report_path);
        }
    }

    std::string manifest_target() const {
        if (!manifest_path.empty()) return manifest_path;
        for (const auto& [role, path] : outputs) {
            if (role != "report") return path + ".manifest.json";
        }
        if (!report_path.empty()) return report_path + ".manifest.json";
        return "ria-" + command + ".manifest.json";
    }

    void write_manifest(const std::string& status, const json& error = nullptr) const {
        json m;
        m["command"] = command;
        m["config_digest"] = config.digest();
        m["config"] = config.canonical();
        m["seed"] = seed;
        json in = json::object(), out = json::object();
        for (const auto& [role, path] : inputs) in[role] = path;
        for (const auto& [role, path] : outputs) out[role] = path;
        m["inputs"] = in;
        m["outputs"] = out;
        m["code_version"] = RIA_CODE_VERSION;
        m["started_at"] = started;
        m["finished_at"] = utc_now();
        m["status"] = status;
        if (!error.is_null()) m["error"] = error;
        write_file(manifest_target(), m.dump(2) + "\n");
    }
};

template <typename F>
auto with_precision(Precision p, F&& f) {
    if (p == Precision::F64) return f.template operator()<double>();
    return f.template operator()<float>();
}

std::vector<ImpressionRecord> load_log(Run& run, const std::string& path, const std::string& role = "data") {
    run.inputs.emplace_back(role, path);
    return load_impressions(path);
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(static_cast<T>(v));
        } catch (const std::exception&) {
            fail(ErrorKind::Config, std::string(what) + ": '" + item + "' is not a nonnegative integer");
        }
    }
    if (out.empty()) fail(ErrorKind::Config, std::string(what) + " is empty");
    return out;
}

// ---------------------------------------------------------------------------

void cmd_gen_data(Run& run, const std::string& out_path) {
    const auto gen = generator_config_from(run.load_config());
    run.seed = gen.noise_seed;
    std::size_t records = 0, impressions = 0, clicks = 0;
    std::vector<ImpressionRecord> log;
    generate_synthetic(gen, [&](ImpressionRecord&& r) {
        ++records;
        for (const auto& s : r.target) impressions++, clicks += s.click;
        log.push_back(std::move(r));
    });
    write_impressions(out_path, log);
    run.outputs.emplace_back("data", out_path);
    char buf[256];
    std::snprintf(buf, sizeof buf, "records=%zu\nimpressions=%zu\nclicks=%zu\nctr=%.9f\n", records, impressions, clicks,
                  impressions ? static_cast<double>(clicks) / static_cast<double>(impressions) : 0.0);
    run.report(buf);
}

void cmd_train(Run& run, const std::string& data, const std::string& val_data, const std::string& checkpoint) {
    const auto cfg = ria_config_from(run.load_config());
    cfg.validate();
    run.seed = cfg.seed;
    auto records = load_log(run, data);
    std::vector<ImpressionRecord> train_records, val_records;
    if (val_data.empty()) {
        std::tie(train_records, val_records) = split_by_request(records);
    } else {
        train_records = std::move(records);
        val_records = load_log(run, val_data, "val_data");
    }
    const auto train_ids = encode_all(train_records, cfg);
    const auto val_ids = encode_all(val_records, cfg);
    with_precision(cfg.precision, [&]<typename Real>() {
        auto res = train<Real>(train_ids, val_ids, cfg);
        std::string text = "train_requests=" + std::to_string(train_ids.size()) +
                           "\nval_requests=" + std::to_string(val_ids.size()) + "\n";
        text += format_report(res.initial_val.listwise, "initial_val_");
        for (const auto& e : res.epochs) text += format_epoch(e);
        if (res.diverged) fail(ErrorKind::Training, res.error);
        text += "best_epoch=" + std::to_string(res.best_epoch) + "\n";
        auto best = evaluate(res.params, cfg, val_ids);
        text += format_report(best.listwise, "val_");
        text += format_report(best.pointwise, "val_pointwise_");
        save_checkpoint(checkpoint, res.params, cfg);
        run.outputs.emplace_back("checkpoint", checkpoint);
        run.report(text);
    });
}

void cmd_eval(Run& run, const std::string& checkpoint, const std::string& data, const std::string& pooling) {
    run.load_config();
    RiaConfig cfg = checkpoint_config(checkpoint);
    run.inputs.emplace_back("checkpoint", checkpoint);
    if (pooling == "per_request") cfg.pooling = AucPooling::PerRequest;
    else if (pooling == "global") cfg.pooling = AucPooling::Global;
    else if (!pooling.empty()) fail(ErrorKind::Config, "pooling must be global or per_request");
    run.seed = cfg.seed;
    const auto ids = encode_all(load_log(run, data), cfg);
    with_precision(cfg.precision, [&]<typename Real>() {
        auto params = load_checkpoint<Real>(checkpoint);
        auto res = evaluate(params, cfg, ids);
        std::string text = format_report(res.listwise);
        text += format_report(res.pointwise, "pointwise_");
        char buf[128];
        std::snprintf(buf, sizeof buf, "l1=%.9f\nl2=%.9f\nloss=%.9f\n", res.l1, res.l2, res.loss);
        run.report(text + buf);
    });
}

void cmd_depth_sweep(Run& run, const std::string& data, const std::string& depths_text, const std::string& seeds_text,
                     const std::string& svg) {
    const auto cfg = ria_config_from(run.load_config());
    cfg.validate();
    const auto depths = parse_list<std::size_t>(depths_text, "depths");
    const auto seeds = parse_list<std::uint64_t>(seeds_text, "seeds");
    run.seed = seeds.front();
    auto [train_records, val_records] = split_by_request(load_log(run, data));
    auto points = with_precision(cfg.precision, [&]<typename Real>() {
        return depth_sweep<Real>(train_records, val_records, cfg, depths, seeds);
    });
    if (!svg.empty()) {
        write_file(svg, sweep_svg(points));
        run.outputs.emplace_back("svg", svg);
    }
    run.report(sweep_table(points));
}

void cmd_select(Run& run, const std::string& checkpoint, const std::string& data, const std::string& request,
                std::size_t budget, std::uint64_t seed) {
    run.load_config();
    const RiaConfig cfg = checkpoint_config(checkpoint);
    run.inputs.emplace_back("checkpoint", checkpoint);
    run.seed = seed;
    const auto records = load_log(run, data);
    const ImpressionRecord* record = records.empty() ? nullptr : &records.front();
    if (!request.empty()) {
        record = nullptr;
        for (const auto& r : records) {
            if (r.request_id == request) record = &r;
        }
    }
    if (!record) fail(ErrorKind::Lookup, "request '" + request + "' not in " + data);
    const auto ids = encode_request(*record, cfg);
    const auto lists = enumerate_target_lists(ids.candidate_ids.size(), cfg.m, budget, seed);
    with_precision(cfg.precision, [&]<typename Real>() {
        auto params = load_checkpoint<Real>(checkpoint);
        const auto best = select_best_list(params, cfg, ids, lists);
        std::ostringstream out;
        out << "request_id=" << ids.request_id << "\nlists=" << lists.size() << "\nitems=";
        for (std::size_t o = 0; o < best.items.size(); ++o) out << (o ? "," : "") << ids.candidate_ids[best.items[o]];
        char buf[64];
        out << "\npctr=";
        for (std::size_t o = 0; o < best.per_position_pctr.size(); ++o) {
            std::snprintf(buf, sizeof buf, "%s%.9f", o ? "," : "", best.per_position_pctr[o]);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "\nreward=%.9f\n", best.reward);
        out << buf;
        run.report(out.str());
    });
}

struct CacheSimFlags {
    std::string data, checkpoint, mode = "cached", dump;
    std::size_t requests = 100, budget = 24, capacity = 0;
    double ttl = 0.0, rerank_delay = 0.0;
    bool no_fallback = false, timings = false;
};

void cmd_cache_sim(Run& run, const CacheSimFlags& f) {
    RiaConfig cfg = ria_config_from(run.load_config());
    if (!f.checkpoint.empty()) {
        cfg = checkpoint_config(f.checkpoint);
        run.inputs.emplace_back("checkpoint", f.checkpoint);
    }
    cfg.validate();
    run.seed = cfg.seed;
    auto records = load_log(run, f.data);
    if (records.size() > f.requests) records.resize(f.requests);
    const auto ids = encode_all(records, cfg);
    PipelineOptions options;
    options.mode = parse_rerank_mode(f.mode);
    options.list_budget = f.budget;
    options.seed = cfg.seed;
    options.fallback = !f.no_fallback;
    options.rerank_delay = f.rerank_delay;
    with_precision(cfg.precision, [&]<typename Real>() {
        auto params = f.checkpoint.empty() ? RiaParams<Real>::init(cfg) : load_checkpoint<Real>(f.checkpoint);
        // A simulated clock keeps TTL behavior reproducible.
        double now = 0.0;
        ReprCache<Real> cache({f.ttl, f.capacity}, [&now] { return now; });
        auto result = simulate_pipeline<Real>(ids, params, cfg, cache, options, [&now](double dt) { now += dt; });
        if (!f.dump.empty()) {
            write_file(f.dump, cache.dump());
            run.outputs.emplace_back("dump", f.dump);
        }
        run.report(pipeline_report(result, f.timings));
    });
}

void cmd_sparsity(Run& run, const std::string& data, std::size_t k_max) {
    run.load_config();
    const auto log = load_log(run, data);
    if (log.empty()) fail(ErrorKind::Contract, data + " holds no records");
    if (k_max == 0) k_max = log.front().target.size();
    std::ostringstream out;
    char buf[160];
    for (const auto& row : sparsity_report(log, k_max)) {
        std::snprintf(buf, sizeof buf, "k=%zu distinct=%zu occurrences=%zu mean_count=%.9f\n", row.k, row.distinct_tuples,
                      row.occurrences, row.mean_count);
        out << buf;
    }
    run.report(out.str());
}

int cmd_gradcheck(Run& run, const GradcheckOptions& options, double tolerance) {
    const auto cfg = ria_config_from(run.load_config());
    cfg.validate();
    run.seed = options.seed;
    const auto report = gradcheck_joint_loss(cfg, gradcheck_record(cfg, options.seed), options);
    const bool pass = report.max_rel_err < tolerance;
    char buf[64];
    std::snprintf(buf, sizeof buf, "tolerance=%.1e\npass=%d\n", tolerance, pass ? 1 : 0);
    run.report(format_gradcheck(report) + buf);
    return pass ? 0 : 3;
}

json error_record(const std::string& kind, const std::string& message) {
    return json{{"kind", kind}, {"message", message}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RIA listwise CTR toolkit", "ria"};
    app.require_subcommand(1);
    Run run;
    run.started = utc_now();

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", run.config_path, "configuration file of key = value lines");
        sub->add_option("--set", run.overrides, "override one config key (key=value); repeatable, wins over --config");
        sub->add_option("--report", run.report_path, "also write the report to this file");
        sub->add_option("--manifest", run.manifest_path, "run manifest path (default: <artifact>.manifest.json)");
    };
    std::string data, val_data, out_path, checkpoint, pooling, request;
    std::string depths = "1,2,4,8", seeds = "1,2,3,4,5", svg;
    std::size_t budget = 5040, k_max = 0;
    std::uint64_t select_seed = 1;
    GradcheckOptions gc;
    double tolerance = 1e-5;
    CacheSimFlags sim;
    int status = 0;

    auto* gen = app.add_subcommand("gen-data", "write a synthetic impression log");
    common(gen);
    gen->add_option("--out", out_path, "output log (.jsonl, or .jsonl.gz for gzip)")->required();

    auto* tr = app.add_subcommand("train", "train a model and write its checkpoint");
    common(tr);
    tr->add_option("--data", data, "impression log")->required();
    tr->add_option("--val-data", val_data, "validation log (default: 10% request-hash split of --data)");
    tr->add_option("--checkpoint", checkpoint, "checkpoint to write")->required();

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a log");
    common(ev);
    ev->add_option("--checkpoint", checkpoint, "checkpoint to read")->required();
    ev->add_option("--data", data, "impression log")->required();
    ev->add_option("--pooling", pooling, "AUC pooling: global or per_request (default: from checkpoint)");

    auto* sw = app.add_subcommand("depth-sweep", "train across LMH depths and seeds");
    common(sw);
    sw->add_option("--data", data, "impression log")->required();
    sw->add_option("--depths", depths, "comma-separated LMH depths")->capture_default_str();
    sw->add_option("--seeds", seeds, "comma-separated model seeds")->capture_default_str();
    sw->add_option("--svg", svg, "write an AUC-vs-depth plot");

    auto* sel = app.add_subcommand("select", "pick the best target list for one request");
    common(sel);
    sel->add_option("--checkpoint", checkpoint, "checkpoint to read")->required();
    sel->add_option("--data", data, "impression log")->required();
    sel->add_option("--request", request, "request id (default: first record)");
    sel->add_option("--budget", budget, "maximum number of lists to score")->capture_default_str();
    sel->add_option("--seed", select_seed, "seed for sampled enumeration")->capture_default_str();

    auto* cs = app.add_subcommand("cache-sim", "simulate the rank and rerank stages with the embedding cache");
    common(cs);
    cs->add_option("--data", sim.data, "impression log")->required();
    cs->add_option("--checkpoint", sim.checkpoint, "checkpoint (default: freshly initialized model from config)");
    cs->add_option("--mode", sim.mode, "cached, recompute or verify")->capture_default_str();
    cs->add_option("--requests", sim.requests, "number of requests to simulate")->capture_default_str();
    cs->add_option("--budget", sim.budget, "lists scored per request")->capture_default_str();
    cs->add_option("--ttl", sim.ttl, "entry lifetime in simulated seconds (0: never expires)")->capture_default_str();
    cs->add_option("--capacity", sim.capacity, "maximum cache entries (0: unbounded)")->capture_default_str();
    cs->add_option("--rerank-delay", sim.rerank_delay, "simulated seconds between rank and rerank")->capture_default_str();
    cs->add_flag("--no-fallback", sim.no_fallback, "fail on a cache miss instead of recomputing");
    cs->add_flag("--timings", sim.timings, "append nondeterministic wall-clock lines");
    cs->add_option("--dump", sim.dump, "write the cache inspection dump");

    auto* sp = app.add_subcommand("sparsity", "co-exposure counts of k-tuples on logged pages");
    common(sp);
    sp->add_option("--data", data, "impression log")->required();
    sp->add_option("--k-max", k_max, "largest tuple size (default: page length)");

    auto* gcmd = app.add_subcommand("gradcheck", "finite-difference check of the joint loss in 64-bit");
    common(gcmd);
    gcmd->add_option("--probes", gc.probes, "parameter scalars to probe")->capture_default_str();
    gcmd->add_option("--seed", gc.seed, "probe and record seed")->capture_default_str();
    gcmd->add_option("--step", gc.step, "finite-difference step")->capture_default_str();
    gcmd->add_option("--tolerance", tolerance, "pass threshold on max_rel_err")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        std::cerr << json{{"error", error_record("usage", e.what())}}.dump() << "\n";
        return 2;
    }

    try {
        run.command = app.get_subcommands().front()->get_name();
        if (*gen) cmd_gen_data(run, out_path);
        else if (*tr) cmd_train(run, data, val_data, checkpoint);
        else if (*ev) cmd_eval(run, checkpoint, data, pooling);
        else if (*sw) cmd_depth_sweep(run, data, depths, seeds, svg);
        else if (*sel) cmd_select(run, checkpoint, data, request, budget, select_seed);
        else if (*cs) cmd_cache_sim(run, sim);
        else if (*sp) cmd_sparsity(run, data, k_max);
        else if (*gcmd) status = cmd_gradcheck(run, gc, tolerance);
        run.write_manifest(status == 0 ? "ok" : "failed");
    } catch (const Error& e) {
        const auto rec = error_record(std::string(to_string(e.kind())), e.what());
        std::cerr << json{{"error", rec}}.dump() << "\n";
        try {
            run.write_manifest("error", rec);
        } catch (const Error&) {
        }
        return 1;
    } catch (const std::exception& e) {
        const auto rec = error_record("internal", e.what());
        std::cerr << json{{"error", rec}}.dump() << "\n";
        return 1;
    }
    return status;
}
