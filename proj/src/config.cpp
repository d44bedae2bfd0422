#include "ria/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ria/errors.hpp"

namespace ria {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t as_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) fail(ErrorKind::Config, key + ": expected a count, got '" + v + "'");
    return out;
}

double as_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        fail(ErrorKind::Config, key + ": expected a number, got '" + v + "'");
    }
}

bool as_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(ErrorKind::Config, key + ": expected true/false, got '" + v + "'");
}

std::string fmt_real(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

const std::vector<std::string> kModelKeys = {
    "d", "p_pos", "d_t", "t", "n", "m", "l", "depth", "ucdt_depth", "n_users", "n_items", "n_cats", "heads",
    "ta_normalize", "click_markers", "history_clicked_only", "l1_impute_negatives", "zero_init_heads", "w1", "w2", "learning_rate",
    "beta1", "beta2", "adam_eps", "batch_size", "epochs", "patience", "seed", "precision", "pooling"};

const std::vector<std::string> kGeneratorKeys = {"n_requests", "gamma", "position_bias", "base_logit",
                                                 "cluster_spread", "user_scale", "noise_seed", "history_mode"};

void reject_unknown(const ConfigMap& map) {
    const auto& known = known_config_keys();
    for (const auto& [k, v] : map.values()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) fail(ErrorKind::Config, "unknown config key '" + k + "'");
    }
}

}  // namespace

void RiaConfig::validate() const {
    auto bad = [](const std::string& msg) { fail(ErrorKind::Config, msg); };
    if (d < 2) bad("d must be at least 2");
    if (p_pos == 0 || t == 0 || n == 0 || m == 0) bad("p_pos, t, n, m must be positive");
    if (m > n) bad("m must not exceed n");
    if (depth == 0) bad("depth (LMH layers) must be >= 1");
    if (ucdt_depth == 0) bad("ucdt_depth must be >= 1");
    if (n_users == 0 || n_items == 0 || n_cats == 0) bad("vocabulary sizes must be positive");
    if (heads == 0 || d_prime() % heads != 0) bad("heads must divide d + p_pos");
    if (batch_size == 0 || epochs == 0) bad("batch_size and epochs must be positive");
    if (!(learning_rate > 0)) bad("learning_rate must be positive");
}

ConfigMap ConfigMap::parse(const std::string& text) {
    ConfigMap map;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail(ErrorKind::Config, "config line " + std::to_string(line_no) + ": expected key = value");
        }
        map.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return map;
}

ConfigMap ConfigMap::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void ConfigMap::set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Config, "override '" + assignment + "' is not key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& ConfigMap::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorKind::Config, "missing config key '" + key + "'");
    return it->second;
}

std::string ConfigMap::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string ConfigMap::digest() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
    return buf;
}

const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> all = kModelKeys;
        all.insert(all.end(), kGeneratorKeys.begin(), kGeneratorKeys.end());
        return all;
    }();
    return keys;
}

RiaConfig ria_config_from(const ConfigMap& map) {
    reject_unknown(map);
    RiaConfig c;
    const auto& v = map.values();
    auto size_key = [&](const char* key, std::size_t& field) {
        if (auto it = v.find(key); it != v.end()) field = as_size(key, it->second);
    };
    auto real_key = [&](const char* key, double& field) {
        if (auto it = v.find(key); it != v.end()) field = as_real(key, it->second);
    };
    auto bool_key = [&](const char* key, bool& field) {
        if (auto it = v.find(key); it != v.end()) field = as_bool(key, it->second);
    };
    size_key("d", c.d);
    size_key("p_pos", c.p_pos);
    size_key("d_t", c.d_t);
    size_key("t", c.t);
    size_key("n", c.n);
    size_key("m", c.m);
    size_key("l", c.l);
    size_key("depth", c.depth);
    size_key("ucdt_depth", c.ucdt_depth);
    size_key("n_users", c.n_users);
    size_key("n_items", c.n_items);
    size_key("n_cats", c.n_cats);
    size_key("heads", c.heads);
    bool_key("ta_normalize", c.ta_normalize);
    bool_key("click_markers", c.click_markers);
    bool_key("history_clicked_only", c.history_clicked_only);
    bool_key("l1_impute_negatives", c.l1_impute_negatives);
    bool_key("zero_init_heads", c.zero_init_heads);
    real_key("w1", c.w1);
    real_key("w2", c.w2);
    real_key("learning_rate", c.learning_rate);
    real_key("beta1", c.beta1);
    real_key("beta2", c.beta2);
    real_key("adam_eps", c.adam_eps);
    size_key("batch_size", c.batch_size);
    size_key("epochs", c.epochs);
    size_key("patience", c.patience);
    if (auto it = v.find("seed"); it != v.end()) c.seed = as_size("seed", it->second);
    if (auto it = v.find("precision"); it != v.end()) {
        if (it->second == "32") c.precision = Precision::F32;
        else if (it->second == "64") c.precision = Precision::F64;
        else fail(ErrorKind::Config, "precision: expected 32 or 64, got '" + it->second + "'");
    }
    if (auto it = v.find("pooling"); it != v.end()) {
        if (it->second == "global") c.pooling = AucPooling::Global;
        else if (it->second == "per_request") c.pooling = AucPooling::PerRequest;
        else fail(ErrorKind::Config, "pooling: expected global or per_request, got '" + it->second + "'");
    }
    c.validate();
    return c;
}

GeneratorConfig generator_config_from(const ConfigMap& map) {
    reject_unknown(map);
    GeneratorConfig g;
    const auto& v = map.values();
    auto size_key = [&](const char* key, std::size_t& field) {
        if (auto it = v.find(key); it != v.end()) field = as_size(key, it->second);
    };
    auto real_key = [&](const char* key, double& field) {
        if (auto it = v.find(key); it != v.end()) field = as_real(key, it->second);
    };
    size_key("n_users", g.n_users);
    size_key("n_items", g.n_items);
    size_key("n_cats", g.n_cats);
    size_key("n_requests", g.n_requests);
    size_key("m", g.m);
    size_key("n", g.n);
    size_key("l", g.l);
    size_key("t", g.t);
    real_key("gamma", g.gamma);
    real_key("base_logit", g.base_logit);
    real_key("cluster_spread", g.cluster_spread);
    real_key("user_scale", g.user_scale);
    if (auto it = v.find("noise_seed"); it != v.end()) g.noise_seed = as_size("noise_seed", it->second);
    if (auto it = v.find("position_bias"); it != v.end()) {
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) g.position_bias.push_back(as_real("position_bias", trim(item)));
    }
    if (auto it = v.find("history_mode"); it != v.end()) {
        if (it->second == "all") g.history_mode = HistoryMode::AllPages;
        else if (it->second == "clicked") g.history_mode = HistoryMode::ClickedPages;
        else fail(ErrorKind::Config, "history_mode: expected all or clicked, got '" + it->second + "'");
    }
    g.validate();
    return g;
}

std::string config_echo(const RiaConfig& c) {
    std::ostringstream o;
    o << "d=" << c.d << "\np_pos=" << c.p_pos << "\nd_t=" << c.d_t << "\nt=" << c.t << "\nn=" << c.n
      << "\nm=" << c.m << "\nl=" << c.l << "\ndepth=" << c.depth << "\nucdt_depth=" << c.ucdt_depth
      << "\nn_users=" << c.n_users << "\nn_items=" << c.n_items << "\nn_cats=" << c.n_cats
      << "\nheads=" << c.heads << "\nta_normalize=" << (c.ta_normalize ? "true" : "false")
      << "\nclick_markers=" << (c.click_markers ? "true" : "false")
      << "\nhistory_clicked_only=" << (c.history_clicked_only ? "true" : "false")
      << "\nl1_impute_negatives=" << (c.l1_impute_negatives ? "true" : "false")
      << "\nzero_init_heads=" << (c.zero_init_heads ? "true" : "false") << "\nw1=" << fmt_real(c.w1)
      << "\nw2=" << fmt_real(c.w2) << "\nlearning_rate=" << fmt_real(c.learning_rate)
      << "\nbeta1=" << fmt_real(c.beta1) << "\nbeta2=" << fmt_real(c.beta2) << "\nadam_eps=" << fmt_real(c.adam_eps)
      << "\nbatch_size=" << c.batch_size << "\nepochs=" << c.epochs << "\npatience=" << c.patience
      << "\nseed=" << c.seed << "\nprecision=" << (c.precision == Precision::F32 ? "32" : "64")
      << "\npooling=" << (c.pooling == AucPooling::Global ? "global" : "per_request") << "\n";
    return o.str();
}

}  // namespace ria
