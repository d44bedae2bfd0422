#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ria/data.hpp"

namespace ria {

enum class Precision { F32, F64 };
enum class AucPooling { Global, PerRequest };

struct RiaConfig {
    // widths
    std::size_t d = 8;
    std::size_t p_pos = 8;
    std::size_t d_t = 0;  // 0 -> d
    // sequence lengths
    std::size_t t = 6;
    std::size_t n = 5;
    std::size_t m = 3;
    std::size_t l = 2;
    std::size_t depth = 2;  // LMH layers
    std::size_t ucdt_depth = 1;
    // feature vocabularies
    std::size_t n_users = 200;
    std::size_t n_items = 300;
    std::size_t n_cats = 12;
    // knobs
    std::size_t heads = 1;
    bool ta_normalize = true;
    bool click_markers = true;
    bool history_clicked_only = false;
    bool l1_impute_negatives = false;
    bool zero_init_heads = false;
    double w1 = 1.0;
    double w2 = 1.0;
    // optimizer / loop
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 32;
    std::size_t epochs = 3;
    std::size_t patience = 2;
    std::uint64_t seed = 1;
    Precision precision = Precision::F32;
    AucPooling pooling = AucPooling::Global;

    std::size_t d_prime() const { return d + p_pos; }
    std::size_t adaptor_width() const { return d_t == 0 ? d : d_t; }
    std::size_t lmh_width() const { return adaptor_width() + d_prime(); }
    /// Widths of the candidate "cat" / context "user" half and the shared item table.
    std::size_t half_width() const { return d / 2; }
    std::size_t item_width() const { return d - d / 2; }

    void validate() const;
};

/// Flat `key = value` configuration. `#` starts a comment.
class ConfigMap {
public:
    static ConfigMap parse(const std::string& text);
    static ConfigMap load(const std::string& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    /// Applies `key=value`.
    void set_assignment(const std::string& assignment);
    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::string& get(const std::string& key) const;

    /// Sorted `key=value` lines; the digest input.
    std::string canonical() const;
    std::string digest() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

/// Every key either config reader understands.
const std::vector<std::string>& known_config_keys();

/// Rejects unknown keys, then reads the recognized ones over the defaults.
RiaConfig ria_config_from(const ConfigMap& map);
GeneratorConfig generator_config_from(const ConfigMap& map);

/// Writes every RiaConfig field; `ria_config_from(parse(...))` inverts it.
std::string config_echo(const RiaConfig& cfg);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace ria
