#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ria/config.hpp"
#include "ria/data.hpp"
#include "ria/metrics.hpp"
#include "ria/model.hpp"

namespace ria {

template <typename Real>
using Registry = std::vector<std::pair<std::string, Tensor<Real>*>>;

template <typename Real>
Registry<Real> registry(RiaParams<Real>& params);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamHyper from(const RiaConfig& cfg) { return {cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps}; }
};

template <typename Real>
struct AdamState {
    std::vector<std::vector<Real>> first, second;
    std::uint64_t step = 0;
};

/// Bias-corrected adaptive-moment update over `reg`, in registry order. A
/// tensor with no gradient buffer is treated as having a zero gradient.
/// Throws Training naming the parameter when a gradient is NaN.
template <typename Real>
void adam_step(const Registry<Real>& reg, AdamState<Real>& state, const AdamHyper& hyper);

// ---------------------------------------------------------------------------
// Evaluation and training
// ---------------------------------------------------------------------------

struct EvalResult {
    EvalReport listwise;
    EvalReport pointwise;  // pointwise head on the exposed positions
    double l1 = 0.0;
    double l2 = 0.0;
    double loss = 0.0;
};

template <typename Real>
EvalResult evaluate(RiaParams<Real>& params, const RiaConfig& cfg, std::span<const RequestIds> data);

/// Listwise and pointwise probabilities for every exposed position.
template <typename Real>
void predict(RiaParams<Real>& params, const RiaConfig& cfg, const RequestIds& ids, std::vector<double>& listwise,
             std::vector<double>& pointwise);

struct BatchStats {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    double l1 = 0.0;
    double l2 = 0.0;
    double loss = 0.0;  // w1 * l1 + w2 * l2
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    EvalReport train_listwise;
    EvalResult val;
};

template <typename Real>
struct TrainResult {
    RiaParams<Real> params;  // best validation epoch
    EvalResult initial_val;
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;
    bool diverged = false;
    std::string error;
};

using BatchHook = std::function<void(const BatchStats&)>;

/// Record order for one epoch; a pure function of (count, seed, epoch).
std::vector<std::size_t> batch_order(std::size_t count, std::uint64_t seed, std::size_t epoch);

/// 90/10 split on the request-id hash; returns (train, validation).
std::pair<std::vector<ImpressionRecord>, std::vector<ImpressionRecord>> split_by_request(
    const std::vector<ImpressionRecord>& records);

std::vector<RequestIds> encode_all(std::span<const ImpressionRecord> records, const RiaConfig& cfg);

template <typename Real>
TrainResult<Real> train(std::span<const RequestIds> train_set, std::span<const RequestIds> val_set,
                        const RiaConfig& cfg, const BatchHook& hook = {});

std::string format_epoch(const EpochLog& log);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Byte layout (little-endian):
///   "RIACKPT1" | u32 version | u32 bytes-per-scalar | u64 len | config echo
///   | u32 count | count x (u32 len | name | u32 rank | rank x u64 | data)
template <typename Real>
std::string checkpoint_bytes(RiaParams<Real>& params, const RiaConfig& cfg);
template <typename Real>
void save_checkpoint(const std::string& path, RiaParams<Real>& params, const RiaConfig& cfg);

/// Reads only the config echo (used to pick the precision before loading).
RiaConfig checkpoint_config(const std::string& path);
template <typename Real>
RiaParams<Real> load_checkpoint(const std::string& path, RiaConfig* cfg_out = nullptr);

// ---------------------------------------------------------------------------
// Depth sweep
// ---------------------------------------------------------------------------

struct SweepPoint {
    std::size_t depth = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<double> listwise_auc;   // per seed
    std::vector<double> pointwise_auc;  // per seed
    double median_listwise = 0.0;
    double median_pointwise = 0.0;
    std::string error;  // non-empty when a run failed; the sweep continues
};

double median(std::vector<double> values);

template <typename Real>
std::vector<SweepPoint> depth_sweep(std::span<const ImpressionRecord> train_records,
                                    std::span<const ImpressionRecord> val_records, const RiaConfig& cfg,
                                    std::span<const std::size_t> depths, std::span<const std::uint64_t> seeds);

std::string sweep_table(const std::vector<SweepPoint>& points);
std::string sweep_svg(const std::vector<SweepPoint>& points);

}  // namespace ria
