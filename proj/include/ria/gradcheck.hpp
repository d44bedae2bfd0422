#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ria/config.hpp"
#include "ria/data.hpp"

namespace ria {

struct GradProbe {
    std::string param;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct GradcheckOptions {
    std::size_t probes = 200;
    std::uint64_t seed = 1;
    double step = 1e-3;
    double perturb = 0.2;  // uniform jitter added to every parameter so no path is inert
    double floor = 1e-8;   // denominator floor for near-zero gradients
};

struct GradcheckReport {
    std::vector<GradProbe> probes;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::size_t scalar_params = 0;
    double loss = 0.0;
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

/// A record from a small synthetic log that carries a full history.
ImpressionRecord gradcheck_record(const RiaConfig& cfg, std::uint64_t seed);

/// Five-point central differences of the joint loss in 64-bit against reverse mode,
/// on `probes` parameter scalars drawn uniformly over the whole registry.
GradcheckReport gradcheck_joint_loss(const RiaConfig& cfg, const ImpressionRecord& record,
                                     const GradcheckOptions& options);

std::string format_gradcheck(const GradcheckReport& report);

}  // namespace ria
