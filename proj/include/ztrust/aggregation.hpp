// Global-model aggregation: FedAvg baseline, the coordinate-median expected
// update, update-space anomaly screening, and the robust trust-weighted
// aggregator with its discard set.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "ztrust/model.hpp"

namespace ztrust {

enum class EpsilonMode { absolute, robust_z };

struct RobustParams {
    EpsilonMode epsilon_mode = EpsilonMode::robust_z;
    double epsilon = 1.0;  // absolute mode
    double theta = 3.0;    // robust_z mode
    double trust_threshold = 0.25;
    bool trust_weighted = true;

    void validate() const {
        if (epsilon_mode == EpsilonMode::absolute && !(epsilon > 0.0)) {
            throw std::invalid_argument("RobustParams: epsilon must be > 0");
        }
        if (epsilon_mode == EpsilonMode::robust_z && !(theta > 0.0)) {
            throw std::invalid_argument("RobustParams: theta must be > 0");
        }
        if (!(trust_threshold >= 0.0 && trust_threshold <= 1.0)) {
            throw std::invalid_argument("RobustParams: trust_threshold must be in [0, 1]");
        }
    }
};

namespace detail {

// Median with the even-count mean-of-middles convention. Selection-based;
// the test oracle uses a full sort instead.
inline double median_inplace(std::vector<double>& values) {
    const std::size_t n = values.size();
    const std::size_t mid = n / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    double result = values[mid];
    if (n % 2 == 0) {
        std::nth_element(values.begin(), values.begin() + (mid - 1), values.begin() + mid);
        result = (result + values[mid - 1]) / 2.0;
    }
    return result;
}

inline void check_same_dim(std::span<const ParamVector> updates) {
    for (const auto& u : updates) {
        if (u.size() != updates.front().size()) {
            throw std::invalid_argument("aggregation: updates have mismatched dimensions");
        }
    }
}

inline double l2_distance(const ParamVector& a, const ParamVector& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

}  // namespace detail

inline double l2_norm(const ParamVector& v) {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    return std::sqrt(sum);
}

// Robust proxy for the expected update: coordinate-wise median of the round's
// verified updates.
inline ParamVector expected_update(std::span<const ParamVector> updates) {
    if (updates.empty()) throw std::invalid_argument("expected_update: no updates");
    detail::check_same_dim(updates);

    const std::size_t dim = updates.front().size();
    ParamVector center(dim);
    std::vector<double> column(updates.size());
    for (std::size_t d = 0; d < dim; ++d) {
        for (std::size_t i = 0; i < updates.size(); ++i) column[i] = updates[i][d];
        center[d] = detail::median_inplace(column);
    }
    return center;
}

struct ScreenResult {
    double distance = 0.0;
    bool flagged = false;
};

// Distance of each update to the expected update; flags by a fixed epsilon or
// by the median + theta * MAD rule (MAD scaled by 1.4826; if MAD == 0, flag
// strictly above median * (1 + 1e-9)).
inline std::vector<ScreenResult> screen_anomalies(std::span<const ParamVector> updates,
                                                  const RobustParams& params) {
    params.validate();
    if (updates.empty()) throw std::invalid_argument("screen_anomalies: no updates");
    if (params.epsilon_mode == EpsilonMode::robust_z && updates.size() < 2) {
        throw std::invalid_argument("screen_anomalies: robust_z mode needs >= 2 updates");
    }

    const ParamVector center = expected_update(updates);
    std::vector<ScreenResult> results(updates.size());
    for (std::size_t i = 0; i < updates.size(); ++i) {
        results[i].distance = detail::l2_distance(updates[i], center);
    }

    if (params.epsilon_mode == EpsilonMode::absolute) {
        for (auto& r : results) r.flagged = r.distance > params.epsilon;
        return results;
    }

    std::vector<double> distances(results.size());
    for (std::size_t i = 0; i < results.size(); ++i) distances[i] = results[i].distance;
    std::vector<double> scratch = distances;
    const double med = detail::median_inplace(scratch);
    for (std::size_t i = 0; i < distances.size(); ++i) scratch[i] = std::abs(distances[i] - med);
    const double mad = 1.4826 * detail::median_inplace(scratch);

    if (mad > 0.0) {
        const double threshold = med + params.theta * mad;
        for (auto& r : results) r.flagged = r.distance > threshold;
    } else {
        const double threshold = med * (1.0 + 1e-9);
        for (auto& r : results) r.flagged = r.distance > threshold;
    }
    return results;
}

inline ParamVector aggregate_fedavg(std::span<const ParamVector> updates,
                                    std::span<const double> weights) {
    if (updates.empty()) throw std::invalid_argument("aggregate_fedavg: no updates");
    if (weights.size() != updates.size()) {
        throw std::invalid_argument("aggregate_fedavg: weight count does not match updates");
    }
    detail::check_same_dim(updates);

    double total = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) throw std::invalid_argument("aggregate_fedavg: weights must be positive");
        total += w;
    }
    ParamVector out(updates.front().size(), 0.0);
    for (std::size_t i = 0; i < updates.size(); ++i) {
        for (std::size_t d = 0; d < out.size(); ++d) out[d] += weights[i] * updates[i][d];
    }
    for (double& v : out) v /= total;
    return out;
}

struct WeightedUpdate {
    std::int64_t device_id = 0;
    ParamVector update;
    double base_weight = 1.0;  // shard size
};

struct RobustAggregate {
    ParamVector update;
    std::vector<std::int64_t> discarded;
    bool degenerate = false;
};

// Discards screen-flagged updates and devices below the trust threshold, then
// combines survivors: trust-weighted mean (weight = trust * shard size) or
// coordinate median. Weights are scaled by the max surviving trust, which
// leaves the mean unchanged and makes uniform trust reduce to FedAvg
// bit-exactly. All-discarded rounds yield the zero update, marked degenerate.
inline RobustAggregate aggregate_robust(std::span<const WeightedUpdate> updates,
                                        const std::map<std::int64_t, double>& trust_map,
                                        const RobustParams& params) {
    params.validate();
    if (updates.empty()) throw std::invalid_argument("aggregate_robust: no updates");

    std::vector<ParamVector> raw(updates.size());
    for (std::size_t i = 0; i < updates.size(); ++i) raw[i] = updates[i].update;
    detail::check_same_dim(raw);

    std::vector<ScreenResult> screen(updates.size());
    if (updates.size() >= 2 || params.epsilon_mode == EpsilonMode::absolute) {
        screen = screen_anomalies(raw, params);
    }

    auto trust_of = [&](std::int64_t device) {
        const auto it = trust_map.find(device);
        return it == trust_map.end() ? 0.0 : it->second;
    };

    RobustAggregate result;
    std::vector<std::size_t> survivors;
    for (std::size_t i = 0; i < updates.size(); ++i) {
        if (screen[i].flagged || trust_of(updates[i].device_id) < params.trust_threshold) {
            result.discarded.push_back(updates[i].device_id);
        } else {
            survivors.push_back(i);
        }
    }
    std::sort(result.discarded.begin(), result.discarded.end());

    const std::size_t dim = raw.front().size();
    if (survivors.empty()) {
        result.update.assign(dim, 0.0);
        result.degenerate = true;
        return result;
    }

    if (!params.trust_weighted) {
        std::vector<ParamVector> kept;
        kept.reserve(survivors.size());
        for (std::size_t i : survivors) kept.push_back(raw[i]);
        result.update = expected_update(kept);
        return result;
    }

    double max_trust = 0.0;
    for (std::size_t i : survivors) {
        max_trust = std::max(max_trust, trust_of(updates[i].device_id));
    }
    if (!(max_trust > 0.0)) {
        result.update.assign(dim, 0.0);
        result.degenerate = true;
        for (std::size_t i : survivors) result.discarded.push_back(updates[i].device_id);
        std::sort(result.discarded.begin(), result.discarded.end());
        return result;
    }

    std::vector<ParamVector> kept;
    std::vector<double> weights;
    kept.reserve(survivors.size());
    weights.reserve(survivors.size());
    for (std::size_t i : survivors) {
        kept.push_back(raw[i]);
        weights.push_back((trust_of(updates[i].device_id) / max_trust) * updates[i].base_weight);
    }
    result.update = aggregate_fedavg(kept, weights);
    return result;
}

}  // namespace ztrust
