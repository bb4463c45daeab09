// Trust state per device: context collection, the smoothing update fed by
// anomaly scores, and the per-request access gate.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "ztrust/rng.hpp"

namespace ztrust {

// Observable per-request context C_i(t): where the device is, how healthy it
// looks, and how it is behaving on the network. Stored as doubles; the
// integer-valued fields stay integer-valued by construction.
struct ContextVector {
    double location_id = 0.0;        // small nonnegative integer
    double device_posture = 1.0;     // [0, 1]
    double network_latency_ms = 0.0; // >= 0
    double request_rate = 0.0;       // >= 0, per second
    double failed_auth_rate = 0.0;   // [0, 1]
    double off_hours = 0.0;          // {0, 1}

    static constexpr std::size_t dim = 6;

    std::array<double, dim> as_features() const {
        return {location_id, device_posture, network_latency_ms,
                request_rate, failed_auth_rate, off_hours};
    }

    void validate() const {
        const auto f = as_features();
        for (double v : f) {
            if (!std::isfinite(v)) throw std::invalid_argument("ContextVector: non-finite field");
        }
        if (location_id < 0.0 || location_id != std::floor(location_id)) {
            throw std::invalid_argument("ContextVector: location_id must be a nonnegative integer");
        }
        if (device_posture < 0.0 || device_posture > 1.0) {
            throw std::invalid_argument("ContextVector: device_posture must be in [0, 1]");
        }
        if (network_latency_ms < 0.0) {
            throw std::invalid_argument("ContextVector: network_latency_ms must be >= 0");
        }
        if (request_rate < 0.0) {
            throw std::invalid_argument("ContextVector: request_rate must be >= 0");
        }
        if (failed_auth_rate < 0.0 || failed_auth_rate > 1.0) {
            throw std::invalid_argument("ContextVector: failed_auth_rate must be in [0, 1]");
        }
        if (off_hours != 0.0 && off_hours != 1.0) {
            throw std::invalid_argument("ContextVector: off_hours must be 0 or 1");
        }
    }
};

// Attack overlay on collected context: per-field additive delta plus a
// multiplicative factor on request_rate (a compromised device both fails
// authentications and gets chatty).
struct ContextShift {
    double failed_auth_delta = 0.4;
    double request_rate_factor = 3.0;
    double latency_delta = 0.0;
    double posture_delta = 0.0;

    void validate() const {
        for (double v : {failed_auth_delta, request_rate_factor, latency_delta, posture_delta}) {
            if (!std::isfinite(v)) throw std::invalid_argument("ContextShift: non-finite field");
        }
        if (!(request_rate_factor > 0.0)) {
            throw std::invalid_argument("ContextShift: request_rate_factor must be > 0");
        }
    }
};

// Samples a round's context near the device's baseline: Gaussian jitter with
// the given sigma on the continuous fields, discrete fields held at baseline.
// A shift (malicious overlay) applies after the jitter; everything is clamped
// back into range.
inline ContextVector collect_context(const ContextVector& baseline, double sigma, Rng& rng,
                                     const ContextShift* shift = nullptr) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("collect_context: sigma must be >= 0");
    baseline.validate();

    ContextVector c = baseline;
    c.device_posture += sigma * rng.gaussian();
    c.network_latency_ms += 10.0 * sigma * rng.gaussian();
    c.request_rate += sigma * rng.gaussian();
    c.failed_auth_rate += 0.1 * sigma * rng.gaussian();

    if (shift) {
        shift->validate();
        c.device_posture += shift->posture_delta;
        c.network_latency_ms += shift->latency_delta;
        c.request_rate *= shift->request_rate_factor;
        c.failed_auth_rate += shift->failed_auth_delta;
    }

    c.device_posture = std::clamp(c.device_posture, 0.0, 1.0);
    c.network_latency_ms = std::max(0.0, c.network_latency_ms);
    c.request_rate = std::max(0.0, c.request_rate);
    c.failed_auth_rate = std::clamp(c.failed_auth_rate, 0.0, 1.0);
    c.validate();
    return c;
}

struct TrustParams {
    double t0 = 0.5;    // initial trust for a fresh device
    double alpha = 0.3; // smoothing weight on the newest observation
    double tau = 0.25;  // minimum trust that still grants access

    void validate() const {
        if (!(t0 >= 0.0 && t0 <= 1.0)) {
            throw std::invalid_argument("TrustParams: t0 must be in [0, 1]");
        }
        if (!(alpha > 0.0 && alpha <= 1.0)) {
            throw std::invalid_argument("TrustParams: alpha must be in (0, 1]");
        }
        if (!(tau >= 0.0 && tau <= 1.0)) {
            throw std::invalid_argument("TrustParams: tau must be in [0, 1]");
        }
    }
};

// t' = clamp((1 - alpha) * t + alpha * (1 - anomaly)). A clean round pulls
// trust toward 1, a fully anomalous one toward 0.
inline double trust_update(double trust, double anomaly, double alpha) {
    if (!(trust >= 0.0 && trust <= 1.0)) {
        throw std::invalid_argument("trust_update: trust must be in [0, 1]");
    }
    if (!(anomaly >= 0.0 && anomaly <= 1.0)) {
        throw std::invalid_argument("trust_update: anomaly must be in [0, 1]");
    }
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("trust_update: alpha must be in (0, 1]");
    }
    return std::clamp((1.0 - alpha) * trust + alpha * (1.0 - anomaly), 0.0, 1.0);
}

inline bool access_allowed(double trust, double tau) { return trust >= tau; }

struct TrustEvent {
    std::int64_t round = 0;
    double trust = 0.0;
    double anomaly = 0.0;
};

struct TrustRecord {
    std::int64_t device_id = 0;
    double trust = 0.0;
    std::vector<TrustEvent> history; // rounds strictly increasing
};

// Applies the smoothing update and appends to the record's history.
inline void update_trust(TrustRecord& record, std::int64_t round, double anomaly,
                         const TrustParams& params) {
    params.validate();
    if (!record.history.empty() && record.history.back().round >= round) {
        throw std::invalid_argument("update_trust: rounds must be strictly increasing");
    }
    record.trust = trust_update(record.trust, anomaly, params.alpha);
    record.history.push_back(TrustEvent{round, record.trust, anomaly});
}

inline bool access_decision(const TrustRecord& record, const TrustParams& params) {
    return access_allowed(record.trust, params.tau);
}

// Fleet bookkeeping: unseen devices start at t0; updates apply the smoothing
// rule and keep history.
class TrustStore {
  public:
    explicit TrustStore(TrustParams params = {}) : params_(params) { params_.validate(); }

    const TrustParams& params() const { return params_; }

    const TrustRecord& record(std::int64_t device_id) {
        auto [it, inserted] = records_.try_emplace(device_id);
        if (inserted) {
            it->second.device_id = device_id;
            it->second.trust = params_.t0;
        }
        return it->second;
    }

    double get(std::int64_t device_id) const {
        const auto it = records_.find(device_id);
        return it == records_.end() ? params_.t0 : it->second.trust;
    }

    double update(std::int64_t device_id, std::int64_t round, double anomaly) {
        record(device_id);
        update_trust(records_[device_id], round, anomaly, params_);
        return records_[device_id].trust;
    }

    bool allowed(std::int64_t device_id) const { return access_allowed(get(device_id), params_.tau); }

    // Restores a score directly (ledger snapshot recovery); history untouched.
    void set(std::int64_t device_id, double trust) {
        if (!(trust >= 0.0 && trust <= 1.0)) {
            throw std::invalid_argument("TrustStore::set: trust must be in [0, 1]");
        }
        record(device_id);
        records_[device_id].trust = trust;
    }

    std::map<std::int64_t, double> snapshot() const {
        std::map<std::int64_t, double> out;
        for (const auto& [id, rec] : records_) out[id] = rec.trust;
        return out;
    }

  private:
    TrustParams params_;
    std::map<std::int64_t, TrustRecord> records_;
};

}  // namespace ztrust
