// Fault and adversary injection: update poisoning, malicious-device
// selection, context manipulation, dropout, and the central-server failure
// used by the baseline topology.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "ztrust/model.hpp"
#include "ztrust/rng.hpp"
#include "ztrust/trust.hpp"

namespace ztrust {

enum class AttackKind { none, sign_flip, scale, gaussian_noise };

enum class SelectionMode { fixed_set, per_round_random };

struct AttackSpec {
    AttackKind kind = AttackKind::none;
    double gamma = -5.0;  // scale kind
    double sigma = 1.0;   // gaussian_noise kind
    SelectionMode selection = SelectionMode::fixed_set;
    std::vector<std::int64_t> fixed_ids;
    std::int64_t min_k = 0; // per_round_random kind
    std::int64_t max_k = 0;
    std::optional<ContextShift> context_shift = ContextShift{};

    void validate(std::int64_t n_devices) const {
        if (kind == AttackKind::scale && gamma == 0.0) {
            throw std::invalid_argument("AttackSpec: gamma must be nonzero");
        }
        if (kind == AttackKind::gaussian_noise && !(sigma >= 0.0)) {
            throw std::invalid_argument("AttackSpec: sigma must be >= 0");
        }
        if (selection == SelectionMode::fixed_set) {
            for (std::int64_t id : fixed_ids) {
                if (id < 0 || id >= n_devices) {
                    throw std::invalid_argument("AttackSpec: fixed_ids out of device range");
                }
            }
        } else {
            if (min_k < 0 || min_k > max_k || max_k > n_devices) {
                throw std::invalid_argument("AttackSpec: need 0 <= min_k <= max_k <= n_devices");
            }
        }
        if (context_shift) context_shift->validate();
    }
};

// The round's true malicious set. fixed_set comes back verbatim (sorted,
// deduplicated); per_round_random draws k uniform in [min_k, max_k] and then
// a uniform k-subset of the device ids.
inline std::set<std::int64_t> select_malicious(std::int64_t n_devices, const AttackSpec& spec,
                                               Rng& rng) {
    spec.validate(n_devices);
    if (spec.kind == AttackKind::none) return {};

    if (spec.selection == SelectionMode::fixed_set) {
        return {spec.fixed_ids.begin(), spec.fixed_ids.end()};
    }
    const std::int64_t span = spec.max_k - spec.min_k + 1;
    const std::int64_t k = spec.min_k + static_cast<std::int64_t>(
                                            rng.below(static_cast<std::uint64_t>(span)));
    // Partial Fisher-Yates: the first k slots of a shuffle are a uniform
    // k-subset.
    std::vector<std::int64_t> ids(static_cast<std::size_t>(n_devices));
    for (std::int64_t i = 0; i < n_devices; ++i) ids[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::int64_t>(
                               rng.below(static_cast<std::uint64_t>(n_devices - i)));
        std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
    }
    return {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k)};
}

// Applies the poisoning transform on the wire, after honest training:
// sign_flip negates, scale multiplies by gamma, gaussian_noise adds seeded
// noise.
inline ParamVector corrupt_update(const ParamVector& update, const AttackSpec& spec, Rng& rng) {
    for (double v : update) {
        if (!std::isfinite(v)) throw std::invalid_argument("corrupt_update: non-finite update");
    }
    ParamVector out = update;
    switch (spec.kind) {
        case AttackKind::none:
            break;
        case AttackKind::sign_flip:
            for (double& v : out) v = -v;
            break;
        case AttackKind::scale:
            if (spec.gamma == 0.0) throw std::invalid_argument("corrupt_update: gamma must be nonzero");
            for (double& v : out) v *= spec.gamma;
            break;
        case AttackKind::gaussian_noise:
            for (double& v : out) v += spec.sigma * rng.gaussian();
            break;
    }
    return out;
}

struct FailureSpec {
    double device_dropout_prob = 0.0;                 // in [0, 1]; 1 drops everyone
    std::optional<std::int64_t> server_failure_round; // centralized topology only

    void validate() const {
        if (!(device_dropout_prob >= 0.0 && device_dropout_prob <= 1.0)) {
            throw std::invalid_argument("FailureSpec: device_dropout_prob must be in [0, 1]");
        }
        if (server_failure_round && *server_failure_round < 0) {
            throw std::invalid_argument("FailureSpec: server_failure_round must be >= 0");
        }
    }
};

// Each participating device independently drops out with the configured
// probability; survivors keep their input order.
inline std::vector<std::int64_t> apply_failures(std::span<const std::int64_t> participants,
                                                const FailureSpec& spec, Rng& rng) {
    spec.validate();
    std::vector<std::int64_t> survivors;
    survivors.reserve(participants.size());
    for (std::int64_t id : participants) {
        if (spec.device_dropout_prob == 0.0 || rng.uniform() >= spec.device_dropout_prob) {
            survivors.push_back(id);
        }
    }
    return survivors;
}

inline bool server_alive(const FailureSpec& spec, std::int64_t round) {
    return !spec.server_failure_round || round < *spec.server_failure_round;
}

}  // namespace ztrust
