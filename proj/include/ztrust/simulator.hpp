// The round loop binding every module: context collection and clustering,
// trust maintenance, local training, poisoning, smart-contract verification,
// block mining, topology-dependent aggregation, and metrics (accuracy,
// detection counts, simulated delay).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ztrust/aggregation.hpp"
#include "ztrust/attacks.hpp"
#include "ztrust/clustering.hpp"
#include "ztrust/data.hpp"
#include "ztrust/errors.hpp"
#include "ztrust/hash.hpp"
#include "ztrust/idx.hpp"
#include "ztrust/ledger.hpp"
#include "ztrust/model.hpp"
#include "ztrust/parallel.hpp"
#include "ztrust/rng.hpp"
#include "ztrust/scenario.hpp"
#include "ztrust/trust.hpp"

namespace ztrust {

struct RoundMetrics {
    std::int64_t round = 0;
    double accuracy = 0.0;
    double delay_s = 0.0;
    bool degenerate = false; // no update applied: everything rejected/discarded, or server down
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::vector<std::int64_t> discarded;      // aggregator-discarded device ids, sorted
    std::vector<std::int64_t> true_malicious; // ground truth, sorted
    std::vector<double> trust;                // post-round trust, device 0..n-1
};

// Linear-additive delay: parallel training (max across devices) + upload,
// then serialized verification, mining, and — when the robust pipeline ran —
// clustering, merging, and trust updates. Callers zero the counts for phases
// a topology skips.
inline double round_delay(const DelayParams& d, std::span<const std::int64_t> samples_per_survivor,
                          std::int64_t accepted_count, std::int64_t points,
                          std::int64_t summaries, std::int64_t trust_devices) {
    d.validate();
    double train_max = 0.0;
    for (std::int64_t s : samples_per_survivor) {
        train_max = std::max(train_max, static_cast<double>(s) * d.t_train_per_sample +
                                            d.t_upload_per_update);
    }
    return train_max + static_cast<double>(accepted_count) * d.t_verify_per_update +
           d.t_mine_per_block + static_cast<double>(points) * d.t_cluster_per_point +
           static_cast<double>(summaries) * d.t_merge_per_cluster +
           static_cast<double>(trust_devices) * d.t_trust_per_device;
}

// Honest behavior baselines: devices are spread over a small number of
// profiles (location, posture, latency, activity), so the global cluster set
// has structure for the anomaly scorer to compare against.
inline ContextVector device_baseline(std::int64_t device_id, std::int64_t n_profiles) {
    if (device_id < 0) throw std::invalid_argument("device_baseline: negative device id");
    if (n_profiles < 1) throw std::invalid_argument("device_baseline: n_profiles must be >= 1");
    const auto p = static_cast<double>(device_id % n_profiles);
    ContextVector c;
    c.location_id = p;
    c.device_posture = 0.95 - 0.05 * static_cast<double>(static_cast<std::int64_t>(p) % 3);
    c.network_latency_ms = 20.0 + 15.0 * p;
    c.request_rate = 2.0 + 1.5 * p;
    c.failed_auth_rate = 0.02 + 0.01 * static_cast<double>(static_cast<std::int64_t>(p) % 2);
    c.off_hours = static_cast<double>(static_cast<std::int64_t>(p) % 2);
    return c;
}

class Simulator {
  public:
    explicit Simulator(ScenarioConfig cfg)
        : cfg_(std::move(cfg)), trust_(cfg_.trust), standardizer_(ContextVector::dim) {
        cfg_.validate();
        build_data();
        shape_ = ModelShape{train_.n_features, train_.n_classes};
        try {
            shape_.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        global_.assign(shape_.param_dim(), 0.0);
        baselines_.reserve(static_cast<std::size_t>(cfg_.n_devices));
        for (std::int64_t i = 0; i < cfg_.n_devices; ++i) {
            baselines_.push_back(device_baseline(i, cfg_.context.n_profiles));
        }
        resolve_policy();
    }

    const ScenarioConfig& config() const { return cfg_; }
    const ParamVector& global_model() const { return global_; }
    const ModelShape& shape() const { return shape_; }
    const Ledger& ledger() const { return ledger_; }
    const VerificationPolicy& policy() const { return policy_; }
    const Dataset& test_set() const { return test_; }
    std::size_t shard_size(std::int64_t device) const {
        return shards_[static_cast<std::size_t>(device)].size();
    }

    RoundMetrics run_round(std::int64_t round) {
        const bool robust = cfg_.topology == Topology::bfl_robust;
        const std::size_t n = static_cast<std::size_t>(cfg_.n_devices);
        RoundMetrics m;
        m.round = round;

        Rng select_rng(derive_seed(cfg_.master_seed, round, 0, "malicious"));
        const std::set<std::int64_t> malicious = select_malicious(cfg_.n_devices, cfg_.attack,
                                                                  select_rng);
        m.true_malicious.assign(malicious.begin(), malicious.end());

        std::int64_t points_count = 0, summaries_count = 0, trust_count = 0;
        if (robust) {
            run_context_pipeline(round, malicious, points_count, summaries_count, trust_count);
        }

        // Failures strike before training; survivors train from the current
        // global model in parallel, each on its own derived seed.
        std::vector<std::int64_t> participants(n);
        std::iota(participants.begin(), participants.end(), 0);
        Rng drop_rng(derive_seed(cfg_.master_seed, round, 1, "dropout"));
        const std::vector<std::int64_t> survivors = apply_failures(participants, cfg_.failure,
                                                                   drop_rng);

        std::vector<ParamVector> updates(survivors.size());
        std::vector<std::int64_t> samples_processed(survivors.size());
        parallel_for(survivors.size(), [&](std::size_t k) {
            const std::int64_t dev = survivors[k];
            TrainConfig tc = cfg_.train;
            tc.seed = derive_seed(cfg_.master_seed, dev, round, "train");
            updates[k] = local_train(global_, shape_, shards_[static_cast<std::size_t>(dev)], tc);
            samples_processed[k] = static_cast<std::int64_t>(cfg_.train.epochs) *
                                   static_cast<std::int64_t>(shard_size(dev));
        });

        // Corruption sits on the wire: after honest training, before
        // verification.
        for (std::size_t k = 0; k < survivors.size(); ++k) {
            if (malicious.count(survivors[k])) {
                Rng attack_rng(derive_seed(cfg_.master_seed, survivors[k], round, "corrupt"));
                updates[k] = corrupt_update(updates[k], cfg_.attack, attack_rng);
            }
        }

        RoundState state{round, {}};
        std::vector<UpdateRecord> accepted;
        std::vector<WeightedUpdate> accepted_weighted;
        std::set<std::int64_t> rejected;
        for (std::size_t k = 0; k < survivors.size(); ++k) {
            const std::int64_t dev = survivors[k];
            const double submitted_at = static_cast<double>(samples_processed[k]) *
                                            cfg_.delay.t_train_per_sample +
                                        cfg_.delay.t_upload_per_update;
            UpdateRecord rec = make_record(dev, round, updates[k], submitted_at);
            if (verify_update(rec, policy_, state).accepted) {
                state.accepted_devices.insert(dev);
                accepted_weighted.push_back(
                    WeightedUpdate{dev, rec.update, static_cast<double>(shard_size(dev))});
                accepted.push_back(std::move(rec));
            } else {
                rejected.insert(dev);
            }
        }

        ledger_.mine_block(round, accepted, all_trust(), cfg_.n_miners);

        ParamVector delta_g;
        bool applied = false;
        if (!accepted_weighted.empty()) {
            if (robust) {
                RobustAggregate agg = aggregate_robust(accepted_weighted, all_trust(),
                                                       cfg_.aggregation);
                m.discarded = agg.discarded;
                if (!agg.degenerate) {
                    delta_g = std::move(agg.update);
                    applied = true;
                }
            } else if (cfg_.topology == Topology::bfl_plain ||
                       server_alive(cfg_.failure, round)) {
                std::vector<ParamVector> kept;
                std::vector<double> weights;
                kept.reserve(accepted_weighted.size());
                for (const auto& w : accepted_weighted) {
                    kept.push_back(w.update);
                    weights.push_back(w.base_weight);
                }
                delta_g = aggregate_fedavg(kept, weights);
                applied = true;
            }
        }
        m.degenerate = !applied;
        if (applied) {
            for (std::size_t j = 0; j < global_.size(); ++j) global_[j] += delta_g[j];
        }

        m.accuracy = evaluate_accuracy();

        // Detection bookkeeping against ground truth: a participating device
        // counts as caught when verification rejected it or the aggregator
        // discarded it.
        std::set<std::int64_t> caught = rejected;
        caught.insert(m.discarded.begin(), m.discarded.end());
        for (std::int64_t dev : survivors) {
            const bool is_malicious = malicious.count(dev) > 0;
            const bool is_caught = caught.count(dev) > 0;
            if (is_malicious && is_caught) ++m.tp;
            if (is_malicious && !is_caught) ++m.fn;
            if (!is_malicious && is_caught) ++m.fp;
            if (!is_malicious && !is_caught) ++m.tn;
        }

        m.delay_s = round_delay(cfg_.delay, samples_processed,
                                static_cast<std::int64_t>(accepted.size()), points_count,
                                summaries_count, trust_count);

        m.trust.reserve(n);
        for (std::int64_t i = 0; i < cfg_.n_devices; ++i) m.trust.push_back(trust_.get(i));
        return m;
    }

    std::vector<RoundMetrics> run() {
        std::vector<RoundMetrics> out;
        out.reserve(static_cast<std::size_t>(cfg_.rounds));
        for (std::int64_t r = 0; r < cfg_.rounds; ++r) out.push_back(run_round(r));
        return out;
    }

    // Every resolved value a rerun would need.
    nlohmann::json metadata() const {
        nlohmann::json j;
        j["config"] = scenario_to_json(cfg_);
        std::vector<std::size_t> sizes;
        sizes.reserve(shards_.size());
        for (const auto& s : shards_) sizes.push_back(s.size());
        j["resolved"] = {{"max_update_norm", policy_.max_update_norm},
                         {"param_dim", shape_.param_dim()},
                         {"n_features", train_.n_features},
                         {"n_classes", train_.n_classes},
                         {"n_train_samples", train_.samples.size()},
                         {"n_test_samples", test_.samples.size()},
                         {"shard_sizes", sizes},
                         {"context_dim", ContextVector::dim},
                         {"trust_weighting", "post_update"}};
        return j;
    }

  private:
    void build_data() {
        Dataset full;
        if (cfg_.data.source == "synthetic") {
            full = gen_synthetic(static_cast<std::size_t>(cfg_.data.n_samples),
                                 static_cast<int>(cfg_.data.n_features),
                                 static_cast<int>(cfg_.data.n_classes),
                                 cfg_.data.class_separation,
                                 derive_seed(cfg_.master_seed, 0, 0, "data"));
        } else {
            full = load_idx(cfg_.data.images, cfg_.data.labels);
        }
        HoldoutSplit split = split_holdout(full, cfg_.data.holdout_fraction,
                                           derive_seed(cfg_.master_seed, 0, 1, "holdout"));
        train_ = std::move(split.train);
        test_ = std::move(split.test);
        if (static_cast<std::size_t>(cfg_.n_devices) > train_.samples.size()) {
            throw ConfigError("config: n_devices exceeds available training samples");
        }
        PartitionSpec pspec;
        pspec.mode = cfg_.data.partition;
        pspec.shards_per_device = static_cast<int>(cfg_.data.shards_per_device);
        pspec.seed = derive_seed(cfg_.master_seed, 0, 2, "partition");
        const auto index_shards = partition(train_, static_cast<int>(cfg_.n_devices), pspec);
        shards_.reserve(index_shards.size());
        for (const auto& shard : index_shards) shards_.push_back(materialize_shard(train_, shard));
    }

    // Smart-contract norm bound: configured value, or calibrated as
    // factor x median update norm from a clean warm-up pass over all devices
    // training from the zero model.
    void resolve_policy() {
        policy_.expected_dim = static_cast<std::size_t>(shape_.param_dim());
        policy_.allow_duplicate_per_round = false;
        if (cfg_.policy.max_update_norm > 0.0) {
            policy_.max_update_norm = cfg_.policy.max_update_norm;
            return;
        }
        std::vector<double> norms(static_cast<std::size_t>(cfg_.n_devices));
        parallel_for(norms.size(), [&](std::size_t i) {
            TrainConfig tc = cfg_.train;
            tc.seed = derive_seed(cfg_.master_seed, static_cast<std::int64_t>(i), 0, "warmup");
            norms[i] = l2_norm(local_train(global_, shape_, shards_[i], tc));
        });
        std::sort(norms.begin(), norms.end());
        const std::size_t mid = norms.size() / 2;
        double median = norms[mid];
        if (norms.size() % 2 == 0) median = (median + norms[mid - 1]) / 2.0;
        policy_.max_update_norm =
            median > 0.0 ? cfg_.policy.auto_norm_factor * median : 1.0;
    }

    void run_context_pipeline(std::int64_t round, const std::set<std::int64_t>& malicious,
                              std::int64_t& points_count, std::int64_t& summaries_count,
                              std::int64_t& trust_count) {
        const std::size_t n = static_cast<std::size_t>(cfg_.n_devices);
        const std::size_t per_device = static_cast<std::size_t>(cfg_.context.points_per_round);

        std::vector<std::vector<std::vector<double>>> raw(n);
        for (std::size_t i = 0; i < n; ++i) {
            Rng crng(derive_seed(cfg_.master_seed, static_cast<std::int64_t>(i), round, "context"));
            const ContextShift* shift = nullptr;
            if (malicious.count(static_cast<std::int64_t>(i)) && cfg_.attack.context_shift) {
                shift = &*cfg_.attack.context_shift;
            }
            raw[i].reserve(per_device);
            for (std::size_t p = 0; p < per_device; ++p) {
                const auto f = collect_context(baselines_[i], cfg_.context.sigma, crng, shift)
                                   .as_features();
                raw[i].emplace_back(f.begin(), f.end());
            }
        }
        for (const auto& device_points : raw) {
            for (const auto& point : device_points) standardizer_.observe(point);
        }
        std::vector<std::vector<std::vector<double>>> zpoints(n);
        for (std::size_t i = 0; i < n; ++i) {
            zpoints[i].reserve(per_device);
            for (const auto& point : raw[i]) zpoints[i].push_back(standardizer_.transform(point));
        }
        points_count = static_cast<std::int64_t>(n * per_device);

        // Cluster refresh (Algorithm-2 cadence): rebuild local sets from this
        // round's points, share, merge; off-cycle rounds score against the
        // standing global set.
        if (round % cfg_.periodic_interval == 0 || !global_clusters_) {
            std::vector<ClusterSet> locals;
            locals.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                ClusterSet s(cfg_.anomaly.width, ContextVector::dim);
                for (const auto& z : zpoints[i]) s.insert(z);
                summaries_count += static_cast<std::int64_t>(s.size());
                locals.push_back(std::move(s));
            }
            global_clusters_ = merge_cluster_sets(locals);
            global_scores_ = local_anomaly_scores(*global_clusters_, cfg_.anomaly.params);
        }

        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (const auto& z : zpoints[i]) {
                sum += point_anomaly(*global_clusters_, global_scores_.scores, z);
            }
            trust_.update(static_cast<std::int64_t>(i), round,
                          sum / static_cast<double>(per_device));
        }
        trust_count = cfg_.n_devices;
    }

    std::map<std::int64_t, double> all_trust() const {
        std::map<std::int64_t, double> out;
        for (std::int64_t i = 0; i < cfg_.n_devices; ++i) out[i] = trust_.get(i);
        return out;
    }

    double evaluate_accuracy() const {
        if (test_.samples.empty()) return 0.0;
        std::size_t correct = 0;
        for (const auto& s : test_.samples) {
            if (predict_class(global_, shape_, s.features) == s.label) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(test_.samples.size());
    }

    ScenarioConfig cfg_;
    ModelShape shape_{};
    Dataset train_;
    Dataset test_;
    std::vector<std::vector<Sample>> shards_;
    std::vector<ContextVector> baselines_;
    ParamVector global_;
    TrustStore trust_;
    RunningStandardizer standardizer_;
    std::optional<ClusterSet> global_clusters_;
    ClusterScores global_scores_;
    VerificationPolicy policy_;
    Ledger ledger_;
};

struct RunResult {
    std::vector<RoundMetrics> rounds;
    Ledger ledger;
    nlohmann::json metadata;
};

inline RunResult run_scenario(const ScenarioConfig& cfg) {
    Simulator sim(cfg);
    RunResult result;
    result.rounds = sim.run();
    result.ledger = sim.ledger();
    result.metadata = sim.metadata();
    return result;
}

// Bucketed detection rate: for rounds whose true malicious set has size k
// (and at least one malicious device participated), the mean TP / (TP + FN).
inline std::map<std::int64_t, double> detection_rate(std::span<const RoundMetrics> rounds) {
    std::map<std::int64_t, double> sums;
    std::map<std::int64_t, std::int64_t> counts;
    for (const auto& m : rounds) {
        const auto k = static_cast<std::int64_t>(m.true_malicious.size());
        if (k == 0 || m.tp + m.fn == 0) continue;
        sums[k] += static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
        counts[k] += 1;
    }
    std::map<std::int64_t, double> rates;
    for (const auto& [k, total] : sums) rates[k] = total / static_cast<double>(counts[k]);
    return rates;
}

// Stability metric: population standard deviation of round-over-round
// accuracy deltas across the last half of the run.
inline double oscillation(std::span<const RoundMetrics> rounds) {
    if (rounds.size() < 2) return 0.0;
    std::vector<double> deltas;
    for (std::size_t t = rounds.size() / 2; t < rounds.size(); ++t) {
        if (t == 0) continue;
        deltas.push_back(rounds[t].accuracy - rounds[t - 1].accuracy);
    }
    if (deltas.empty()) return 0.0;
    double mean = 0.0;
    for (double d : deltas) mean += d;
    mean /= static_cast<double>(deltas.size());
    double var = 0.0;
    for (double d : deltas) var += (d - mean) * (d - mean);
    var /= static_cast<double>(deltas.size());
    return std::sqrt(var);
}

namespace detail {

// Shortest-width fixed formatting would lose bits; %.17g round-trips doubles
// exactly, keeping metrics byte-identical across runs and worker counts.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline void write_metrics_csv(std::ostream& out, std::span<const RoundMetrics> rounds,
                              std::int64_t n_devices) {
    out << "round,accuracy,delay_s,degenerate,tp,fp,fn,tn,discarded";
    for (std::int64_t i = 0; i < n_devices; ++i) out << ",trust_" << i;
    out << '\n';
    for (const auto& m : rounds) {
        out << m.round << ',' << detail::format_double(m.accuracy) << ','
            << detail::format_double(m.delay_s) << ',' << (m.degenerate ? 1 : 0) << ',' << m.tp
            << ',' << m.fp << ',' << m.fn << ',' << m.tn << ',';
        for (std::size_t i = 0; i < m.discarded.size(); ++i) {
            if (i) out << ';';
            out << m.discarded[i];
        }
        for (double t : m.trust) out << ',' << detail::format_double(t);
        out << '\n';
    }
}

}  // namespace ztrust
