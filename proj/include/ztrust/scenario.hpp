// Scenario configuration: every knob of a run, JSON (de)serialization with
// fail-closed unknown-key handling, and the resolved-defaults echo that makes
// runs self-describing.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ztrust/aggregation.hpp"
#include "ztrust/attacks.hpp"
#include "ztrust/clustering.hpp"
#include "ztrust/data.hpp"
#include "ztrust/errors.hpp"
#include "ztrust/model.hpp"
#include "ztrust/trust.hpp"

namespace ztrust {

enum class Topology { bfl_robust, bfl_plain, centralized_fedavg };

inline const char* topology_name(Topology t) {
    switch (t) {
        case Topology::bfl_robust: return "bfl_robust";
        case Topology::bfl_plain: return "bfl_plain";
        case Topology::centralized_fedavg: return "centralized_fedavg";
    }
    return "?";
}

struct DataConfig {
    std::string source = "synthetic"; // or "idx"
    std::int64_t n_samples = 5000;
    std::int64_t n_features = 16;
    std::int64_t n_classes = 4;
    double class_separation = 1.5;
    double holdout_fraction = 0.2;
    PartitionMode partition = PartitionMode::iid;
    std::int64_t shards_per_device = 2;
    std::string images; // idx source
    std::string labels;
};

struct ContextConfig {
    std::int64_t n_profiles = 4;      // distinct honest behavior baselines
    double sigma = 0.05;              // jitter around the baseline
    std::int64_t points_per_round = 1;
};

struct AnomalyConfig {
    double width = 1.0; // cluster width in standardized feature space
    AnomalyParams params;
};

struct DelayParams {
    double t_train_per_sample = 0.001;
    double t_upload_per_update = 0.05;
    double t_verify_per_update = 0.002;
    double t_mine_per_block = 0.5;
    double t_cluster_per_point = 0.005;
    double t_merge_per_cluster = 0.005;
    double t_trust_per_device = 0.01;

    void validate() const {
        for (double v : {t_train_per_sample, t_upload_per_update, t_verify_per_update,
                         t_mine_per_block, t_cluster_per_point, t_merge_per_cluster,
                         t_trust_per_device}) {
            if (!(v >= 0.0)) throw std::invalid_argument("delay: all per-phase costs must be >= 0");
        }
    }
};

struct PolicyConfig {
    double max_update_norm = 0.0;  // <= 0 selects auto-calibration from a clean warm-up pass
    double auto_norm_factor = 10.0;

    void validate() const {
        if (!(auto_norm_factor > 0.0)) {
            throw std::invalid_argument("policy: auto_norm_factor must be > 0");
        }
    }
};

struct ScenarioConfig {
    Topology topology = Topology::bfl_robust;
    std::int64_t n_devices = 0; // required
    std::int64_t n_miners = 2;
    std::int64_t rounds = 0;    // required
    std::int64_t periodic_interval = 1;
    std::uint64_t master_seed = 1;
    DataConfig data;
    TrainConfig train{.epochs = 2};
    RobustParams aggregation;
    AnomalyConfig anomaly;
    ContextConfig context;
    TrustParams trust;
    AttackSpec attack;
    FailureSpec failure;
    DelayParams delay;
    PolicyConfig policy;

    void validate() const {
        if (n_devices < 1) throw ConfigError("config: n_devices must be >= 1");
        if (rounds < 1) throw ConfigError("config: rounds must be >= 1");
        if (n_miners < 1) throw ConfigError("config: n_miners must be >= 1");
        if (periodic_interval < 1) throw ConfigError("config: periodic_interval must be >= 1");
        if (data.source != "synthetic" && data.source != "idx") {
            throw ConfigError("config: data.source must be 'synthetic' or 'idx'");
        }
        if (data.source == "idx" && (data.images.empty() || data.labels.empty())) {
            throw ConfigError("config: data.images and data.labels required for idx source");
        }
        if (data.source == "synthetic") {
            if (data.n_samples < data.n_classes) {
                throw ConfigError("config: data.n_samples must be >= data.n_classes");
            }
            if (data.n_features < 1) throw ConfigError("config: data.n_features must be >= 1");
            if (data.n_classes < 2) throw ConfigError("config: data.n_classes must be >= 2");
            if (!(data.class_separation > 0.0)) {
                throw ConfigError("config: data.class_separation must be > 0");
            }
        }
        if (!(data.holdout_fraction >= 0.0 && data.holdout_fraction < 1.0)) {
            throw ConfigError("config: data.holdout_fraction must be in [0, 1)");
        }
        if (data.shards_per_device < 1) {
            throw ConfigError("config: data.shards_per_device must be >= 1");
        }
        if (train.epochs < 1) throw ConfigError("config: train.epochs must be >= 1");
        if (train.batch_size < 1) throw ConfigError("config: train.batch_size must be >= 1");
        if (!(train.learning_rate >= 0.0)) {
            throw ConfigError("config: train.learning_rate must be >= 0");
        }
        if (context.n_profiles < 1) throw ConfigError("config: context.n_profiles must be >= 1");
        if (!(context.sigma >= 0.0)) throw ConfigError("config: context.sigma must be >= 0");
        if (context.points_per_round < 1) {
            throw ConfigError("config: context.points_per_round must be >= 1");
        }
        if (!(anomaly.width > 0.0)) throw ConfigError("config: anomaly.width must be > 0");
        if (failure.server_failure_round && topology != Topology::centralized_fedavg) {
            throw ConfigError(
                "config: failure.server_failure_round is only valid for centralized_fedavg");
        }
        auto wrap = [](auto&& fn) {
            try {
                fn();
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("config: ") + e.what());
            }
        };
        wrap([&] { aggregation.validate(); });
        wrap([&] { anomaly.params.validate(); });
        wrap([&] { trust.validate(); });
        wrap([&] { attack.validate(n_devices); });
        wrap([&] { failure.validate(); });
        wrap([&] { delay.validate(); });
        wrap([&] { policy.validate(); });
    }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed) {
            if (item.key() == a) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("config: unknown key '" + item.key() + "' in " + where);
    }
}

template <typename T>
T get_field(const nlohmann::json& j, const std::string& where, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const std::exception&) {
        throw ConfigError("config: bad value for '" + where + key + "'");
    }
}

}  // namespace detail

inline Topology topology_from_string(const std::string& s) {
    if (s == "bfl_robust") return Topology::bfl_robust;
    if (s == "bfl_plain") return Topology::bfl_plain;
    if (s == "centralized_fedavg") return Topology::centralized_fedavg;
    throw ConfigError("config: topology must be one of bfl_robust, bfl_plain, centralized_fedavg");
}

inline ScenarioConfig parse_scenario(const nlohmann::json& j) {
    using detail::check_keys;
    using detail::get_field;

    check_keys(j, "(top level)",
               {"topology", "n_devices", "n_miners", "rounds", "periodic_interval", "master_seed",
                "data", "train", "aggregation", "anomaly", "context", "trust", "attack", "failure",
                "delay", "policy"});

    ScenarioConfig cfg;
    if (!j.contains("n_devices")) throw ConfigError("config: missing required key 'n_devices'");
    if (!j.contains("rounds")) throw ConfigError("config: missing required key 'rounds'");

    cfg.topology = topology_from_string(get_field<std::string>(j, "", "topology", "bfl_robust"));
    cfg.n_devices = get_field<std::int64_t>(j, "", "n_devices", 0);
    cfg.n_miners = get_field<std::int64_t>(j, "", "n_miners", cfg.n_miners);
    cfg.rounds = get_field<std::int64_t>(j, "", "rounds", 0);
    cfg.periodic_interval = get_field<std::int64_t>(j, "", "periodic_interval", cfg.periodic_interval);
    cfg.master_seed = get_field<std::uint64_t>(j, "", "master_seed", cfg.master_seed);

    if (j.contains("data")) {
        const auto& d = j.at("data");
        check_keys(d, "data",
                   {"source", "n_samples", "n_features", "n_classes", "class_separation",
                    "holdout_fraction", "partition", "shards_per_device", "images", "labels"});
        cfg.data.source = get_field<std::string>(d, "data.", "source", cfg.data.source);
        cfg.data.n_samples = get_field<std::int64_t>(d, "data.", "n_samples", cfg.data.n_samples);
        cfg.data.n_features = get_field<std::int64_t>(d, "data.", "n_features", cfg.data.n_features);
        cfg.data.n_classes = get_field<std::int64_t>(d, "data.", "n_classes", cfg.data.n_classes);
        cfg.data.class_separation =
            get_field<double>(d, "data.", "class_separation", cfg.data.class_separation);
        cfg.data.holdout_fraction =
            get_field<double>(d, "data.", "holdout_fraction", cfg.data.holdout_fraction);
        const std::string part = get_field<std::string>(d, "data.", "partition", "iid");
        if (part == "iid") {
            cfg.data.partition = PartitionMode::iid;
        } else if (part == "label_shard") {
            cfg.data.partition = PartitionMode::label_shard;
        } else {
            throw ConfigError("config: data.partition must be 'iid' or 'label_shard'");
        }
        cfg.data.shards_per_device =
            get_field<std::int64_t>(d, "data.", "shards_per_device", cfg.data.shards_per_device);
        cfg.data.images = get_field<std::string>(d, "data.", "images", cfg.data.images);
        cfg.data.labels = get_field<std::string>(d, "data.", "labels", cfg.data.labels);
    }

    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t, "train", {"epochs", "batch_size", "learning_rate"});
        cfg.train.epochs = get_field<int>(t, "train.", "epochs", cfg.train.epochs);
        cfg.train.batch_size = get_field<int>(t, "train.", "batch_size", cfg.train.batch_size);
        cfg.train.learning_rate =
            get_field<double>(t, "train.", "learning_rate", cfg.train.learning_rate);
    }

    if (j.contains("aggregation")) {
        const auto& a = j.at("aggregation");
        check_keys(a, "aggregation",
                   {"epsilon_mode", "epsilon", "theta", "trust_threshold", "trust_weighted"});
        const std::string mode = get_field<std::string>(a, "aggregation.", "epsilon_mode",
                                                        "robust_z");
        if (mode == "absolute") {
            cfg.aggregation.epsilon_mode = EpsilonMode::absolute;
        } else if (mode == "robust_z") {
            cfg.aggregation.epsilon_mode = EpsilonMode::robust_z;
        } else {
            throw ConfigError("config: aggregation.epsilon_mode must be 'absolute' or 'robust_z'");
        }
        cfg.aggregation.epsilon =
            get_field<double>(a, "aggregation.", "epsilon", cfg.aggregation.epsilon);
        cfg.aggregation.theta = get_field<double>(a, "aggregation.", "theta", cfg.aggregation.theta);
        cfg.aggregation.trust_threshold = get_field<double>(a, "aggregation.", "trust_threshold",
                                                            cfg.aggregation.trust_threshold);
        cfg.aggregation.trust_weighted = get_field<bool>(a, "aggregation.", "trust_weighted",
                                                         cfg.aggregation.trust_weighted);
    }

    if (j.contains("anomaly")) {
        const auto& a = j.at("anomaly");
        check_keys(a, "anomaly", {"width", "k_neighbors", "sensitivity", "score_normalizer"});
        cfg.anomaly.width = get_field<double>(a, "anomaly.", "width", cfg.anomaly.width);
        cfg.anomaly.params.k_neighbors = static_cast<std::size_t>(get_field<std::int64_t>(
            a, "anomaly.", "k_neighbors", static_cast<std::int64_t>(cfg.anomaly.params.k_neighbors)));
        cfg.anomaly.params.sensitivity =
            get_field<double>(a, "anomaly.", "sensitivity", cfg.anomaly.params.sensitivity);
        cfg.anomaly.params.score_normalizer = get_field<double>(
            a, "anomaly.", "score_normalizer", cfg.anomaly.params.score_normalizer);
    }

    if (j.contains("context")) {
        const auto& c = j.at("context");
        check_keys(c, "context", {"n_profiles", "sigma", "points_per_round"});
        cfg.context.n_profiles =
            get_field<std::int64_t>(c, "context.", "n_profiles", cfg.context.n_profiles);
        cfg.context.sigma = get_field<double>(c, "context.", "sigma", cfg.context.sigma);
        cfg.context.points_per_round =
            get_field<std::int64_t>(c, "context.", "points_per_round", cfg.context.points_per_round);
    }

    if (j.contains("trust")) {
        const auto& t = j.at("trust");
        check_keys(t, "trust", {"t0", "alpha", "tau"});
        cfg.trust.t0 = get_field<double>(t, "trust.", "t0", cfg.trust.t0);
        cfg.trust.alpha = get_field<double>(t, "trust.", "alpha", cfg.trust.alpha);
        cfg.trust.tau = get_field<double>(t, "trust.", "tau", cfg.trust.tau);
    }

    if (j.contains("attack")) {
        const auto& a = j.at("attack");
        check_keys(a, "attack",
                   {"kind", "gamma", "sigma", "selection", "fixed_ids", "min_k", "max_k",
                    "context_shift"});
        const std::string kind = get_field<std::string>(a, "attack.", "kind", "none");
        if (kind == "none") {
            cfg.attack.kind = AttackKind::none;
        } else if (kind == "sign_flip") {
            cfg.attack.kind = AttackKind::sign_flip;
        } else if (kind == "scale") {
            cfg.attack.kind = AttackKind::scale;
        } else if (kind == "gaussian_noise") {
            cfg.attack.kind = AttackKind::gaussian_noise;
        } else {
            throw ConfigError(
                "config: attack.kind must be one of none, sign_flip, scale, gaussian_noise");
        }
        cfg.attack.gamma = get_field<double>(a, "attack.", "gamma", cfg.attack.gamma);
        cfg.attack.sigma = get_field<double>(a, "attack.", "sigma", cfg.attack.sigma);
        const std::string sel = get_field<std::string>(a, "attack.", "selection", "fixed_set");
        if (sel == "fixed_set") {
            cfg.attack.selection = SelectionMode::fixed_set;
        } else if (sel == "per_round_random") {
            cfg.attack.selection = SelectionMode::per_round_random;
        } else {
            throw ConfigError("config: attack.selection must be 'fixed_set' or 'per_round_random'");
        }
        cfg.attack.fixed_ids = get_field<std::vector<std::int64_t>>(a, "attack.", "fixed_ids",
                                                                    cfg.attack.fixed_ids);
        cfg.attack.min_k = get_field<std::int64_t>(a, "attack.", "min_k", cfg.attack.min_k);
        cfg.attack.max_k = get_field<std::int64_t>(a, "attack.", "max_k", cfg.attack.max_k);
        if (a.contains("context_shift")) {
            if (a.at("context_shift").is_null()) {
                cfg.attack.context_shift.reset();
            } else {
                const auto& s = a.at("context_shift");
                check_keys(s, "attack.context_shift",
                           {"failed_auth_delta", "request_rate_factor", "latency_delta",
                            "posture_delta"});
                ContextShift shift;
                shift.failed_auth_delta = get_field<double>(s, "attack.context_shift.",
                                                            "failed_auth_delta",
                                                            shift.failed_auth_delta);
                shift.request_rate_factor = get_field<double>(s, "attack.context_shift.",
                                                              "request_rate_factor",
                                                              shift.request_rate_factor);
                shift.latency_delta = get_field<double>(s, "attack.context_shift.", "latency_delta",
                                                        shift.latency_delta);
                shift.posture_delta = get_field<double>(s, "attack.context_shift.", "posture_delta",
                                                        shift.posture_delta);
                cfg.attack.context_shift = shift;
            }
        }
    }

    if (j.contains("failure")) {
        const auto& f = j.at("failure");
        check_keys(f, "failure", {"device_dropout_prob", "server_failure_round"});
        cfg.failure.device_dropout_prob = get_field<double>(f, "failure.", "device_dropout_prob",
                                                            cfg.failure.device_dropout_prob);
        if (f.contains("server_failure_round") && !f.at("server_failure_round").is_null()) {
            cfg.failure.server_failure_round =
                get_field<std::int64_t>(f, "failure.", "server_failure_round", 0);
        }
    }

    if (j.contains("delay")) {
        const auto& d = j.at("delay");
        check_keys(d, "delay",
                   {"t_train_per_sample", "t_upload_per_update", "t_verify_per_update",
                    "t_mine_per_block", "t_cluster_per_point", "t_merge_per_cluster",
                    "t_trust_per_device"});
        cfg.delay.t_train_per_sample =
            get_field<double>(d, "delay.", "t_train_per_sample", cfg.delay.t_train_per_sample);
        cfg.delay.t_upload_per_update =
            get_field<double>(d, "delay.", "t_upload_per_update", cfg.delay.t_upload_per_update);
        cfg.delay.t_verify_per_update =
            get_field<double>(d, "delay.", "t_verify_per_update", cfg.delay.t_verify_per_update);
        cfg.delay.t_mine_per_block =
            get_field<double>(d, "delay.", "t_mine_per_block", cfg.delay.t_mine_per_block);
        cfg.delay.t_cluster_per_point =
            get_field<double>(d, "delay.", "t_cluster_per_point", cfg.delay.t_cluster_per_point);
        cfg.delay.t_merge_per_cluster =
            get_field<double>(d, "delay.", "t_merge_per_cluster", cfg.delay.t_merge_per_cluster);
        cfg.delay.t_trust_per_device =
            get_field<double>(d, "delay.", "t_trust_per_device", cfg.delay.t_trust_per_device);
    }

    if (j.contains("policy")) {
        const auto& p = j.at("policy");
        check_keys(p, "policy", {"max_update_norm", "auto_norm_factor"});
        cfg.policy.max_update_norm =
            get_field<double>(p, "policy.", "max_update_norm", cfg.policy.max_update_norm);
        cfg.policy.auto_norm_factor =
            get_field<double>(p, "policy.", "auto_norm_factor", cfg.policy.auto_norm_factor);
    }

    cfg.validate();
    return cfg;
}

inline ScenarioConfig load_scenario_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: parse error in ") + path + ": " + e.what());
    }
    return parse_scenario(j);
}

// Full echo of every resolved value; written into run metadata so a run is
// reproducible from its artifacts alone.
inline nlohmann::json scenario_to_json(const ScenarioConfig& cfg) {
    nlohmann::json j;
    j["topology"] = topology_name(cfg.topology);
    j["n_devices"] = cfg.n_devices;
    j["n_miners"] = cfg.n_miners;
    j["rounds"] = cfg.rounds;
    j["periodic_interval"] = cfg.periodic_interval;
    j["master_seed"] = cfg.master_seed;
    j["data"] = {{"source", cfg.data.source},
                 {"n_samples", cfg.data.n_samples},
                 {"n_features", cfg.data.n_features},
                 {"n_classes", cfg.data.n_classes},
                 {"class_separation", cfg.data.class_separation},
                 {"holdout_fraction", cfg.data.holdout_fraction},
                 {"partition", cfg.data.partition == PartitionMode::iid ? "iid" : "label_shard"},
                 {"shards_per_device", cfg.data.shards_per_device},
                 {"images", cfg.data.images},
                 {"labels", cfg.data.labels}};
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"learning_rate", cfg.train.learning_rate}};
    j["aggregation"] = {
        {"epsilon_mode",
         cfg.aggregation.epsilon_mode == EpsilonMode::absolute ? "absolute" : "robust_z"},
        {"epsilon", cfg.aggregation.epsilon},
        {"theta", cfg.aggregation.theta},
        {"trust_threshold", cfg.aggregation.trust_threshold},
        {"trust_weighted", cfg.aggregation.trust_weighted}};
    j["anomaly"] = {{"width", cfg.anomaly.width},
                    {"k_neighbors", cfg.anomaly.params.k_neighbors},
                    {"sensitivity", cfg.anomaly.params.sensitivity},
                    {"score_normalizer", cfg.anomaly.params.score_normalizer}};
    j["context"] = {{"n_profiles", cfg.context.n_profiles},
                    {"sigma", cfg.context.sigma},
                    {"points_per_round", cfg.context.points_per_round}};
    j["trust"] = {{"t0", cfg.trust.t0}, {"alpha", cfg.trust.alpha}, {"tau", cfg.trust.tau}};
    const char* kind = "none";
    switch (cfg.attack.kind) {
        case AttackKind::none: kind = "none"; break;
        case AttackKind::sign_flip: kind = "sign_flip"; break;
        case AttackKind::scale: kind = "scale"; break;
        case AttackKind::gaussian_noise: kind = "gaussian_noise"; break;
    }
    j["attack"] = {{"kind", kind},
                   {"gamma", cfg.attack.gamma},
                   {"sigma", cfg.attack.sigma},
                   {"selection", cfg.attack.selection == SelectionMode::fixed_set
                                     ? "fixed_set"
                                     : "per_round_random"},
                   {"fixed_ids", cfg.attack.fixed_ids},
                   {"min_k", cfg.attack.min_k},
                   {"max_k", cfg.attack.max_k}};
    if (cfg.attack.context_shift) {
        j["attack"]["context_shift"] = {
            {"failed_auth_delta", cfg.attack.context_shift->failed_auth_delta},
            {"request_rate_factor", cfg.attack.context_shift->request_rate_factor},
            {"latency_delta", cfg.attack.context_shift->latency_delta},
            {"posture_delta", cfg.attack.context_shift->posture_delta}};
    } else {
        j["attack"]["context_shift"] = nullptr;
    }
    j["failure"] = {{"device_dropout_prob", cfg.failure.device_dropout_prob}};
    if (cfg.failure.server_failure_round) {
        j["failure"]["server_failure_round"] = *cfg.failure.server_failure_round;
    } else {
        j["failure"]["server_failure_round"] = nullptr;
    }
    j["delay"] = {{"t_train_per_sample", cfg.delay.t_train_per_sample},
                  {"t_upload_per_update", cfg.delay.t_upload_per_update},
                  {"t_verify_per_update", cfg.delay.t_verify_per_update},
                  {"t_mine_per_block", cfg.delay.t_mine_per_block},
                  {"t_cluster_per_point", cfg.delay.t_cluster_per_point},
                  {"t_merge_per_cluster", cfg.delay.t_merge_per_cluster},
                  {"t_trust_per_device", cfg.delay.t_trust_per_device}};
    j["policy"] = {{"max_update_norm", cfg.policy.max_update_norm},
                   {"auto_norm_factor", cfg.policy.auto_norm_factor}};
    return j;
}

}  // namespace ztrust
