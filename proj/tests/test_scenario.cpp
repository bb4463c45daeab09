#include <filesystem>
#include <fstream>

#include "catch2/catch_amalgamated.hpp"
#include "json.hpp"
#include "ztrust/errors.hpp"
#include "ztrust/scenario.hpp"

using namespace ztrust;
using nlohmann::json;
using Catch::Matchers::ContainsSubstring;

namespace {

json minimal() { return json{{"n_devices", 4}, {"rounds", 2}}; }

}  // namespace

TEST_CASE("parse_scenario: minimal config resolves documented defaults") {
    const ScenarioConfig cfg = parse_scenario(minimal());
    CHECK(cfg.topology == Topology::bfl_robust);
    CHECK(cfg.n_devices == 4);
    CHECK(cfg.rounds == 2);
    CHECK(cfg.n_miners == 2);
    CHECK(cfg.periodic_interval == 1);
    CHECK(cfg.master_seed == 1);
    CHECK(cfg.data.source == "synthetic");
    CHECK(cfg.data.n_samples == 5000);
    CHECK(cfg.data.n_features == 16);
    CHECK(cfg.data.n_classes == 4);
    CHECK(cfg.data.holdout_fraction == 0.2);
    CHECK(cfg.data.partition == PartitionMode::iid);
    CHECK(cfg.train.epochs == 2);
    CHECK(cfg.train.batch_size == 10);
    CHECK(cfg.train.learning_rate == 0.01);
    CHECK(cfg.aggregation.epsilon_mode == EpsilonMode::robust_z);
    CHECK(cfg.aggregation.theta == 3.0);
    CHECK(cfg.aggregation.trust_threshold == 0.25);
    CHECK(cfg.aggregation.trust_weighted);
    CHECK(cfg.anomaly.width == 1.0);
    CHECK(cfg.anomaly.params.k_neighbors == 3);
    CHECK(cfg.trust.t0 == 0.5);
    CHECK(cfg.trust.alpha == 0.3);
    CHECK(cfg.trust.tau == 0.25);
    CHECK(cfg.attack.kind == AttackKind::none);
    CHECK(cfg.attack.context_shift.has_value());
    CHECK(cfg.failure.device_dropout_prob == 0.0);
    CHECK_FALSE(cfg.failure.server_failure_round.has_value());
    CHECK(cfg.delay.t_mine_per_block == 0.5);
    CHECK(cfg.policy.max_update_norm == 0.0);
}

TEST_CASE("parse_scenario: required keys are named in the error") {
    json j{{"rounds", 2}};
    CHECK_THROWS_WITH(parse_scenario(j), ContainsSubstring("n_devices"));
    json j2{{"n_devices", 4}};
    CHECK_THROWS_WITH(parse_scenario(j2), ContainsSubstring("rounds"));
    CHECK_THROWS_AS(parse_scenario(json{{"rounds", 2}}), ConfigError);
}

TEST_CASE("parse_scenario: unknown keys fail closed") {
    json j = minimal();
    j["n_device"] = 4;
    CHECK_THROWS_WITH(parse_scenario(j), ContainsSubstring("n_device"));

    json j2 = minimal();
    j2["train"] = {{"epochs", 1}, {"lr", 0.1}};
    CHECK_THROWS_WITH(parse_scenario(j2),
                      ContainsSubstring("unknown key 'lr' in train"));

    json j3 = minimal();
    j3["attack"] = {{"kind", "none"}, {"context_shift", {{"bogus", 1.0}}}};
    CHECK_THROWS_WITH(parse_scenario(j3), ContainsSubstring("bogus"));
}

TEST_CASE("parse_scenario: bad value types name the offending key") {
    json j = minimal();
    j["train"] = {{"epochs", "three"}};
    CHECK_THROWS_WITH(parse_scenario(j), ContainsSubstring("train.epochs"));

    json j2 = minimal();
    j2["data"] = {{"n_samples", "lots"}};
    CHECK_THROWS_WITH(parse_scenario(j2), ContainsSubstring("data.n_samples"));
}

TEST_CASE("parse_scenario: enumerated strings reject unknown values") {
    json j = minimal();
    j["topology"] = "mesh";
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["data"] = {{"partition", "dirichlet"}};
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["attack"] = {{"kind", "label_flip"}};
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["attack"] = {{"kind", "none"}, {"selection", "random"}};
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["aggregation"] = {{"epsilon_mode", "relative"}};
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);
}

TEST_CASE("parse_scenario: null context_shift disengages the overlay") {
    json j = minimal();
    j["attack"] = {{"kind", "sign_flip"}, {"fixed_ids", {0}}, {"context_shift", nullptr}};
    const ScenarioConfig cfg = parse_scenario(j);
    CHECK_FALSE(cfg.attack.context_shift.has_value());

    json j2 = minimal();
    j2["attack"] = {{"kind", "sign_flip"},
                    {"fixed_ids", {0}},
                    {"context_shift", {{"failed_auth_delta", 0.7}}}};
    const ScenarioConfig cfg2 = parse_scenario(j2);
    REQUIRE(cfg2.attack.context_shift.has_value());
    CHECK(cfg2.attack.context_shift->failed_auth_delta == 0.7);
    CHECK(cfg2.attack.context_shift->request_rate_factor == 3.0);
}

TEST_CASE("parse_scenario: server failure requires the centralized topology") {
    json j = minimal();
    j["failure"] = {{"server_failure_round", 1}};
    CHECK_THROWS_WITH(parse_scenario(j), ContainsSubstring("centralized_fedavg"));

    j["topology"] = "centralized_fedavg";
    const ScenarioConfig cfg = parse_scenario(j);
    REQUIRE(cfg.failure.server_failure_round.has_value());
    CHECK(*cfg.failure.server_failure_round == 1);
}

TEST_CASE("parse_scenario: cross-field validation rejects bad settings") {
    json j = minimal();
    j["rounds"] = 0;
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["data"] = {{"holdout_fraction", 1.0}};
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["data"] = {{"source", "idx"}};
    CHECK_THROWS_AS(parse_scenario(j), ConfigError); // images/labels missing

    j = minimal();
    j["attack"] = {{"kind", "sign_flip"}, {"fixed_ids", {99}}};
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["trust"] = {{"alpha", 0.0}};
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);

    j = minimal();
    j["failure"] = {{"device_dropout_prob", 1.5}};
    CHECK_THROWS_AS(parse_scenario(j), ConfigError);
}

TEST_CASE("scenario_to_json: echo round-trips through the parser") {
    json j = minimal();
    j["topology"] = "bfl_plain";
    j["master_seed"] = 777;
    j["data"] = {{"n_samples", 800}, {"partition", "label_shard"}, {"shards_per_device", 3}};
    j["train"] = {{"epochs", 2}, {"learning_rate", 0.05}};
    j["aggregation"] = {{"epsilon_mode", "absolute"}, {"epsilon", 4.5}};
    j["attack"] = {{"kind", "scale"}, {"gamma", -4.0}, {"fixed_ids", {1, 2}}};
    j["failure"] = {{"device_dropout_prob", 0.25}};

    const ScenarioConfig cfg = parse_scenario(j);
    const json echo = scenario_to_json(cfg);
    const ScenarioConfig again = parse_scenario(echo);

    CHECK(again.topology == cfg.topology);
    CHECK(again.master_seed == cfg.master_seed);
    CHECK(again.data.n_samples == cfg.data.n_samples);
    CHECK(again.data.partition == cfg.data.partition);
    CHECK(again.data.shards_per_device == cfg.data.shards_per_device);
    CHECK(again.train.epochs == cfg.train.epochs);
    CHECK(again.train.learning_rate == cfg.train.learning_rate);
    CHECK(again.aggregation.epsilon_mode == cfg.aggregation.epsilon_mode);
    CHECK(again.aggregation.epsilon == cfg.aggregation.epsilon);
    CHECK(again.attack.kind == cfg.attack.kind);
    CHECK(again.attack.gamma == cfg.attack.gamma);
    CHECK(again.attack.fixed_ids == cfg.attack.fixed_ids);
    CHECK(again.failure.device_dropout_prob == cfg.failure.device_dropout_prob);
    CHECK(scenario_to_json(again) == echo);
}

TEST_CASE("load_scenario_file: missing and malformed files") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "ztrust_test_scenario";
    fs::create_directories(dir);

    CHECK_THROWS_AS(load_scenario_file((dir / "nope.json").string()), IoError);

    const fs::path bad = dir / "bad.json";
    std::ofstream(bad) << "{ not json";
    CHECK_THROWS_WITH(load_scenario_file(bad.string()), ContainsSubstring("parse error"));

    const fs::path good = dir / "good.json";
    std::ofstream(good) << minimal().dump();
    const ScenarioConfig cfg = load_scenario_file(good.string());
    CHECK(cfg.n_devices == 4);
    fs::remove_all(dir);
}
