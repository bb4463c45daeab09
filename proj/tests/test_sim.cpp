#include <cstdlib>
#include <set>
#include <sstream>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "json.hpp"
#include "ztrust/scenario.hpp"
#include "ztrust/simulator.hpp"

using namespace ztrust;
using nlohmann::json;

namespace {

json desk_json() {
    return json{{"n_devices", 8},
                {"rounds", 3},
                {"master_seed", 11},
                {"data",
                 {{"n_samples", 600},
                  {"n_features", 8},
                  {"n_classes", 3},
                  {"class_separation", 3.0}}},
                {"train", {{"epochs", 1}, {"batch_size", 10}, {"learning_rate", 0.05}}}};
}

std::string csv_of(const std::vector<RoundMetrics>& rounds, std::int64_t n_devices) {
    std::ostringstream out;
    write_metrics_csv(out, rounds, n_devices);
    return out.str();
}

}  // namespace

TEST_CASE("run: one metrics row per round, one block per round plus genesis") {
    const ScenarioConfig cfg = parse_scenario(desk_json());
    Simulator sim(cfg);
    const auto rounds = sim.run();

    REQUIRE(rounds.size() == 3);
    for (std::size_t r = 0; r < rounds.size(); ++r) {
        const auto& m = rounds[r];
        CHECK(m.round == static_cast<std::int64_t>(r));
        CHECK(m.accuracy >= 0.0);
        CHECK(m.accuracy <= 1.0);
        CHECK(m.delay_s > 0.0);
        CHECK_FALSE(m.degenerate);
        CHECK(m.tp + m.fp + m.fn + m.tn == cfg.n_devices); // no dropout: all participate
        CHECK(m.true_malicious.empty());
        CHECK(m.tp == 0);
        REQUIRE(m.trust.size() == static_cast<std::size_t>(cfg.n_devices));
        for (double t : m.trust) {
            CHECK(t >= 0.0);
            CHECK(t <= 1.0);
        }
    }

    const auto& blocks = sim.ledger().blocks();
    REQUIRE(blocks.size() == 4);
    CHECK(blocks[0].round == -1);
    for (std::size_t b = 1; b < blocks.size(); ++b) {
        CHECK(blocks[b].round == static_cast<std::int64_t>(b) - 1);
    }
    CHECK_FALSE(sim.ledger().validate_chain().has_value());
}

TEST_CASE("run: clean training beats chance on separable data") {
    json j = desk_json();
    j["rounds"] = 8;
    j["train"] = {{"epochs", 2}, {"batch_size", 10}, {"learning_rate", 0.1}};
    const auto result = run_scenario(parse_scenario(j));
    CHECK(result.rounds.back().accuracy > 0.5); // 3 classes: chance is 1/3
}

TEST_CASE("run: identical configs give byte-identical metrics") {
    const ScenarioConfig cfg = parse_scenario(desk_json());
    const auto a = run_scenario(cfg);
    const auto b = run_scenario(cfg);
    CHECK(csv_of(a.rounds, cfg.n_devices) == csv_of(b.rounds, cfg.n_devices));
    CHECK(a.ledger.blocks().back().block_hash == b.ledger.blocks().back().block_hash);
}

TEST_CASE("run: different seeds give different trajectories") {
    json j = desk_json();
    const auto a = run_scenario(parse_scenario(j));
    j["master_seed"] = 12;
    const auto b = run_scenario(parse_scenario(j));
    CHECK(csv_of(a.rounds, 8) != csv_of(b.rounds, 8));
}

TEST_CASE("run: robust pipeline reduces to plain averaging when nothing is flagged") {
    // One behavior profile with zero jitter puts every context point at the
    // same spot: a single cluster, all anomaly scores zero, uniform trust.
    // With a huge absolute epsilon and a zero trust floor the robust
    // aggregator keeps everyone at shard weight, exactly like plain FedAvg.
    json j = desk_json();
    j["context"] = {{"n_profiles", 1}, {"sigma", 0.0}};
    j["aggregation"] = {{"epsilon_mode", "absolute"},
                        {"epsilon", 1e18},
                        {"trust_threshold", 0.0},
                        {"trust_weighted", true}};
    j["topology"] = "bfl_robust";
    const auto robust = run_scenario(parse_scenario(j));
    j["topology"] = "bfl_plain";
    const auto plain = run_scenario(parse_scenario(j));

    REQUIRE(robust.rounds.size() == plain.rounds.size());
    for (std::size_t r = 0; r < robust.rounds.size(); ++r) {
        CHECK(robust.rounds[r].accuracy == plain.rounds[r].accuracy);
        CHECK(robust.rounds[r].discarded.empty());
        // The detection pipeline costs time even when it flags nothing.
        CHECK(robust.rounds[r].delay_s > plain.rounds[r].delay_s);
    }
}

TEST_CASE("run: server failure freezes the centralized baseline") {
    json j = desk_json();
    j["topology"] = "centralized_fedavg";
    j["rounds"] = 5;
    j["failure"] = {{"server_failure_round", 2}};
    const auto result = run_scenario(parse_scenario(j));

    REQUIRE(result.rounds.size() == 5);
    CHECK_FALSE(result.rounds[0].degenerate);
    CHECK_FALSE(result.rounds[1].degenerate);
    for (std::size_t r = 2; r < 5; ++r) {
        CHECK(result.rounds[r].degenerate);
        CHECK(result.rounds[r].accuracy == result.rounds[1].accuracy);
    }

    SECTION("failure at round zero pins accuracy at the untrained model") {
        j["failure"] = {{"server_failure_round", 0}};
        const auto frozen = run_scenario(parse_scenario(j));
        for (const auto& m : frozen.rounds) {
            CHECK(m.degenerate);
            CHECK(m.accuracy == frozen.rounds[0].accuracy);
        }
    }
}

TEST_CASE("run: total dropout degenerates every round but still mines blocks") {
    json j = desk_json();
    j["failure"] = {{"device_dropout_prob", 1.0}};
    const auto result = run_scenario(parse_scenario(j));
    for (const auto& m : result.rounds) {
        CHECK(m.degenerate);
        CHECK(m.tp + m.fp + m.fn + m.tn == 0);
        CHECK(m.accuracy == result.rounds[0].accuracy);
        CHECK(m.delay_s > 0.0); // mining happens regardless
    }
    CHECK(result.ledger.blocks().size() == result.rounds.size() + 1);
    for (std::size_t b = 1; b < result.ledger.blocks().size(); ++b) {
        CHECK(result.ledger.blocks()[b].records.empty());
    }
}

TEST_CASE("run: discarded devices come from that round's accepted records") {
    json j = desk_json();
    j["rounds"] = 4;
    j["attack"] = {{"kind", "sign_flip"}, {"fixed_ids", {0, 1}}};
    const auto result = run_scenario(parse_scenario(j));

    for (std::size_t r = 0; r < result.rounds.size(); ++r) {
        const auto& m = result.rounds[r];
        CHECK(m.true_malicious == std::vector<std::int64_t>{0, 1});
        std::set<std::int64_t> accepted;
        for (const auto& rec : result.ledger.blocks()[r + 1].records) {
            accepted.insert(rec.device_id);
        }
        for (std::int64_t dev : m.discarded) CHECK(accepted.count(dev) == 1);
        CHECK(m.tp + m.fn == 2); // both attackers participated
    }
    CHECK_FALSE(result.ledger.validate_chain().has_value());
}

TEST_CASE("round_delay: zero costs give zero delay; defaults follow the formula") {
    DelayParams zero;
    zero.t_train_per_sample = 0.0;
    zero.t_upload_per_update = 0.0;
    zero.t_verify_per_update = 0.0;
    zero.t_mine_per_block = 0.0;
    zero.t_cluster_per_point = 0.0;
    zero.t_merge_per_cluster = 0.0;
    zero.t_trust_per_device = 0.0;
    const std::vector<std::int64_t> samples{100, 200};
    CHECK(round_delay(zero, samples, 2, 10, 4, 5) == 0.0);

    const DelayParams d; // defaults
    // max(100*0.001, 200*0.001) + 0.05 upload + 2*0.002 verify + 0.5 mine
    // + 10*0.005 cluster + 4*0.005 merge + 5*0.01 trust
    const double want = 0.2 + 0.05 + 0.004 + 0.5 + 0.05 + 0.02 + 0.05;
    CHECK(round_delay(d, samples, 2, 10, 4, 5) == Catch::Approx(want));

    const std::vector<std::int64_t> nobody;
    CHECK(round_delay(d, nobody, 0, 0, 0, 0) == Catch::Approx(0.5)); // mining only

    DelayParams bad = d;
    bad.t_mine_per_block = -1.0;
    CHECK_THROWS_AS(round_delay(bad, samples, 0, 0, 0, 0), std::invalid_argument);
}

TEST_CASE("device_baseline: profiles cycle and stay valid") {
    for (std::int64_t id = 0; id < 8; ++id) {
        CHECK_NOTHROW(device_baseline(id, 4).validate());
    }
    CHECK(device_baseline(0, 4).as_features() == device_baseline(4, 4).as_features());
    CHECK(device_baseline(0, 4).as_features() != device_baseline(1, 4).as_features());
    CHECK(device_baseline(5, 1).as_features() == device_baseline(0, 1).as_features());
    CHECK_THROWS_AS(device_baseline(-1, 4), std::invalid_argument);
    CHECK_THROWS_AS(device_baseline(0, 0), std::invalid_argument);
}

TEST_CASE("detection_rate: buckets by true-malicious count, skipping empty rounds") {
    std::vector<RoundMetrics> rounds(5);
    rounds[0].true_malicious = {};                       // clean round: ignored
    rounds[1].true_malicious = {3};
    rounds[1].tp = 1;
    rounds[2].true_malicious = {4};
    rounds[2].fn = 1;
    rounds[3].true_malicious = {1, 2};
    rounds[3].tp = 1;
    rounds[3].fn = 1;
    rounds[4].true_malicious = {6};                      // attacker dropped out: ignored

    const auto rates = detection_rate(rounds);
    REQUIRE(rates.size() == 2);
    CHECK(rates.at(1) == Catch::Approx(0.5));
    CHECK(rates.at(2) == Catch::Approx(0.5));
    CHECK(detection_rate(std::vector<RoundMetrics>{}).empty());
}

TEST_CASE("oscillation: population deviation of late-run accuracy deltas") {
    std::vector<RoundMetrics> rounds(4);
    rounds[0].accuracy = 0.0;
    rounds[1].accuracy = 0.0;
    rounds[2].accuracy = 0.4;
    rounds[3].accuracy = 0.2;
    // Late half: deltas 0.4 and -0.2; mean 0.1; population std 0.3.
    CHECK(oscillation(rounds) == Catch::Approx(0.3));

    CHECK(oscillation(std::vector<RoundMetrics>{}) == 0.0);
    CHECK(oscillation(std::vector<RoundMetrics>(1)) == 0.0);
    std::vector<RoundMetrics> flat(6);
    for (auto& m : flat) m.accuracy = 0.7;
    CHECK(oscillation(flat) == 0.0);
}

TEST_CASE("write_metrics_csv: exact header and row format") {
    std::vector<RoundMetrics> rounds(1);
    rounds[0].round = 0;
    rounds[0].accuracy = 0.5;
    rounds[0].delay_s = 1.25;
    rounds[0].degenerate = false;
    rounds[0].tp = 1;
    rounds[0].fp = 0;
    rounds[0].fn = 2;
    rounds[0].tn = 5;
    rounds[0].discarded = {1, 3};
    rounds[0].trust = {0.5, 0.25};

    std::ostringstream out;
    write_metrics_csv(out, rounds, 2);
    CHECK(out.str() ==
          "round,accuracy,delay_s,degenerate,tp,fp,fn,tn,discarded,trust_0,trust_1\n"
          "0,0.5,1.25,0,1,0,2,5,1;3,0.5,0.25\n");

    SECTION("one third round-trips at full precision") {
        std::vector<RoundMetrics> r(1);
        r[0].accuracy = 1.0 / 3.0;
        std::ostringstream o;
        write_metrics_csv(o, r, 0);
        CHECK(o.str().find("0.33333333333333331") != std::string::npos);
    }
}

TEST_CASE("metadata: echoes the config and the resolved quantities") {
    const ScenarioConfig cfg = parse_scenario(desk_json());
    Simulator sim(cfg);
    const json meta = sim.metadata();

    CHECK(meta.at("config").at("n_devices") == 8);
    CHECK(parse_scenario(meta.at("config")).master_seed == cfg.master_seed);

    const json& resolved = meta.at("resolved");
    CHECK(resolved.at("max_update_norm").get<double>() > 0.0);
    CHECK(resolved.at("param_dim") == (8 + 1) * 3);
    CHECK(resolved.at("n_train_samples") == 480);
    CHECK(resolved.at("n_test_samples") == 120);
    CHECK(resolved.at("trust_weighting") == "post_update");
    const auto sizes = resolved.at("shard_sizes").get<std::vector<std::int64_t>>();
    REQUIRE(sizes.size() == 8);
    std::int64_t total = 0;
    for (std::int64_t s : sizes) total += s;
    CHECK(total == 480);
}

TEST_CASE("run: worker count does not change the metrics") {
    const ScenarioConfig cfg = parse_scenario(desk_json());
    setenv("ZTRUST_THREADS", "1", 1);
    const auto serial = run_scenario(cfg);
    setenv("ZTRUST_THREADS", "8", 1);
    const auto threaded = run_scenario(cfg);
    unsetenv("ZTRUST_THREADS");
    CHECK(csv_of(serial.rounds, cfg.n_devices) == csv_of(threaded.rounds, cfg.n_devices));
}

TEST_CASE("Simulator: rejects more devices than training samples") {
    json j = desk_json();
    j["n_devices"] = 500;
    j["data"]["n_samples"] = 500; // 400 after holdout
    CHECK_THROWS_AS(Simulator(parse_scenario(j)), ConfigError);
}
