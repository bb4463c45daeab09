#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "catch2/catch_amalgamated.hpp"
#include "json.hpp"
#include "ztrust/idx.hpp"

using Catch::Matchers::ContainsSubstring;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "ztrust_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

CliResult run_cli(const fs::path& dir, const std::string& args) {
    const fs::path out_f = dir / "_stdout.txt";
    const fs::path err_f = dir / "_stderr.txt";
    const std::string cmd = std::string("\"") + ZTRUST_CLI_BIN + "\" " + args + " > \"" +
                            out_f.string() + "\" 2> \"" + err_f.string() + "\"";
    const int rc = std::system(cmd.c_str());
    CliResult r;
    r.code = rc == -1 ? -1 : (WIFEXITED(rc) ? WEXITSTATUS(rc) : -2);
    r.out = slurp(out_f);
    r.err = slurp(err_f);
    return r;
}

json small_config() {
    return json{{"n_devices", 4},
                {"rounds", 2},
                {"master_seed", 5},
                {"data",
                 {{"n_samples", 200},
                  {"n_features", 6},
                  {"n_classes", 3},
                  {"class_separation", 3.0}}},
                {"train", {{"epochs", 1}, {"batch_size", 10}, {"learning_rate", 0.05}}}};
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& j) {
    const fs::path p = dir / name;
    std::ofstream(p) << j.dump(2);
    return p;
}

}  // namespace

TEST_CASE("cli run: writes the three artifacts and a key=value summary") {
    const fs::path dir = fresh_dir("run_ok");
    const fs::path cfg = write_config(dir, "cfg.json", small_config());
    const fs::path out = dir / "out";

    const CliResult r = run_cli(dir, "run --config \"" + cfg.string() + "\" --out \"" +
                                         out.string() + "\"");
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(out / "metrics.csv"));
    CHECK(fs::exists(out / "ledger.jsonl"));
    CHECK(fs::exists(out / "metadata.json"));
    CHECK_THAT(r.out, ContainsSubstring("rounds=2"));
    CHECK_THAT(r.out, ContainsSubstring("final_accuracy="));
    CHECK_THAT(r.out, ContainsSubstring("mean_delay_s="));

    const std::string metrics = slurp(out / "metrics.csv");
    CHECK_THAT(metrics,
               ContainsSubstring("round,accuracy,delay_s,degenerate,tp,fp,fn,tn,discarded"));
    const json meta = json::parse(slurp(out / "metadata.json"));
    CHECK(meta.at("config").at("n_devices") == 4);

    SECTION("a second run with the same seed reproduces metrics byte for byte") {
        const fs::path out2 = dir / "out2";
        const CliResult r2 = run_cli(dir, "run --config \"" + cfg.string() + "\" --out \"" +
                                              out2.string() + "\" --quiet");
        REQUIRE(r2.code == 0);
        CHECK(r2.out.empty());
        CHECK(slurp(out2 / "metrics.csv") == metrics);
        CHECK(slurp(out2 / "ledger.jsonl") == slurp(out / "ledger.jsonl"));
    }

    SECTION("a seed override changes the trajectory") {
        const fs::path out3 = dir / "out3";
        const CliResult r3 = run_cli(dir, "run --config \"" + cfg.string() + "\" --out \"" +
                                              out3.string() + "\" --seed 99");
        REQUIRE(r3.code == 0);
        CHECK(slurp(out3 / "metrics.csv") != metrics);
    }
}

TEST_CASE("cli run: config errors exit 2 and name the problem") {
    const fs::path dir = fresh_dir("run_bad_cfg");

    json missing = small_config();
    missing.erase("n_devices");
    const fs::path cfg = write_config(dir, "missing.json", missing);
    const CliResult r = run_cli(dir, "run --config \"" + cfg.string() + "\"");
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("n_devices"));

    json unknown = small_config();
    unknown["typo_key"] = 1;
    const fs::path cfg2 = write_config(dir, "unknown.json", unknown);
    const CliResult r2 = run_cli(dir, "run --config \"" + cfg2.string() + "\"");
    CHECK(r2.code == 2);
    CHECK_THAT(r2.err, ContainsSubstring("typo_key"));
}

TEST_CASE("cli run: I/O failures exit 3") {
    const fs::path dir = fresh_dir("run_bad_io");

    const CliResult r = run_cli(dir, "run --config \"" + (dir / "absent.json").string() + "\"");
    CHECK(r.code == 3);
    CHECK_THAT(r.err, ContainsSubstring("cannot open config"));

    // Routing the output directory through a regular file cannot work.
    const fs::path blocker = dir / "blocker.txt";
    std::ofstream(blocker) << "plain file";
    const fs::path cfg = write_config(dir, "cfg.json", small_config());
    const CliResult r2 = run_cli(dir, "run --config \"" + cfg.string() + "\" --out \"" +
                                          (blocker / "sub").string() + "\"");
    CHECK(r2.code == 3);
}

TEST_CASE("cli validate-ledger: accepts a fresh export and pinpoints tampering") {
    const fs::path dir = fresh_dir("validate");
    const fs::path cfg = write_config(dir, "cfg.json", small_config());
    const fs::path out = dir / "out";
    REQUIRE(run_cli(dir, "run --config \"" + cfg.string() + "\" --out \"" + out.string() +
                             "\" --quiet")
                .code == 0);
    const fs::path ledger = out / "ledger.jsonl";

    const CliResult ok = run_cli(dir, "validate-ledger \"" + ledger.string() + "\"");
    REQUIRE(ok.code == 0);
    CHECK_THAT(ok.out, ContainsSubstring("valid=true"));
    CHECK_THAT(ok.out, ContainsSubstring("blocks=3"));

    SECTION("one flipped hex digit in a stored hash invalidates the chain") {
        std::string text = slurp(ledger);
        const std::string needle = "\"block_hash\":\"";
        const std::size_t at = text.rfind(needle);
        REQUIRE(at != std::string::npos);
        char& digit = text[at + needle.size()];
        digit = digit == '0' ? '1' : '0';
        std::ofstream(dir / "tampered.jsonl", std::ios::binary) << text;

        const CliResult bad =
            run_cli(dir, "validate-ledger \"" + (dir / "tampered.jsonl").string() + "\"");
        CHECK(bad.code == 1);
        CHECK_THAT(bad.out, ContainsSubstring("invalid_block="));
    }

    SECTION("an empty or unparseable file is a format error") {
        std::ofstream(dir / "empty.jsonl").flush();
        CHECK(run_cli(dir, "validate-ledger \"" + (dir / "empty.jsonl").string() + "\"").code ==
              3);
        std::ofstream(dir / "garbage.jsonl") << "not json at all\n";
        CHECK(run_cli(dir, "validate-ledger \"" + (dir / "garbage.jsonl").string() + "\"").code ==
              3);
    }
}

TEST_CASE("cli compare: a config against itself gaps to zero") {
    const fs::path dir = fresh_dir("compare");
    const fs::path cfg = write_config(dir, "cfg.json", small_config());
    const fs::path out = dir / "out";

    const CliResult r = run_cli(dir, "compare \"" + cfg.string() + "\" \"" + cfg.string() +
                                         "\" --out \"" + out.string() + "\"");
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK_THAT(r.out, ContainsSubstring("final_accuracy_gap=0"));
    CHECK(fs::exists(out / "compare.csv"));

    const json summary = json::parse(slurp(out / "summary.json"));
    CHECK(summary.at("final_accuracy_gap").get<double>() == 0.0);
    CHECK(summary.at("mean_delay_gap_s").get<double>() == 0.0);
    CHECK(summary.at("oscillation_gap").get<double>() == 0.0);

    const std::string csv = slurp(out / "compare.csv");
    CHECK_THAT(csv, ContainsSubstring(
                        "round,accuracy_a,delay_s_a,degenerate_a,accuracy_b,delay_s_b,"
                        "degenerate_b"));
}

TEST_CASE("cli compare: differing round counts are a config error") {
    const fs::path dir = fresh_dir("compare_rounds");
    const fs::path a = write_config(dir, "a.json", small_config());
    json b_cfg = small_config();
    b_cfg["rounds"] = 3;
    const fs::path b = write_config(dir, "b.json", b_cfg);

    const CliResult r = run_cli(dir, "compare \"" + a.string() + "\" \"" + b.string() + "\"");
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("rounds"));
}

TEST_CASE("cli gen-data: emits a loadable IDX pair") {
    const fs::path dir = fresh_dir("gen_data");
    const fs::path cfg = write_config(dir, "cfg.json", small_config());
    const fs::path out = dir / "fixtures";

    const CliResult r = run_cli(dir, "gen-data --config \"" + cfg.string() + "\" --out \"" +
                                         out.string() + "\"");
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK_THAT(r.out, ContainsSubstring("samples=200"));

    const ztrust::Dataset ds = ztrust::load_idx((out / "data-images.idx").string(),
                                                (out / "data-labels.idx").string());
    CHECK(ds.samples.size() == 200);
    CHECK(ds.n_features == 6);
    CHECK(ds.n_classes == 3);

    SECTION("a run can consume the generated fixtures") {
        json idx_cfg{{"n_devices", 4},
                     {"rounds", 1},
                     {"data",
                      {{"source", "idx"},
                       {"images", (out / "data-images.idx").string()},
                       {"labels", (out / "data-labels.idx").string()}}}};
        const fs::path cfg2 = write_config(dir, "idx.json", idx_cfg);
        const CliResult r2 = run_cli(dir, "run --config \"" + cfg2.string() + "\" --out \"" +
                                              (dir / "idx_out").string() + "\"");
        CAPTURE(r2.err);
        CHECK(r2.code == 0);
    }
}

TEST_CASE("cli: a subcommand is required") {
    const fs::path dir = fresh_dir("no_subcommand");
    CHECK(run_cli(dir, "").code != 0);
    CHECK(run_cli(dir, "frobnicate").code != 0);
}
