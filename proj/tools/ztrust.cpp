// Command-line front end: scenario execution, scenario comparison, ledger
// validation, and fixture generation. Exit codes: 0 success, 1 invalid
// ledger, 2 config error, 3 I/O error.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ztrust/data.hpp"
#include "ztrust/errors.hpp"
#include "ztrust/hash.hpp"
#include "ztrust/idx.hpp"
#include "ztrust/ledger.hpp"
#include "ztrust/scenario.hpp"
#include "ztrust/simulator.hpp"

namespace {

namespace fs = std::filesystem;

struct Options {
    std::string config;
    std::string config_b;
    std::string ledger_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

void emit(const Options& opt, const std::string& key, const std::string& value) {
    if (!opt.quiet) std::cout << key << "=" << value << "\n";
}

void emit(const Options& opt, const std::string& key, double value) {
    if (!opt.quiet) std::cout << key << "=" << ztrust::detail::format_double(value) << "\n";
}

ztrust::ScenarioConfig load_config(const Options& opt, const std::string& path) {
    ztrust::ScenarioConfig cfg = ztrust::load_scenario_file(path);
    if (opt.seed) cfg.master_seed = *opt.seed;
    return cfg;
}

fs::path prepare_out_dir(const std::string& out_dir) {
    fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw ztrust::IoError("cannot create output directory " + out_dir);
    }
    return dir;
}

void write_text_file(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ztrust::IoError("cannot open " + path.string() + " for writing");
    out << body;
    if (!out) throw ztrust::IoError("failed writing " + path.string());
}

double mean_delay(const std::vector<ztrust::RoundMetrics>& rounds) {
    if (rounds.empty()) return 0.0;
    double total = 0.0;
    for (const auto& m : rounds) total += m.delay_s;
    return total / static_cast<double>(rounds.size());
}

int cmd_run(const Options& opt) {
    const ztrust::ScenarioConfig cfg = load_config(opt, opt.config);
    const ztrust::RunResult result = ztrust::run_scenario(cfg);
    const fs::path dir = prepare_out_dir(opt.out_dir);

    std::ostringstream csv;
    ztrust::write_metrics_csv(csv, result.rounds, cfg.n_devices);
    write_text_file(dir / "metrics.csv", csv.str());
    result.ledger.export_file((dir / "ledger.jsonl").string());
    write_text_file(dir / "metadata.json", result.metadata.dump(2) + "\n");

    emit(opt, "rounds", std::to_string(result.rounds.size()));
    emit(opt, "final_accuracy", result.rounds.empty() ? 0.0 : result.rounds.back().accuracy);
    emit(opt, "mean_delay_s", mean_delay(result.rounds));
    emit(opt, "oscillation", ztrust::oscillation(result.rounds));
    std::int64_t degenerate = 0;
    for (const auto& m : result.rounds) degenerate += m.degenerate ? 1 : 0;
    emit(opt, "degenerate_rounds", std::to_string(degenerate));
    for (const auto& [k, rate] : ztrust::detection_rate(result.rounds)) {
        emit(opt, "detection_rate_k" + std::to_string(k), rate);
    }
    emit(opt, "metrics", (dir / "metrics.csv").string());
    emit(opt, "ledger", (dir / "ledger.jsonl").string());
    emit(opt, "metadata", (dir / "metadata.json").string());
    return 0;
}

int cmd_compare(const Options& opt) {
    const ztrust::ScenarioConfig cfg_a = load_config(opt, opt.config);
    const ztrust::ScenarioConfig cfg_b = load_config(opt, opt.config_b);
    if (cfg_a.rounds != cfg_b.rounds) {
        throw ztrust::ConfigError("config: compare requires equal 'rounds' (" +
                                  std::to_string(cfg_a.rounds) + " vs " +
                                  std::to_string(cfg_b.rounds) + ")");
    }
    const ztrust::RunResult a = ztrust::run_scenario(cfg_a);
    const ztrust::RunResult b = ztrust::run_scenario(cfg_b);
    const fs::path dir = prepare_out_dir(opt.out_dir);

    std::ostringstream csv;
    csv << "round,accuracy_a,delay_s_a,degenerate_a,accuracy_b,delay_s_b,degenerate_b\n";
    for (std::size_t i = 0; i < a.rounds.size(); ++i) {
        const auto& ra = a.rounds[i];
        const auto& rb = b.rounds[i];
        csv << ra.round << ',' << ztrust::detail::format_double(ra.accuracy) << ','
            << ztrust::detail::format_double(ra.delay_s) << ',' << (ra.degenerate ? 1 : 0) << ','
            << ztrust::detail::format_double(rb.accuracy) << ','
            << ztrust::detail::format_double(rb.delay_s) << ',' << (rb.degenerate ? 1 : 0)
            << '\n';
    }
    write_text_file(dir / "compare.csv", csv.str());

    const double final_gap = (a.rounds.empty() ? 0.0 : a.rounds.back().accuracy) -
                             (b.rounds.empty() ? 0.0 : b.rounds.back().accuracy);
    const double delay_gap = mean_delay(a.rounds) - mean_delay(b.rounds);
    const double osc_gap = ztrust::oscillation(a.rounds) - ztrust::oscillation(b.rounds);
    nlohmann::json summary = {{"final_accuracy_gap", final_gap},
                              {"mean_delay_gap_s", delay_gap},
                              {"oscillation_gap", osc_gap}};
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");

    emit(opt, "final_accuracy_gap", final_gap);
    emit(opt, "mean_delay_gap_s", delay_gap);
    emit(opt, "oscillation_gap", osc_gap);
    emit(opt, "compare", (dir / "compare.csv").string());
    emit(opt, "summary", (dir / "summary.json").string());
    return 0;
}

int cmd_validate_ledger(const Options& opt) {
    const ztrust::Ledger ledger = ztrust::Ledger::import_file(opt.ledger_path);
    const auto bad = ledger.validate_chain();
    if (bad) {
        std::cout << "invalid_block=" << *bad << "\n";
        return 1;
    }
    emit(opt, "valid", "true");
    emit(opt, "blocks", std::to_string(ledger.blocks().size()));
    return 0;
}

int cmd_gen_data(const Options& opt) {
    const ztrust::ScenarioConfig cfg = load_config(opt, opt.config);
    const ztrust::Dataset ds = ztrust::gen_synthetic(
        static_cast<std::size_t>(cfg.data.n_samples), static_cast<int>(cfg.data.n_features),
        static_cast<int>(cfg.data.n_classes), cfg.data.class_separation,
        ztrust::derive_seed(cfg.master_seed, 0, 0, "data"));
    const fs::path dir = prepare_out_dir(opt.out_dir);
    const fs::path images = dir / "data-images.idx";
    const fs::path labels = dir / "data-labels.idx";
    ztrust::save_idx(ds, images.string(), labels.string());
    emit(opt, "samples", std::to_string(ds.samples.size()));
    emit(opt, "features", std::to_string(ds.n_features));
    emit(opt, "classes", std::to_string(ds.n_classes));
    emit(opt, "images", images.string());
    emit(opt, "labels", labels.string());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Options opt;
    CLI::App app{"Zero-trust blockchain federated-learning simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run one scenario and write artifacts");
    run->add_option("--config", opt.config, "Scenario config file")->required();
    run->add_option("--out", opt.out_dir, "Output directory");
    run->add_option("--seed", opt.seed, "Override master_seed");
    run->add_flag("--quiet", opt.quiet, "Suppress stdout summary");

    auto* compare = app.add_subcommand("compare", "Run two scenarios and diff them");
    compare->add_option("config_a", opt.config, "First scenario config")->required();
    compare->add_option("config_b", opt.config_b, "Second scenario config")->required();
    compare->add_option("--out", opt.out_dir, "Output directory");
    compare->add_option("--seed", opt.seed, "Override master_seed for both runs");
    compare->add_flag("--quiet", opt.quiet, "Suppress stdout summary");

    auto* validate = app.add_subcommand("validate-ledger", "Check an exported ledger");
    validate->add_option("path", opt.ledger_path, "Ledger export file")->required();
    validate->add_flag("--quiet", opt.quiet, "Suppress stdout summary");

    auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as IDX fixtures");
    gen->add_option("--config", opt.config, "Scenario config file (data section + seed)")
        ->required();
    gen->add_option("--out", opt.out_dir, "Output directory");
    gen->add_option("--seed", opt.seed, "Override master_seed");
    gen->add_flag("--quiet", opt.quiet, "Suppress stdout summary");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(opt);
        if (compare->parsed()) return cmd_compare(opt);
        if (validate->parsed()) return cmd_validate_ledger(opt);
        if (gen->parsed()) return cmd_gen_data(opt);
    } catch (const ztrust::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ztrust::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ztrust::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
