// Command-line driver for the homogenization laboratory.
//
// Exit codes: 0 every asserted verdict passed; 1 at least one verdict
// failed; 2 usage or configuration error; 3 a solver failed at runtime.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hjhom/harness.hpp"
#include "hjhom/version.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_verdict = 1;
constexpr int exit_usage = 2;
constexpr int exit_solver = 3;

struct Overrides {
    int workers = 0;
    std::string out;
    std::int64_t seed = -1;
    bool has_seed = false;
};

hjhom::ExperimentConfig load_and_normalize(const std::string& path, const Overrides& ov,
                                           std::vector<std::string>& errors) {
    hjhom::json raw = hjhom::load_config_file(path, errors);
    if (!errors.empty()) return {};
    // overrides land in the raw document so the normalized echo and the
    // manifest digest reflect what actually ran
    if (ov.workers > 0) raw["workers"] = ov.workers;
    if (!ov.out.empty()) raw["out"] = ov.out;
    if (ov.has_seed) raw["seed"] = ov.seed;
    return hjhom::normalize_config(raw, errors);
}

int cmd_run(const std::string& path, const Overrides& ov) {
    std::vector<std::string> errors;
    hjhom::ExperimentConfig cfg = load_and_normalize(path, ov, errors);
    if (!errors.empty()) {
        std::fprintf(stderr, "%s: invalid config\n", path.c_str());
        for (const auto& e : errors) std::fprintf(stderr, "  %s\n", e.c_str());
        return exit_usage;
    }
    hjhom::ExperimentArtifact art;
    try {
        art = hjhom::run_experiment(cfg);
    } catch (const hjhom::InvalidSpec& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return exit_usage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "solver error: %s\n", e.what());
        return exit_solver;
    }
    int passed = 0;
    for (const auto& v : art.verdicts) {
        std::printf("%s  %s: %s\n", v.pass ? "pass" : "FAIL", v.name.c_str(),
                    v.detail.c_str());
        passed += v.pass ? 1 : 0;
    }
    std::printf("%d/%zu verdicts passed; artifacts in %s\n", passed, art.verdicts.size(),
                art.out_dir.c_str());
    return art.all_pass ? exit_ok : exit_verdict;
}

int cmd_validate(const std::string& path) {
    std::vector<std::string> errors;
    hjhom::ExperimentConfig cfg = load_and_normalize(path, {}, errors);
    if (!errors.empty()) {
        std::fprintf(stderr, "%s: invalid config\n", path.c_str());
        for (const auto& e : errors) std::fprintf(stderr, "  %s\n", e.c_str());
        return exit_usage;
    }
    std::printf("%s\n", cfg.normalized.dump(2).c_str());
    return exit_ok;
}

int cmd_table_show(const std::string& path) {
    hjhom::EffectiveHamiltonianTable tab;
    try {
        tab = hjhom::load_table(path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return exit_usage;
    }
    std::printf("schema          %s\n", hjhom::table_schema);
    std::printf("slope dim       %d\n", tab.pdim);
    std::printf("p1 axis         [%s, %s] x %zu\n", hjhom::fmt(tab.p1.front()).c_str(),
                hjhom::fmt(tab.p1.back()).c_str(), tab.p1.size());
    if (tab.pdim == 2)
        std::printf("p2 axis         [%s, %s] x %zu\n", hjhom::fmt(tab.p2.front()).c_str(),
                    hjhom::fmt(tab.p2.back()).c_str(), tab.p2.size());
    std::printf("r axis          [%s, %s] x %zu\n", hjhom::fmt(tab.r.front()).c_str(),
                hjhom::fmt(tab.r.back()).c_str(), tab.r.size());
    hjhom::real lo = tab.value.front(), hi = lo, unc = 0;
    for (hjhom::real v : tab.value) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (hjhom::real u : tab.uncertainty) unc = std::max(unc, u);
    std::printf("values          [%s, %s]\n", hjhom::fmt(lo).c_str(), hjhom::fmt(hi).c_str());
    std::printf("max uncertainty %s\n", hjhom::fmt(unc).c_str());
    std::printf("model digest    %s\n", tab.model_digest.c_str());
    std::printf("env seed        %llu\n", static_cast<unsigned long long>(tab.env_seed));
    std::printf("schedule        delta0 %s, %d halvings, h %s\n",
                hjhom::fmt(tab.delta0).c_str(), tab.halvings, hjhom::fmt(tab.h).c_str());
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical homogenization laboratory for coupled Hamilton-Jacobi systems"};
    app.require_subcommand(1);

    Overrides ov;
    std::string config_path, table_path;

    CLI::App* run = app.add_subcommand("run", "run an experiment from a config file");
    run->add_option("config", config_path, "config file (text or JSON)")->required();
    run->add_option("--workers", ov.workers, "worker thread budget");
    run->add_option("--out", ov.out, "output directory override");
    std::int64_t seed_opt = 0;
    CLI::Option* seed_flag =
        run->add_option("--seed-override", seed_opt, "replace the config seed");

    CLI::App* validate = app.add_subcommand("validate", "check a config and echo defaults");
    validate->add_option("config", config_path, "config file (text or JSON)")->required();

    CLI::App* table = app.add_subcommand("table", "inspect stored tables");
    CLI::App* show = table->add_subcommand("show", "summarize a table file");
    show->add_option("table", table_path, "table JSON file")->required();
    table->require_subcommand(1);

    CLI::App* ver = app.add_subcommand("version", "print the version");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    if (ver->parsed()) {
        std::printf("hjhom %s\n", hjhom::version());
        return exit_ok;
    }
    if (run->parsed()) {
        if (seed_flag->count() > 0) {
            ov.seed = seed_opt;
            ov.has_seed = true;
        }
        return cmd_run(config_path, ov);
    }
    if (validate->parsed()) return cmd_validate(config_path);
    if (show->parsed()) return cmd_table_show(table_path);
    return exit_usage;
}
