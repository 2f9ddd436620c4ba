// Command-line front end: sequences the analysis stages described by a
// JSON config and writes per-stage JSON results, plot-data CSVs, and a
// combined text report.

#include <iostream>

#include <CLI11.hpp>

#include "panelfe/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"panelfe: panel fixed-effects, threshold, mediation, and placebo analysis"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
    std::vector<std::string> stages;

    app.add_option("--config", config_path, "JSON analysis config")->required();
    app.add_option("--out", out_dir, "output directory");
    app.add_option_function<std::uint64_t>(
           "--seed", [&](std::uint64_t s) { seed = s; seed_set = true; }, "override the config seed");
    app.add_option("--threads", threads, "worker threads for stochastic stages");

    auto* report = app.add_subcommand("report", "run every configured stage");
    report->add_option("--stages", stages, "subset of stages to run")->delimiter(',');

    // one subcommand per analysis; each runs a single pipeline stage
    for (const auto& stage : panelfe::kAllStages) app.add_subcommand(stage, "run the " + stage + " stage");

    CLI11_PARSE(app, argc, argv);

    try {
        panelfe::AnalysisConfig cfg = panelfe::AnalysisConfig::load(config_path);
        if (seed_set) {
            cfg.seed = seed;
            cfg.has_seed = true;
        }
        std::vector<std::string> run_stages;
        if (report->parsed()) {
            run_stages = stages;
        } else {
            for (const auto& stage : panelfe::kAllStages)
                if (app.get_subcommand(stage)->parsed()) run_stages.push_back(stage);
        }
        panelfe::run_pipeline(cfg, out_dir, run_stages, threads);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
