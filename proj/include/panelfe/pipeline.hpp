#pragma once

#include <filesystem>
#include <set>

#include "panelfe/report.hpp"
#include "panelfe/serialize.hpp"

namespace panelfe {

// Declarative description of the full analysis run, parsed from JSON.
struct AnalysisConfig {
    json raw;
    std::string data_path;
    std::uint64_t seed = 0;
    bool has_seed = false;
    std::map<std::string, Transform> transforms;
    ModelSpec baseline;

    static Transform parse_transform(const std::string& s) {
        if (s == "log") return Transform::log;
        if (s == "identity") return Transform::identity;
        throw ConfigError("unknown transform '" + s + "'");
    }

    Var make_var(const std::string& name) const {
        Var v;
        v.name = name;
        auto it = transforms.find(name);
        if (it != transforms.end()) v.transform = it->second;
        return v;
    }

    static AnalysisConfig parse(const json& j) {
        AnalysisConfig cfg;
        cfg.raw = j;
        if (j.contains("data")) cfg.data_path = j.at("data").get<std::string>();
        if (j.contains("seed")) {
            cfg.seed = j.at("seed").get<std::uint64_t>();
            cfg.has_seed = true;
        }
        if (j.contains("variables"))
            for (auto& [name, spec] : j.at("variables").items())
                cfg.transforms[name] = parse_transform(spec.value("transform", "identity"));

        if (j.contains("model")) {
            const json& m = j.at("model");
            cfg.baseline.dependent = cfg.make_var(m.at("dependent").get<std::string>());
            for (const auto& t : m.at("treatment")) cfg.baseline.treatments.push_back(cfg.make_var(t));
            if (m.contains("controls"))
                for (const auto& c : m.at("controls")) cfg.baseline.controls.push_back(cfg.make_var(c));
            cfg.baseline.entity_fe = m.value("entity_fe", true);
            cfg.baseline.time_fe = m.value("time_fe", true);
            if (m.contains("cluster")) cfg.baseline.cluster = m.at("cluster").get<std::string>();
        }
        return cfg;
    }

    static AnalysisConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        return parse(j);
    }

    FeOptions fe_options() const {
        FeOptions fe;
        fe.entity_fe = baseline.entity_fe;
        fe.time_fe = baseline.time_fe;
        return fe;
    }

    int replications(const std::string& stage) const {
        if (!raw.contains("replications") || !raw.at("replications").contains(stage))
            throw ConfigError("replication count for stage '" + stage + "' missing from config");
        return raw.at("replications").at(stage).get<int>();
    }

    std::uint64_t require_seed() const {
        if (!has_seed) throw ConfigError("stochastic stage requested but config has no seed");
        return seed;
    }

    void validate_against(const PanelDataset& data) const {
        auto check = [&](const std::string& name) {
            if (data.var_index(name) < 0) throw ConfigError("config references unknown variable '" + name + "'");
        };
        if (!baseline.dependent.name.empty()) check(baseline.dependent.name);
        for (const auto& v : baseline.treatments) check(v.name);
        for (const auto& v : baseline.controls) check(v.name);
        if (!baseline.cluster.empty()) check(baseline.cluster);
        for (const auto& [name, t] : transforms) check(name);
        if (raw.contains("stepwise"))
            for (const auto& block : raw.at("stepwise"))
                for (const auto& v : block) check(v.get<std::string>());
        if (raw.contains("mediation"))
            for (const auto& m : raw.at("mediation").at("mediators")) check(m.get<std::string>());
        if (raw.contains("heterogeneity"))
            for (const auto& s : raw.at("heterogeneity").at("splits"))
                check(s.at("variable").get<std::string>());
    }
};

namespace detail {

inline void write_text(const std::string& text, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << text;
}

inline void write_profile_csv(const ThresholdResult& r, const std::string& path) {
    std::ofstream out(path);
    out << std::setprecision(17) << "candidate,ssr,lr\n";
    for (std::size_t i = 0; i < r.grid.size(); ++i)
        out << r.grid[i] << "," << r.ssr_profile[i] << "," << r.lr_profile[i] << "\n";
}

inline void write_pvalue_trend_csv(const std::vector<std::pair<double, double>>& series,
                                   const std::string& path) {
    std::ofstream out(path);
    out << std::setprecision(17) << "quantile,low_group_p\n";
    for (const auto& [q, p] : series) out << q << "," << p << "\n";
}

inline void write_placebo_csv(const PlaceboResult& r, const std::string& path) {
    std::ofstream out(path);
    out << std::setprecision(17) << "placebo_coefficient\n";
    for (double c : r.null_distribution) out << c << "\n";
    out << "# observed," << r.observed_coefficient << "\n";
    if (!r.null_distribution.empty()) {
        out << "# band_low," << quantile_lower(r.null_distribution, 0.025) << "\n";
        out << "# band_high," << quantile_lower(r.null_distribution, 0.975) << "\n";
    }
}

}  // namespace detail

inline DgpConfig parse_dgp(const json& j);

inline const std::vector<std::string> kAllStages = {
    "simulate", "fit", "stepwise", "mediate", "threshold",
    "grouped", "heterogeneity", "lags", "placebo"};

// Executes the requested stages in canonical order against one dataset,
// writing <stage>.json per stage, plot-data CSVs, and report.txt.
// Throws on the first stage error after writing a machine-readable
// error.json naming the stage.
inline void run_pipeline(const AnalysisConfig& cfg, const std::string& out_dir,
                         std::vector<std::string> stages = {}, int threads = 1) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/plots");

    if (stages.empty()) {
        for (const auto& s : kAllStages)
            if (s == "fit" || cfg.raw.contains(s == "mediate" ? "mediation" : s)) stages.push_back(s);
    }
    std::set<std::string> requested(stages.begin(), stages.end());
    for (const auto& s : requested)
        if (std::find(kAllStages.begin(), kAllStages.end(), s) == kAllStages.end())
            throw ConfigError("unknown stage '" + s + "'");

    std::string current = "config";
    std::ostringstream report;
    try {
        std::optional<PanelDataset> data;
        std::optional<GroundTruth> truth;

        if (requested.count("simulate")) {
            current = "simulate";
            if (!cfg.raw.contains("simulate")) throw ConfigError("simulate stage requested without config");
            DgpConfig dgp = parse_dgp(cfg.raw.at("simulate"));
            auto [ds, gt] = generate_panel(dgp, cfg.require_seed());
            write_panel_csv(ds, out_dir + "/synthetic_panel.csv");
            write_json(to_json(gt), out_dir + "/ground_truth.json");
            write_json(json{{"rows", ds.n_rows()}, {"entities", ds.n_entities()}},
                       out_dir + "/simulate.json");
            data = std::move(ds);
            truth = std::move(gt);
            report << "== simulate ==\n"
                   << "entities " << data->n_entities() << ", rows " << data->n_rows() << "\n\n";
        }
        if (!data) {
            current = "load";
            if (cfg.data_path.empty()) throw ConfigError("no data file configured and no simulate stage");
            data = load_panel(cfg.data_path);
        }
        cfg.validate_against(*data);
        const FeOptions fe = cfg.fe_options();
        const std::string treat_label = cfg.baseline.treatments.empty()
                                            ? std::string{}
                                            : cfg.baseline.treatments.front().label();

        if (requested.count("fit")) {
            current = "fit";
            DesignSample design = build_design(*data, cfg.baseline);
            FitResult fit = fit_fe(design, fe);
            write_json(to_json(fit), out_dir + "/fit.json");
            report << "== fit ==\n"
                   << render_stepwise_table({fit}, cfg.baseline.dependent.label(), fe.entity_fe, fe.time_fe)
                   << "\n";
        }

        if (requested.count("stepwise")) {
            current = "stepwise";
            if (!cfg.raw.contains("stepwise")) throw ConfigError("stepwise stage requested without config");
            std::vector<FitResult> ladder;
            ModelSpec spec = cfg.baseline;
            spec.controls.clear();
            ladder.push_back(fit_fe(build_design(*data, spec), fe));
            for (const auto& block : cfg.raw.at("stepwise")) {
                for (const auto& v : block) spec.controls.push_back(cfg.make_var(v.get<std::string>()));
                ladder.push_back(fit_fe(build_design(*data, spec), fe));
            }
            json j = json::array();
            for (const auto& f : ladder) j.push_back(to_json(f));
            write_json(j, out_dir + "/stepwise.json");
            report << "== stepwise ==\n"
                   << render_stepwise_table(ladder, cfg.baseline.dependent.label(), fe.entity_fe,
                                            fe.time_fe)
                   << "\n";
        }

        if (requested.count("mediate")) {
            current = "mediate";
            if (!cfg.raw.contains("mediation")) throw ConfigError("mediate stage requested without config");
            std::vector<MediationResult> results;
            std::optional<BootstrapSpec> boot;
            if (cfg.raw.at("mediation").value("bootstrap", true)) {
                BootstrapSpec b;
                b.replications = cfg.replications("mediation_bootstrap");
                b.seed = derive_seed(cfg.require_seed(), 0x6d656469ULL);
                b.threads = threads;
                boot = b;
            }
            for (const auto& m : cfg.raw.at("mediation").at("mediators"))
                results.push_back(fit_mediation(*data, cfg.baseline, cfg.make_var(m), boot));
            json j = json::array();
            for (const auto& r : results) j.push_back(to_json(r));
            write_json(j, out_dir + "/mediate.json");
            report << "== mediate ==\n" << render_mediation_table(results) << "\n";
        }

        std::optional<DesignSample> base_design;
        auto need_design = [&]() -> DesignSample& {
            if (!base_design) base_design = build_design(*data, cfg.baseline);
            return *base_design;
        };

        if (requested.count("threshold")) {
            current = "threshold";
            const json& tj = cfg.raw.contains("threshold") ? cfg.raw.at("threshold") : json::object();
            ThresholdOptions opts;
            opts.treatment = treat_label;
            std::string tv = tj.value("variable", cfg.baseline.treatments.front().name);
            opts.threshold_variable = cfg.make_var(tv).label();
            opts.threshold_is_log = cfg.make_var(tv).transform == Transform::log;
            opts.full_switching = tj.value("full_switching", false);
            opts.fe = fe;
            DesignSample& design = need_design();
            double trim = tj.value("trim", 0.01);
            int min_regime = tj.value("min_regime", default_min_regime(static_cast<int>(design.X.cols()) + 1));
            auto grid = grid_candidates(design, opts.threshold_variable, trim, min_regime);
            ThresholdResult res = fit_threshold(design, opts, grid);
            lr_confidence_interval(res, tj.value("ci_level", 0.95));
            if (tj.value("bootstrap", true))
                bootstrap_lr_test(design, opts, grid, cfg.replications("threshold_bootstrap"),
                                  derive_seed(cfg.require_seed(), 0x74687265ULL), res, threads);
            write_json(to_json(res), out_dir + "/threshold.json");
            detail::write_profile_csv(res, out_dir + "/plots/ssr_lr_profile.csv");
            report << "== threshold ==\n" << render_threshold_table(res) << "\n";
        }

        if (requested.count("grouped")) {
            current = "grouped";
            const json& gj = cfg.raw.contains("grouped") ? cfg.raw.at("grouped") : json::object();
            ThresholdOptions opts;
            opts.treatment = treat_label;
            std::string tv = gj.value("variable", cfg.baseline.treatments.front().name);
            opts.threshold_variable = cfg.make_var(tv).label();
            opts.fe = fe;
            std::vector<GroupCutoff> cutoffs;
            for (const auto& c : gj.value("cutoffs", std::vector<std::string>{"median", "mean", "tertiles"})) {
                GroupCutoff gc;
                if (c == "median") gc.kind = GroupCutoff::Kind::median;
                else if (c == "mean") gc.kind = GroupCutoff::Kind::mean;
                else if (c == "tertiles") gc.kind = GroupCutoff::Kind::tertiles;
                else throw ConfigError("unknown cutoff '" + c + "'");
                cutoffs.push_back(gc);
            }
            std::vector<double> quantiles = gj.value("quantiles", std::vector<double>{});
            for (double q : quantiles)
                cutoffs.push_back(GroupCutoff{GroupCutoff::Kind::quantile, q});
            auto results = grouped_fit(need_design(), opts, cutoffs);
            json j = json::array();
            for (const auto& r : results) j.push_back(to_json(r));
            write_json(j, out_dir + "/grouped.json");
            std::vector<std::pair<double, double>> trend;
            for (const auto& r : results)
                if (r.cutoff.kind == GroupCutoff::Kind::quantile)
                    trend.emplace_back(r.cutoff.q, r.groups.front().p);
            detail::write_pvalue_trend_csv(trend, out_dir + "/plots/grouped_pvalues.csv");
            report << "== grouped ==\n" << render_grouped_table(results) << "\n";
        }

        if (requested.count("heterogeneity")) {
            current = "heterogeneity";
            if (!cfg.raw.contains("heterogeneity"))
                throw ConfigError("heterogeneity stage requested without config");
            const json& hj = cfg.raw.at("heterogeneity");
            std::vector<FitResult> fits;
            std::vector<std::string> names;
            for (const auto& s : hj.at("splits")) {
                ModelSpec spec = cfg.baseline;
                SampleFilter f;
                f.variable = s.at("variable").get<std::string>();
                f.lower = s.value("lower", -kInf);
                f.upper = s.value("upper", kInf);
                spec.sample_filter = f;
                names.push_back(s.at("name").get<std::string>());
                fits.push_back(fit_fe(build_design(*data, spec), fe));
            }
            WaldResult wald = wald_equality(fits, treat_label);
            json j;
            j["splits"] = json::array();
            for (std::size_t i = 0; i < fits.size(); ++i) {
                json s = to_json(fits[i]);
                s["name"] = names[i];
                j["splits"].push_back(s);
            }
            j["wald_equality"] = to_json(wald);
            write_json(j, out_dir + "/heterogeneity.json");
            report << "== heterogeneity ==\n";
            for (std::size_t i = 0; i < fits.size(); ++i)
                report << names[i] << ": " << treat_label << " = "
                       << detail::fmt_coef(fits[i].coef_of(treat_label), fits[i].p_of(treat_label))
                       << " " << detail::fmt_se(fits[i].se_of(treat_label)) << ", N "
                       << fits[i].n_obs << "\n";
            report << "Wald equality: stat " << detail::fmt_value(wald.statistic) << ", dof "
                   << wald.dof << ", p " << detail::fmt_value(wald.p_value) << "\n\n";
        }

        if (requested.count("lags")) {
            current = "lags";
            json j;
            std::vector<FitResult> fits;
            for (const auto& [key, mode] : std::vector<std::pair<std::string, LagMode>>{
                     {"lag_only", LagMode::lag_only}, {"current_and_lag", LagMode::current_and_lag}}) {
                FitResult f = fit_lagged(*data, cfg.baseline, mode);
                j[key] = to_json(f);
                fits.push_back(std::move(f));
            }
            write_json(j, out_dir + "/lags.json");
            report << "== lags ==\n"
                   << render_stepwise_table(fits, cfg.baseline.dependent.label(), fe.entity_fe,
                                            fe.time_fe)
                   << "\n";
        }

        if (requested.count("placebo")) {
            current = "placebo";
            const json& pj = cfg.raw.contains("placebo") ? cfg.raw.at("placebo") : json::object();
            std::string mode_s = pj.value("mode", "within_entity_permutation");
            PlaceboMode mode;
            if (mode_s == "within_entity_permutation") mode = PlaceboMode::within_entity_permutation;
            else if (mode_s == "cluster_sign_flip") mode = PlaceboMode::cluster_sign_flip;
            else if (mode_s == "treatment_shuffle") mode = PlaceboMode::treatment_shuffle;
            else throw ConfigError("unknown placebo mode '" + mode_s + "'");
            PlaceboResult res = residual_permutation_placebo(
                *data, cfg.baseline, cfg.replications("placebo"), mode,
                derive_seed(cfg.require_seed(), 0x706c6163ULL), threads);
            write_json(to_json(res), out_dir + "/placebo.json");
            detail::write_placebo_csv(res, out_dir + "/plots/placebo_null.csv");
            report << "== placebo ==\n"
                   << "observed " << detail::fmt_value(res.observed_coefficient) << ", two-sided p "
                   << detail::fmt_value(res.empirical_p_two_sided) << ", upper p "
                   << detail::fmt_value(res.empirical_p_upper) << " (" << res.replications
                   << " replications, mode " << to_string(res.mode) << ")\n\n";
        }

        detail::write_text(report.str(), out_dir + "/report.txt");
    } catch (const std::exception& e) {
        write_json(json{{"stage", current}, {"error", e.what()}}, out_dir + "/error.json");
        throw;
    }
}

inline DgpConfig parse_dgp(const json& j) {
    DgpConfig c;
    c.n_entities = j.value("n_entities", c.n_entities);
    c.n_periods = j.value("n_periods", c.n_periods);
    c.entity_effect_sd = j.value("entity_effect_sd", c.entity_effect_sd);
    c.time_effect_sd = j.value("time_effect_sd", c.time_effect_sd);
    c.noise_sd = j.value("noise_sd", c.noise_sd);
    c.treatment_mean = j.value("treatment_mean", c.treatment_mean);
    c.treatment_sd = j.value("treatment_sd", c.treatment_sd);
    c.slope_below = j.value("slope_below", c.slope_below);
    c.slope_above = j.value("slope_above", c.slope_above);
    if (j.contains("threshold_quantile")) c.threshold_quantile = j.at("threshold_quantile").get<double>();
    if (j.contains("mediation")) {
        DgpConfig::Mediation m;
        m.a = j.at("mediation").value("a", 0.0);
        m.b = j.at("mediation").value("b", 0.0);
        m.direct = j.at("mediation").value("direct", 0.0);
        m.noise_sd = j.at("mediation").value("noise_sd", 0.1);
        c.mediation = m;
    }
    if (j.contains("lag_coefficients"))
        c.lag_coefficients = std::make_pair(j.at("lag_coefficients").value("current", 0.0),
                                            j.at("lag_coefficients").value("lag", 0.0));
    c.missing_rate = j.value("missing_rate", c.missing_rate);
    c.intercept = j.value("intercept", c.intercept);
    c.outcome_name = j.value("outcome_name", c.outcome_name);
    c.treatment_name = j.value("treatment_name", c.treatment_name);
    c.mediator_name = j.value("mediator_name", c.mediator_name);
    if (j.contains("controls"))
        for (const auto& cc : j.at("controls")) {
            ControlSpec cs;
            cs.name = cc.at("name").get<std::string>();
            cs.mean = cc.value("mean", 0.0);
            cs.sd = cc.value("sd", 1.0);
            cs.coefficient = cc.value("coefficient", 0.0);
            c.controls.push_back(cs);
        }
    return c;
}

}  // namespace panelfe
