#include <catch_amalgamated.hpp>

#include "helpers.hpp"
#include "panelfe/mediation.hpp"
#include "panelfe/robustness.hpp"
#include "panelfe/synthetic.hpp"
#include "panelfe/threshold.hpp"

using namespace panelfe;

namespace {

ModelSpec log_spec() {
    ModelSpec spec;
    spec.dependent = {"land_price", Transform::log};
    spec.treatments = {{"tourist_arrivals", Transform::log}};
    return spec;
}

}  // namespace

TEST_CASE("generate_panel is deterministic in the seed") {
    DgpConfig cfg;
    cfg.n_entities = 40;
    cfg.n_periods = 4;
    auto [a, gta] = generate_panel(cfg, 123);
    auto [b, gtb] = generate_panel(cfg, 123);
    CHECK(a.values == b.values);
    CHECK(gta.entity_effects == gtb.entity_effects);
    CHECK(gta.systematic == gtb.systematic);

    auto [c, gtc] = generate_panel(cfg, 124);
    CHECK(a.values != c.values);
}

TEST_CASE("noiseless DGP reproduces the planted slope to machine precision") {
    DgpConfig cfg;
    cfg.n_entities = 50;
    cfg.n_periods = 4;
    cfg.noise_sd = 0.0;
    cfg.slope_below = cfg.slope_above = 0.5;
    auto [data, gt] = generate_panel(cfg, 7);

    // log(y) equals the stored systematic component exactly
    int ycol = data.require_var("land_price");
    for (int i = 0; i < data.n_rows(); ++i)
        CHECK(std::log(data.values(i, ycol)) == Catch::Approx(gt.systematic[i]).margin(1e-10));

    DesignSample d = build_design(data, log_spec());
    FitResult fit = fit_fe(d);
    CHECK(fit.coef_of("log(tourist_arrivals)") == Catch::Approx(0.5).margin(1e-10));
    CHECK(fit.residuals.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("ground truth reconstructs the systematic component") {
    DgpConfig cfg;
    cfg.n_entities = 30;
    cfg.n_periods = 3;
    cfg.noise_sd = 0.0;
    cfg.controls = {{"infrastructure", 1.0, 0.5, 0.25}};
    auto [data, gt] = generate_panel(cfg, 11);
    int xcol = data.require_var("tourist_arrivals");
    int ccol = data.require_var("infrastructure");
    for (int i = 0; i < data.n_rows(); ++i) {
        int e = data.entity[i];
        int t = data.period[i] - 2021;
        double expected = gt.intercept + gt.slope_below * std::log(data.values(i, xcol)) +
                          gt.control_coefficients[0] * data.values(i, ccol) +
                          gt.entity_effects[e] + gt.time_effects[t];
        CHECK(gt.systematic[i] == Catch::Approx(expected).margin(1e-10));
    }
}

TEST_CASE("planted threshold sits at the requested quantile and is recoverable") {
    DgpConfig cfg;
    cfg.n_entities = 300;
    cfg.n_periods = 4;
    cfg.noise_sd = 0.05;
    cfg.slope_below = 0.2;
    cfg.slope_above = 0.8;
    cfg.threshold_quantile = 0.5;
    auto [data, gt] = generate_panel(cfg, 17);

    // theta is the pooled median of the log treatment
    int xcol = data.require_var("tourist_arrivals");
    std::vector<double> logs;
    for (int i = 0; i < data.n_rows(); ++i) logs.push_back(std::log(data.values(i, xcol)));
    CHECK(gt.threshold_log == Catch::Approx(testutil::quantile_sort_oracle(logs, 0.5)).margin(1e-10));
    CHECK(gt.threshold_raw == Catch::Approx(std::exp(gt.threshold_log)));

    DesignSample d = build_design(data, log_spec());
    ThresholdOptions opts;
    opts.treatment = "log(tourist_arrivals)";
    opts.threshold_variable = "log(tourist_arrivals)";
    opts.threshold_is_log = true;
    auto grid = grid_candidates(d, opts.threshold_variable, 0.01, default_min_regime(1));
    ThresholdResult res = fit_threshold(d, opts, grid);
    CHECK(std::abs(res.threshold - gt.threshold_log) < 0.25);
    CHECK(res.below.coef == Catch::Approx(0.2).margin(0.03));
    CHECK(res.above.coef == Catch::Approx(0.8).margin(0.03));
}

TEST_CASE("planted mediation channel is recoverable") {
    DgpConfig cfg;
    cfg.n_entities = 400;
    cfg.n_periods = 4;
    cfg.noise_sd = 0.05;
    cfg.mediation = DgpConfig::Mediation{0.6, 0.5, 0.2, 0.05};
    auto [data, gt] = generate_panel(cfg, 23);

    ModelSpec spec = log_spec();
    MediationResult res = fit_mediation(data, spec, Var{"afs_establishments", Transform::log});
    CHECK(res.path_a == Catch::Approx(0.6).margin(0.02));
    CHECK(res.path_b == Catch::Approx(0.5).margin(0.02));
    CHECK(res.direct_effect == Catch::Approx(0.2).margin(0.02));
    CHECK(res.total_effect - res.direct_effect == Catch::Approx(res.indirect_effect).margin(1e-8));
}

TEST_CASE("planted lag structure is recoverable") {
    DgpConfig cfg;
    cfg.n_entities = 400;
    cfg.n_periods = 5;
    cfg.noise_sd = 0.05;
    cfg.lag_coefficients = std::make_pair(0.4, 0.25);
    auto [data, gt] = generate_panel(cfg, 29);

    FitResult both = fit_lagged(data, log_spec(), LagMode::current_and_lag);
    CHECK(both.n_obs == 400 * 4);  // first period lost to the lag
    CHECK(both.coef_of("log(tourist_arrivals)") == Catch::Approx(0.4).margin(0.02));
    CHECK(both.coef_of("log(tourist_arrivals)_lag1") == Catch::Approx(0.25).margin(0.02));
}

TEST_CASE("missingness hits only the outcome and leaves the treatment draw alone") {
    DgpConfig cfg;
    cfg.n_entities = 200;
    cfg.n_periods = 4;
    auto [full, gtf] = generate_panel(cfg, 31);
    cfg.missing_rate = 0.25;
    auto [holed, gth] = generate_panel(cfg, 31);

    int ycol = full.require_var("land_price");
    int xcol = full.require_var("tourist_arrivals");
    // treatment is drawn before the row loop, so it is unchanged
    CHECK(full.values.col(xcol) == holed.values.col(xcol));
    int missing = 0;
    for (int i = 0; i < holed.n_rows(); ++i)
        if (is_missing(holed.values(i, ycol))) ++missing;
    double rate = double(missing) / holed.n_rows();
    CHECK(rate > 0.15);
    CHECK(rate < 0.35);
    CHECK(full.n_present("land_price") == full.n_rows());
}

TEST_CASE("write_panel_csv round trips through load_panel") {
    DgpConfig cfg;
    cfg.n_entities = 25;
    cfg.n_periods = 3;
    cfg.missing_rate = 0.1;
    cfg.controls = {{"infrastructure", 0.0, 1.0, 0.3}};
    auto [data, gt] = generate_panel(cfg, 37);
    auto path = std::filesystem::temp_directory_path() / "synthetic_roundtrip.csv";
    write_panel_csv(data, path.string());
    PanelDataset back = load_panel(path.string());
    REQUIRE(back.n_rows() == data.n_rows());
    REQUIRE(back.variables == data.variables);
    for (int i = 0; i < data.n_rows(); ++i) {
        CHECK(back.entity_labels[back.entity[i]] == data.entity_labels[data.entity[i]]);
        CHECK(back.period[i] == data.period[i]);
        for (int j = 0; j < static_cast<int>(data.variables.size()); ++j) {
            if (is_missing(data.values(i, j))) {
                CHECK(is_missing(back.values(i, j)));
            } else {
                CHECK(back.values(i, j) == data.values(i, j));  // 17 digits: exact
            }
        }
    }
}

TEST_CASE("DgpConfig validation") {
    DgpConfig cfg;
    cfg.n_entities = 1;
    CHECK_THROWS_AS(generate_panel(cfg, 1), ConfigError);
    cfg = DgpConfig{};
    cfg.noise_sd = -1.0;
    CHECK_THROWS_AS(generate_panel(cfg, 1), ConfigError);
    cfg = DgpConfig{};
    cfg.missing_rate = 1.5;
    CHECK_THROWS_AS(generate_panel(cfg, 1), ConfigError);
    cfg = DgpConfig{};
    cfg.threshold_quantile = -0.1;
    CHECK_THROWS_AS(generate_panel(cfg, 1), ConfigError);
}
