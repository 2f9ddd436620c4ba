#pragma once

#include <iomanip>
#include <optional>
#include <random>

#include "panelfe/dataset.hpp"

namespace panelfe {

struct ControlSpec {
    std::string name;
    double mean = 0.0;
    double sd = 1.0;
    double coefficient = 0.0;
};

// Planted data-generating process. Outcome, treatment, and mediator are
// produced on the log scale and stored as raw levels so the standard
// log-transform specs recover the planted linear structure.
struct DgpConfig {
    int n_entities = 300;
    int n_periods = 4;
    double entity_effect_sd = 1.0;
    double time_effect_sd = 0.5;
    double noise_sd = 0.1;

    double treatment_mean = 10.0;  // log-treatment ~ N(mean, sd), iid over cells
    double treatment_sd = 2.0;

    double slope_below = 0.5;  // single slope when no threshold is planted
    double slope_above = 0.5;
    std::optional<double> threshold_quantile;

    struct Mediation {
        double a = 0.0, b = 0.0, direct = 0.0;
        double noise_sd = 0.1;
    };
    std::optional<Mediation> mediation;

    std::optional<std::pair<double, double>> lag_coefficients;  // (current, lag)

    double missing_rate = 0.0;  // outcome cells missing uniformly at random
    std::vector<ControlSpec> controls;
    double intercept = 5.0;

    std::string outcome_name = "land_price";
    std::string treatment_name = "tourist_arrivals";
    std::string mediator_name = "afs_establishments";

    void validate() const {
        if (n_entities < 2 || n_periods < 2) throw ConfigError("dgp needs >= 2 entities and >= 2 periods");
        if (entity_effect_sd < 0 || time_effect_sd < 0 || noise_sd < 0 || treatment_sd < 0)
            throw ConfigError("dgp standard deviations must be nonnegative");
        if (missing_rate < 0 || missing_rate > 1) throw ConfigError("missing_rate outside [0,1]");
        if (threshold_quantile && (*threshold_quantile < 0 || *threshold_quantile > 1))
            throw ConfigError("threshold_quantile outside [0,1]");
    }
};

struct GroundTruth {
    std::uint64_t seed = 0;
    double slope_below = kNaN, slope_above = kNaN;
    double threshold_log = kNaN, threshold_raw = kNaN;  // set when a break is planted
    double mediation_a = kNaN, mediation_b = kNaN, mediation_direct = kNaN;
    double lag_current = kNaN, lag_lag = kNaN;
    double intercept = kNaN;
    std::vector<double> entity_effects, time_effects;
    std::vector<double> systematic;  // noiseless log outcome per row, dataset order
    std::vector<double> control_coefficients;
};

inline std::pair<PanelDataset, GroundTruth> generate_panel(const DgpConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(derive_seed(seed, 0x70616e656cULL));
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const int E = cfg.n_entities, T = cfg.n_periods;
    const bool lagged = cfg.lag_coefficients.has_value();
    const int first_period = 2021;

    GroundTruth gt;
    gt.seed = seed;
    gt.intercept = cfg.intercept;
    gt.slope_below = cfg.slope_below;
    gt.slope_above = cfg.slope_above;
    for (const auto& c : cfg.controls) gt.control_coefficients.push_back(c.coefficient);
    for (int e = 0; e < E; ++e) gt.entity_effects.push_back(cfg.entity_effect_sd * stdnorm(rng));
    for (int t = 0; t < T; ++t) gt.time_effects.push_back(cfg.time_effect_sd * stdnorm(rng));

    // x[e][t], with t = -1 burn-in when a lag structure is planted
    std::vector<std::vector<double>> x(E, std::vector<double>(T + 1, kNaN));
    for (int e = 0; e < E; ++e)
        for (int t = lagged ? 0 : 1; t <= T; ++t)
            x[e][t] = cfg.treatment_mean + cfg.treatment_sd * stdnorm(rng);

    double theta = kNaN;
    if (cfg.threshold_quantile) {
        std::vector<double> pool;
        for (int e = 0; e < E; ++e)
            for (int t = 1; t <= T; ++t) pool.push_back(x[e][t]);
        theta = quantile_lower(std::move(pool), *cfg.threshold_quantile);
        gt.threshold_log = theta;
        gt.threshold_raw = std::exp(theta);
    }
    if (cfg.mediation) {
        gt.mediation_a = cfg.mediation->a;
        gt.mediation_b = cfg.mediation->b;
        gt.mediation_direct = cfg.mediation->direct;
    }
    if (lagged) {
        gt.lag_current = cfg.lag_coefficients->first;
        gt.lag_lag = cfg.lag_coefficients->second;
    }

    PanelDataset ds;
    ds.variables = {cfg.outcome_name, cfg.treatment_name};
    if (cfg.mediation) ds.variables.push_back(cfg.mediator_name);
    for (const auto& c : cfg.controls) ds.variables.push_back(c.name);
    const int n_vars = static_cast<int>(ds.variables.size());
    ds.values.resize(E * T, n_vars);

    int width = static_cast<int>(std::to_string(E).size());
    for (int e = 0; e < E; ++e) {
        std::ostringstream label;
        label << "e" << std::setw(width) << std::setfill('0') << e;
        ds.entity_labels.push_back(label.str());
        for (int t = 1; t <= T; ++t) {
            int row = e * T + (t - 1);
            ds.entity.push_back(e);
            ds.period.push_back(first_period + t - 1);

            double xv = x[e][t];
            double contrib;
            if (lagged) {
                contrib = cfg.lag_coefficients->first * xv + cfg.lag_coefficients->second * x[e][t - 1];
            } else if (cfg.mediation) {
                contrib = cfg.mediation->direct * xv;
            } else {
                double slope = (cfg.threshold_quantile && xv > theta) ? cfg.slope_above : cfg.slope_below;
                contrib = slope * xv;
            }

            double med_log = kNaN;
            if (cfg.mediation) {
                med_log = cfg.mediation->a * xv + cfg.mediation->noise_sd * stdnorm(rng);
                contrib += cfg.mediation->b * med_log;
            }

            std::vector<double> ctrl_vals;
            for (const auto& c : cfg.controls) {
                double cv = c.mean + c.sd * stdnorm(rng);
                ctrl_vals.push_back(cv);
                contrib += c.coefficient * cv;
            }

            double systematic = cfg.intercept + contrib + gt.entity_effects[e] + gt.time_effects[t - 1];
            gt.systematic.push_back(systematic);
            double y_log = systematic + cfg.noise_sd * stdnorm(rng);

            bool miss = cfg.missing_rate > 0.0 && unif(rng) < cfg.missing_rate;
            ds.values(row, 0) = miss ? kNaN : std::exp(y_log);
            ds.values(row, 1) = std::exp(xv);
            int col = 2;
            if (cfg.mediation) ds.values(row, col++) = std::exp(med_log);
            for (double cv : ctrl_vals) ds.values(row, col++) = cv;
        }
    }
    return {std::move(ds), std::move(gt)};
}

inline void write_panel_csv(const PanelDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write panel file: " + path);
    out << "entity,period";
    for (const auto& v : ds.variables) out << "," << v;
    out << "\n";
    out << std::setprecision(17);
    for (int i = 0; i < ds.n_rows(); ++i) {
        out << ds.entity_labels[ds.entity[i]] << "," << ds.period[i];
        for (int j = 0; j < static_cast<int>(ds.variables.size()); ++j) {
            out << ",";
            if (!is_missing(ds.values(i, j))) out << ds.values(i, j);
        }
        out << "\n";
    }
}

}  // namespace panelfe
