#pragma once

#include <json.hpp>

#include "panelfe/fe.hpp"
#include "panelfe/mediation.hpp"
#include "panelfe/robustness.hpp"
#include "panelfe/synthetic.hpp"
#include "panelfe/threshold.hpp"

namespace panelfe {

using json = nlohmann::ordered_json;

namespace detail {

inline json vec_to_json(const VectorXd& v) {
    json arr = json::array();
    for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

inline json mat_to_json(const MatrixXd& m) {
    json arr = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        arr.push_back(row);
    }
    return arr;
}

}  // namespace detail

inline json to_json(const FitResult& f, bool include_vectors = false) {
    json j;
    j["coefficients"] = json::object();
    for (std::size_t i = 0; i < f.names.size(); ++i) {
        json c;
        c["estimate"] = f.coef(i);
        c["se"] = f.se(i);
        c["t"] = f.t_stat(i);
        c["p"] = f.p_value(i);
        c["ci_low"] = f.ci_low(i);
        c["ci_high"] = f.ci_high(i);
        j["coefficients"][f.names[i]] = c;
    }
    j["intercept"] = f.intercept;
    j["intercept_se"] = f.intercept_se;
    j["n_obs"] = f.n_obs;
    j["n_clusters"] = f.n_clusters;
    j["df_t"] = f.df_t;
    j["r_squared_within"] = f.r_squared_within;
    j["ssr"] = f.ssr;
    j["vif"] = f.vif;
    j["covariance"] = detail::mat_to_json(f.cov);
    if (include_vectors) {
        j["residuals"] = detail::vec_to_json(f.residuals);
        j["fitted"] = detail::vec_to_json(f.fitted);
    }
    return j;
}

inline json to_json(const WaldResult& w) {
    return json{{"statistic", w.statistic}, {"dof", w.dof}, {"p", w.p_value}};
}

inline json to_json(const ThresholdResult& r) {
    json j;
    j["threshold"] = r.threshold;
    j["threshold_raw"] = r.threshold_raw;
    auto regime = [](const RegimeCoef& rc) {
        return json{{"coef", rc.coef}, {"se", rc.se}, {"t", rc.t}, {"p", rc.p}, {"n", rc.n}};
    };
    j["below"] = regime(r.below);
    j["above"] = regime(r.above);
    j["ssr_min"] = r.ssr_min;
    j["ssr_linear"] = r.ssr_linear;
    j["lr_observed"] = r.lr_observed;
    if (!std::isnan(r.bootstrap_p)) {
        j["bootstrap_p"] = r.bootstrap_p;
        j["bootstrap_replications"] = r.bootstrap_replications;
        j["bootstrap_failures"] = r.bootstrap_failures;
    }
    if (!std::isnan(r.ci_low)) {
        j["confidence_interval"] = json{{"level", r.ci_level},
                                        {"low", r.ci_low},
                                        {"high", r.ci_high},
                                        {"noncontiguous", r.ci_noncontiguous}};
    }
    j["grid"] = r.grid;
    j["ssr_profile"] = r.ssr_profile;
    j["lr_profile"] = r.lr_profile;
    return j;
}

inline json to_json(const GroupedResult& g) {
    json j;
    j["cutoff"] = g.cutoff.label();
    j["cut_values"] = g.cut_values;
    j["groups"] = json::array();
    for (const auto& grp : g.groups)
        j["groups"].push_back(json{
            {"label", grp.label}, {"coef", grp.coef}, {"se", grp.se}, {"p", grp.p}, {"n", grp.n}});
    return j;
}

inline json to_json(const MediationResult& m) {
    json j;
    j["mediator"] = m.mediator;
    j["path_a"] = json{{"coef", m.path_a}, {"se", m.path_a_se}};
    j["path_b"] = json{{"coef", m.path_b}, {"se", m.path_b_se}};
    j["direct_effect"] = json{{"coef", m.direct_effect}, {"se", m.direct_se}};
    j["total_effect"] = json{{"coef", m.total_effect}, {"se", m.total_se}};
    j["indirect_effect"] = m.indirect_effect;
    j["sobel"] = json{{"z", m.sobel_z}, {"p", m.sobel_p}};
    j["n_obs"] = m.n_obs;
    if (m.has_bootstrap)
        j["bootstrap_ci"] = json{{"low", m.boot_ci_low},
                                 {"high", m.boot_ci_high},
                                 {"replications", m.boot_replications}};
    return j;
}

inline json to_json(const PlaceboResult& p) {
    json j;
    j["observed_coefficient"] = p.observed_coefficient;
    j["empirical_p_two_sided"] = p.empirical_p_two_sided;
    j["empirical_p_upper"] = p.empirical_p_upper;
    j["replications"] = p.replications;
    j["failures"] = p.failures;
    j["mode"] = to_string(p.mode);
    j["seed"] = p.seed;
    j["null_distribution"] = p.null_distribution;
    return j;
}

inline json to_json(const GroundTruth& g) {
    json j;
    j["seed"] = g.seed;
    j["intercept"] = g.intercept;
    j["slope_below"] = g.slope_below;
    j["slope_above"] = g.slope_above;
    if (!std::isnan(g.threshold_log)) {
        j["threshold_log"] = g.threshold_log;
        j["threshold_raw"] = g.threshold_raw;
    }
    if (!std::isnan(g.mediation_a))
        j["mediation"] = json{{"a", g.mediation_a}, {"b", g.mediation_b}, {"direct", g.mediation_direct}};
    if (!std::isnan(g.lag_current))
        j["lag_coefficients"] = json{{"current", g.lag_current}, {"lag", g.lag_lag}};
    j["control_coefficients"] = g.control_coefficients;
    j["entity_effects"] = g.entity_effects;
    j["time_effects"] = g.time_effects;
    j["systematic"] = g.systematic;
    return j;
}

inline void write_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace panelfe
