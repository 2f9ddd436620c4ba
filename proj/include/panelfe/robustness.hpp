#pragma once

#include <random>

#include "panelfe/fe.hpp"
#include "panelfe/parallel.hpp"

namespace panelfe {

enum class LagMode { lag_only, current_and_lag };

// Timing specification: treatments enter lagged one period (and optionally
// contemporaneously). The first usable period per entity drops inside
// build_design because a gap or panel start leaves the lag undefined.
inline FitResult fit_lagged(const PanelDataset& data, const ModelSpec& spec, LagMode mode) {
    if (spec.treatments.empty()) throw EstimationError("fit_lagged requires a treatment variable");
    ModelSpec lagged = spec;
    lagged.treatments.clear();
    for (const auto& t : spec.treatments) {
        if (mode == LagMode::current_and_lag) lagged.treatments.push_back(t);
        Var l = t;
        l.lag = t.lag + 1;
        lagged.treatments.push_back(l);
    }
    DesignSample design = build_design(data, lagged);
    FeOptions fe;
    fe.entity_fe = spec.entity_fe;
    fe.time_fe = spec.time_fe;
    return fit_fe(design, fe);
}

enum class PlaceboMode { within_entity_permutation, cluster_sign_flip, treatment_shuffle };

inline std::string to_string(PlaceboMode m) {
    switch (m) {
        case PlaceboMode::within_entity_permutation: return "within_entity_permutation";
        case PlaceboMode::cluster_sign_flip: return "cluster_sign_flip";
        case PlaceboMode::treatment_shuffle: return "treatment_shuffle";
    }
    return "?";
}

struct PlaceboResult {
    double observed_coefficient = kNaN;
    std::vector<double> null_distribution;  // sorted ascending
    double empirical_p_two_sided = kNaN;    // add-one convention
    double empirical_p_upper = kNaN;
    int replications = 0;
    int failures = 0;
    PlaceboMode mode = PlaceboMode::within_entity_permutation;
    std::uint64_t seed = 0;
};

// Residual-permutation placebo: fit the restricted model (spec minus the
// treatment), permute its residuals within each entity (or sign-flip each
// entity's residual vector), form pseudo outcomes, and re-estimate the
// full model. Permutations are keyed by (seed, entity, replication) so the
// null distribution is identical for any execution order.
inline PlaceboResult residual_permutation_placebo(const PanelDataset& data, const ModelSpec& spec,
                                                  int replications, PlaceboMode mode,
                                                  std::uint64_t seed, int threads = 1) {
    if (replications < 100) throw EstimationError("placebo requires at least 100 replications");
    if (spec.treatments.empty()) throw EstimationError("placebo requires a treatment variable");
    const std::string treat = spec.treatments.front().label();

    DesignSample design = build_design(data, spec);
    FeOptions fe;
    fe.entity_fe = spec.entity_fe;
    fe.time_fe = spec.time_fe;

    FitResult full = fit_fe(design, fe);

    std::vector<std::string> treat_labels;
    for (const auto& t : spec.treatments) treat_labels.push_back(t.label());
    DesignSample restricted = design.drop_columns(treat_labels);
    if (restricted.X.cols() == 0 && !fe.entity_fe && !fe.time_fe)
        throw EstimationError("restricted model has no parameters");

    WithinTransformed wt_full = within_transform(design, fe);
    WithinTransformed wt_rest = within_transform(restricted, fe);
    Eigen::ColPivHouseholderQR<MatrixXd> qr_full(wt_full.X);
    detail::check_collinearity(qr_full, design.names, fe.collinearity_rcond);
    VectorXd beta_rest = wt_rest.X.cols() > 0
                             ? VectorXd(wt_rest.X.colPivHouseholderQr().solve(wt_rest.y))
                             : VectorXd();
    VectorXd fitted_rest = wt_rest.X.cols() > 0 ? VectorXd(wt_rest.X * beta_rest)
                                                : VectorXd(VectorXd::Zero(design.n_rows()));
    VectorXd resid_rest = wt_rest.y - fitted_rest;

    auto entity_rows = detail::group_rows(design.entity, design.n_entities());
    Demeaner demeaner(design, fe);
    const int treat_col = design.require_col(treat);

    // legacy treatment-shuffle pieces: FWL against the restricted regressors
    Eigen::LDLT<MatrixXd> rest_ldlt;
    VectorXd y_resid_rest;
    if (mode == PlaceboMode::treatment_shuffle) {
        if (wt_rest.X.cols() > 0) rest_ldlt.compute(wt_rest.X.transpose() * wt_rest.X);
        y_resid_rest = resid_rest;
    }

    std::vector<double> coefs(replications, kNaN);
    std::vector<char> failed(replications, 0);
    parallel_for(replications, threads, [&](std::size_t r) {
        try {
            if (mode == PlaceboMode::treatment_shuffle) {
                VectorXd x = design.X.col(treat_col);
                for (int e = 0; e < design.n_entities(); ++e) {
                    std::mt19937_64 rng(derive_seed(seed, e, r + 1));
                    const auto& rows = entity_rows[e];
                    std::vector<int> idx(rows);
                    std::shuffle(idx.begin(), idx.end(), rng);
                    for (std::size_t i = 0; i < rows.size(); ++i) x(rows[i]) = design.X(idx[i], treat_col);
                }
                demeaner.apply(x);
                VectorXd z = x;
                if (wt_rest.X.cols() > 0) z -= wt_rest.X * rest_ldlt.solve(wt_rest.X.transpose() * x);
                double nz = z.squaredNorm();
                if (nz <= 0.0) throw EstimationError("degenerate shuffled treatment");
                coefs[r] = z.dot(y_resid_rest) / nz;
                return;
            }
            VectorXd pseudo = fitted_rest;
            for (int e = 0; e < design.n_entities(); ++e) {
                std::mt19937_64 rng(derive_seed(seed, e, r + 1));
                const auto& rows = entity_rows[e];
                if (mode == PlaceboMode::cluster_sign_flip) {
                    double sign = (rng() & 1u) ? 1.0 : -1.0;
                    for (int i : rows) pseudo(i) += sign * resid_rest(i);
                } else {
                    std::vector<int> idx(rows);
                    std::shuffle(idx.begin(), idx.end(), rng);
                    for (std::size_t i = 0; i < rows.size(); ++i) pseudo(rows[i]) += resid_rest(idx[i]);
                }
            }
            demeaner.apply(pseudo);
            VectorXd beta = qr_full.solve(pseudo);
            coefs[r] = beta(treat_col);
        } catch (const Error&) {
            failed[r] = 1;
        }
    });

    PlaceboResult res;
    res.mode = mode;
    res.seed = seed;
    res.observed_coefficient = full.coef_of(treat);
    for (int r = 0; r < replications; ++r) {
        if (failed[r]) ++res.failures;
        else res.null_distribution.push_back(coefs[r]);
    }
    if (res.failures > replications / 20)
        throw EstimationError("placebo failure rate above 5% (" + std::to_string(res.failures) + "/" +
                              std::to_string(replications) + ")");
    res.replications = static_cast<int>(res.null_distribution.size());
    std::sort(res.null_distribution.begin(), res.null_distribution.end());

    const double obs = res.observed_coefficient;
    int two = 0, upper = 0;
    for (double c : res.null_distribution) {
        if (std::abs(c) >= std::abs(obs)) ++two;
        if (c >= obs) ++upper;
    }
    res.empirical_p_two_sided = (1.0 + two) / (res.replications + 1.0);
    res.empirical_p_upper = (1.0 + upper) / (res.replications + 1.0);
    return res;
}

}  // namespace panelfe
