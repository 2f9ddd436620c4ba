#pragma once

#include <random>

#include "panelfe/fe.hpp"
#include "panelfe/parallel.hpp"

namespace panelfe {

struct SobelResult {
    double z = kNaN;
    double p = kNaN;
};

// z = a b / sqrt(b^2 se_a^2 + a^2 se_b^2), two-sided normal p.
inline SobelResult sobel_test(double a, double se_a, double b, double se_b) {
    if (se_a <= 0.0 || se_b <= 0.0) throw EstimationError("sobel_test: standard errors must be positive");
    SobelResult out;
    double var = b * b * se_a * se_a + a * a * se_b * se_b;
    out.z = var > 0.0 ? a * b / std::sqrt(var) : 0.0;
    out.p = normal_pvalue_two_sided(out.z);
    return out;
}

struct MediationResult {
    std::string mediator;
    double path_a = kNaN, path_a_se = kNaN;  // treatment -> mediator
    double path_b = kNaN, path_b_se = kNaN;  // mediator -> outcome (step 2)
    double direct_effect = kNaN, direct_se = kNaN;
    double total_effect = kNaN, total_se = kNaN;
    double indirect_effect = kNaN;
    double sobel_z = kNaN, sobel_p = kNaN;
    int n_obs = 0;
    bool has_bootstrap = false;
    double boot_ci_low = kNaN, boot_ci_high = kNaN;
    int boot_replications = 0;
    FitResult step1, step2, total_fit;
};

struct BootstrapSpec {
    int replications = 1000;
    std::uint64_t seed = 0;
    double level = 0.95;
    int threads = 1;
};

namespace detail {

// Entity-level nonparametric resample: draw E entities with replacement
// and stack their rows under fresh entity/cluster ids.
inline DesignSample resample_entities(const DesignSample& d, std::mt19937_64& rng) {
    auto rows_of = group_rows(d.entity, d.n_entities());
    std::uniform_int_distribution<int> pick(0, d.n_entities() - 1);
    DesignSample out;
    out.names = d.names;
    out.period_values = d.period_values;
    std::vector<int> draws(d.n_entities());
    int total = 0;
    for (int e = 0; e < d.n_entities(); ++e) {
        draws[e] = pick(rng);
        total += static_cast<int>(rows_of[draws[e]].size());
    }
    out.y.resize(total);
    out.X.resize(total, d.X.cols());
    int at = 0;
    for (int e = 0; e < d.n_entities(); ++e) {
        out.entity_ids.push_back("b" + std::to_string(e));
        for (int r : rows_of[draws[e]]) {
            out.y(at) = d.y(r);
            out.X.row(at) = d.X.row(r);
            out.entity.push_back(e);
            out.period.push_back(d.period[r]);
            out.cluster.push_back(e);
            ++at;
        }
    }
    out.cluster_ids = out.entity_ids;
    return out;
}

struct MediationDesigns {
    DesignSample step2;  // y on [x, m, controls]
    DesignSample total;  // y on [x, controls]
    DesignSample path_a;  // m on [x, controls]
};

inline MediationDesigns mediation_designs(const DesignSample& common, const std::string& mediator_label) {
    MediationDesigns md;
    md.step2 = common;
    md.total = common.drop_columns({mediator_label});
    md.path_a = md.total;
    md.path_a.y = common.X.col(common.require_col(mediator_label));
    return md;
}

}  // namespace detail

// Three fits on one listwise-common sample: the no-mediator baseline, the
// treatment->mediator step, and the step-2 model with both. On the shared
// linear sample total - direct equals path_a * path_b exactly.
inline MediationResult fit_mediation(const PanelDataset& data, const ModelSpec& spec, const Var& mediator,
                                     const std::optional<BootstrapSpec>& bootstrap = std::nullopt) {
    if (spec.treatments.empty()) throw EstimationError("mediation requires a treatment variable");
    const std::string treat = spec.treatments.front().label();
    if (mediator.name == spec.dependent.name || mediator.label() == treat)
        throw EstimationError("mediator must be distinct from outcome and treatment");
    for (const auto& c : spec.controls)
        if (c.name == mediator.name) throw EstimationError("mediator must not appear among controls");

    ModelSpec with_m = spec;
    with_m.controls.insert(with_m.controls.begin(), mediator);
    DesignSample common = build_design(data, with_m);

    FeOptions fe;
    fe.entity_fe = spec.entity_fe;
    fe.time_fe = spec.time_fe;
    auto md = detail::mediation_designs(common, mediator.label());

    MediationResult res;
    res.mediator = mediator.label();
    res.step2 = fit_fe(md.step2, fe);
    res.total_fit = fit_fe(md.total, fe);
    res.step1 = fit_fe(md.path_a, fe);
    res.n_obs = common.n_rows();

    res.path_a = res.step1.coef_of(treat);
    res.path_a_se = res.step1.se_of(treat);
    res.path_b = res.step2.coef_of(mediator.label());
    res.path_b_se = res.step2.se_of(mediator.label());
    res.direct_effect = res.step2.coef_of(treat);
    res.direct_se = res.step2.se_of(treat);
    res.total_effect = res.total_fit.coef_of(treat);
    res.total_se = res.total_fit.se_of(treat);
    res.indirect_effect = res.path_a * res.path_b;
    auto sobel = sobel_test(res.path_a, res.path_a_se, res.path_b, res.path_b_se);
    res.sobel_z = sobel.z;
    res.sobel_p = sobel.p;

    if (bootstrap) {
        const int R = bootstrap->replications;
        if (R < 2) throw EstimationError("bootstrap requires at least 2 replications");
        std::vector<double> indirect(R, kNaN);
        parallel_for(R, bootstrap->threads, [&](std::size_t r) {
            std::mt19937_64 rng(derive_seed(bootstrap->seed, r));
            try {
                DesignSample boot = detail::resample_entities(common, rng);
                auto bmd = detail::mediation_designs(boot, mediator.label());
                double a = fit_fe(bmd.path_a, fe).coef_of(treat);
                double b = fit_fe(bmd.step2, fe).coef_of(mediator.label());
                indirect[r] = a * b;
            } catch (const Error&) {
                // left NaN; counted as a failure below
            }
        });
        std::vector<double> ok;
        for (double v : indirect)
            if (!std::isnan(v)) ok.push_back(v);
        if (static_cast<int>(ok.size()) < R - R / 20)
            throw EstimationError("mediation bootstrap failure rate above 5%");
        double alpha = 1.0 - bootstrap->level;
        res.boot_ci_low = quantile_lower(ok, alpha / 2.0);
        res.boot_ci_high = quantile_lower(ok, 1.0 - alpha / 2.0);
        res.boot_replications = static_cast<int>(ok.size());
        res.has_bootstrap = true;
    }
    return res;
}

// Experimental: several mediators entered jointly in step 2; path-a fits
// stay per mediator, indirect effects use the joint step-2 slopes.
inline std::vector<MediationResult> fit_mediation_joint(const PanelDataset& data, const ModelSpec& spec,
                                                        const std::vector<Var>& mediators) {
    if (mediators.empty()) throw EstimationError("no mediators given");
    const std::string treat = spec.treatments.front().label();
    ModelSpec with_all = spec;
    for (auto it = mediators.rbegin(); it != mediators.rend(); ++it)
        with_all.controls.insert(with_all.controls.begin(), *it);
    DesignSample common = build_design(data, with_all);

    FeOptions fe;
    fe.entity_fe = spec.entity_fe;
    fe.time_fe = spec.time_fe;
    std::vector<std::string> med_labels;
    for (const auto& m : mediators) med_labels.push_back(m.label());

    FitResult step2 = fit_fe(common, fe);
    FitResult total = fit_fe(common.drop_columns(med_labels), fe);

    std::vector<MediationResult> out;
    for (const auto& m : mediators) {
        DesignSample da = common.drop_columns(med_labels);
        da.y = common.X.col(common.require_col(m.label()));
        FitResult fit_a = fit_fe(da, fe);
        MediationResult res;
        res.mediator = m.label();
        res.n_obs = common.n_rows();
        res.path_a = fit_a.coef_of(treat);
        res.path_a_se = fit_a.se_of(treat);
        res.path_b = step2.coef_of(m.label());
        res.path_b_se = step2.se_of(m.label());
        res.direct_effect = step2.coef_of(treat);
        res.direct_se = step2.se_of(treat);
        res.total_effect = total.coef_of(treat);
        res.total_se = total.se_of(treat);
        res.indirect_effect = res.path_a * res.path_b;
        auto sobel = sobel_test(res.path_a, res.path_a_se, res.path_b, res.path_b_se);
        res.sobel_z = sobel.z;
        res.sobel_p = sobel.p;
        res.step1 = fit_a;
        res.step2 = step2;
        res.total_fit = total;
        out.push_back(std::move(res));
    }
    return out;
}

}  // namespace panelfe
