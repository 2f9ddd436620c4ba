#pragma once

#include <iomanip>
#include <sstream>

#include "panelfe/fe.hpp"
#include "panelfe/mediation.hpp"
#include "panelfe/threshold.hpp"

namespace panelfe {

// Strict cutpoints: ***p<0.01, **p<0.05, *p<0.1.
inline std::string significance_stars(double p) {
    if (p < 0.01) return "***";
    if (p < 0.05) return "**";
    if (p < 0.1) return "*";
    return "";
}

namespace detail {

inline std::string fmt_value(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream ss;
    if (v != 0.0 && std::abs(v) < 0.001) {
        ss << std::scientific << std::setprecision(2) << v;
    } else {
        ss << std::fixed << std::setprecision(3) << v;
    }
    return ss.str();
}

inline std::string fmt_coef(double v, double p) { return fmt_value(v) + significance_stars(p); }

inline std::string fmt_se(double se) { return "(" + fmt_value(se) + ")"; }

// Fixed-width grid renderer: first column left-aligned, rest right-aligned.
inline std::string render_grid(const std::vector<std::vector<std::string>>& rows) {
    std::size_t ncol = 0;
    for (const auto& r : rows) ncol = std::max(ncol, r.size());
    std::vector<std::size_t> width(ncol, 0);
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    std::ostringstream out;
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < ncol; ++c) {
            std::string cell = c < r.size() ? r[c] : "";
            if (c == 0) {
                out << cell << std::string(width[c] - cell.size(), ' ');
            } else {
                out << "  " << std::string(width[c] - cell.size(), ' ') << cell;
            }
        }
        out << "\n";
    }
    return out.str();
}

inline const std::string kStarNote = "Standard errors in parentheses. ***p<0.01, **p<0.05, *p<0.1.";

}  // namespace detail

// Nested-specification ladder, one column per fit; the last fit supplies
// the VIF column. Coefficients with SEs parenthesized beneath.
inline std::string render_stepwise_table(const std::vector<FitResult>& fits,
                                         const std::string& dependent_label,
                                         bool entity_fe = true, bool time_fe = true) {
    if (fits.empty()) throw Error("render_stepwise_table: no fits");
    std::vector<std::string> row_names;
    for (const auto& f : fits)
        for (const auto& n : f.names)
            if (std::find(row_names.begin(), row_names.end(), n) == row_names.end())
                row_names.push_back(n);

    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Variable"};
    for (std::size_t i = 0; i < fits.size(); ++i) header.push_back("(" + std::to_string(i + 1) + ")");
    header.push_back("VIF");
    rows.push_back(header);
    rows.push_back({"Dependent Var.", dependent_label});

    const FitResult& last = fits.back();
    for (const auto& name : row_names) {
        std::vector<std::string> coef_row{name}, se_row{""};
        for (const auto& f : fits) {
            auto it = std::find(f.names.begin(), f.names.end(), name);
            if (it == f.names.end()) {
                coef_row.emplace_back();
                se_row.emplace_back();
            } else {
                int j = static_cast<int>(it - f.names.begin());
                coef_row.push_back(detail::fmt_coef(f.coef(j), f.p_value(j)));
                se_row.push_back(detail::fmt_se(f.se(j)));
            }
        }
        auto vit = last.vif.find(name);
        coef_row.push_back(vit != last.vif.end() && std::isfinite(vit->second)
                               ? detail::fmt_value(vit->second)
                               : (vit != last.vif.end() ? "inf" : ""));
        rows.push_back(coef_row);
        rows.push_back(se_row);
    }
    rows.push_back({"Year FE", time_fe ? "Yes" : "No"});
    rows.push_back({"Municipality FE", entity_fe ? "Yes" : "No"});
    std::vector<std::string> const_row{"Constant"}, const_se{""}, n_row{"N"}, r2_row{"R2"};
    for (const auto& f : fits) {
        double pc = f.intercept_se > 0 ? t_pvalue(f.intercept / f.intercept_se, f.df_t) : kNaN;
        const_row.push_back(detail::fmt_coef(f.intercept, pc));
        const_se.push_back(detail::fmt_se(f.intercept_se));
        n_row.push_back(std::to_string(f.n_obs));
        r2_row.push_back(detail::fmt_value(f.r_squared_within));
    }
    rows.push_back(const_row);
    rows.push_back(const_se);
    rows.push_back(n_row);
    rows.push_back(r2_row);

    return detail::render_grid(rows) + "\n" + detail::kStarNote + "\n";
}

inline std::string render_grouped_table(const std::vector<GroupedResult>& results) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"Threshold", "Group", "Coefficient", "Std. Error", "p-value", "N", "Significance"});
    for (const auto& gr : results) {
        bool first = true;
        for (const auto& g : gr.groups) {
            rows.push_back({first ? gr.cutoff.label() : "", g.label, detail::fmt_value(g.coef),
                            detail::fmt_value(g.se), detail::fmt_value(g.p), std::to_string(g.n),
                            significance_stars(g.p)});
            first = false;
        }
    }
    return detail::render_grid(rows) + "\n" + detail::kStarNote + "\n";
}

inline std::string render_threshold_table(const ThresholdResult& res) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"Group", "Coefficient", "t-value", "Significance", "N"});
    rows.push_back({"Below threshold", detail::fmt_value(res.below.coef), detail::fmt_value(res.below.t),
                    significance_stars(res.below.p), std::to_string(res.below.n)});
    rows.push_back({"Above threshold", detail::fmt_value(res.above.coef), detail::fmt_value(res.above.t),
                    significance_stars(res.above.p), std::to_string(res.above.n)});
    std::ostringstream extra;
    extra << "Threshold: " << detail::fmt_value(res.threshold) << " (raw "
          << detail::fmt_value(res.threshold_raw) << ")\n";
    if (!std::isnan(res.ci_low))
        extra << "95% LR confidence interval: [" << detail::fmt_value(res.ci_low) << ", "
              << detail::fmt_value(res.ci_high) << "]"
              << (res.ci_noncontiguous ? " (non-contiguous acceptance region)" : "") << "\n";
    if (!std::isnan(res.bootstrap_p))
        extra << "Bootstrap LR p-value: " << detail::fmt_value(res.bootstrap_p) << " ("
              << res.bootstrap_replications << " replications)\n";
    return detail::render_grid(rows) + extra.str();
}

inline std::string render_mediation_table(const std::vector<MediationResult>& results) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Effect"};
    for (const auto& r : results) header.push_back(r.mediator);
    rows.push_back(header);
    auto push = [&](const std::string& label, auto get, auto get_p) {
        std::vector<std::string> coef{label}, se{""};
        for (const auto& r : results) {
            auto [v, s] = get(r);
            coef.push_back(detail::fmt_coef(v, get_p(r)));
            se.push_back(s > 0 || !std::isnan(s) ? detail::fmt_se(s) : "");
        }
        rows.push_back(coef);
        rows.push_back(se);
    };
    push("Path a (treatment->mediator)",
         [](const MediationResult& r) { return std::pair{r.path_a, r.path_a_se}; },
         [](const MediationResult& r) { return r.step1.p_value(r.step1.index_of(r.step1.names[0])); });
    push("Path b (mediator->outcome)",
         [](const MediationResult& r) { return std::pair{r.path_b, r.path_b_se}; },
         [](const MediationResult& r) { return r.step2.p_of(r.mediator); });
    push("Direct effect",
         [](const MediationResult& r) { return std::pair{r.direct_effect, r.direct_se}; },
         [](const MediationResult& r) { return r.step2.p_value(0); });
    push("Total effect",
         [](const MediationResult& r) { return std::pair{r.total_effect, r.total_se}; },
         [](const MediationResult& r) { return r.total_fit.p_value(0); });
    std::vector<std::string> ind{"Indirect effect (a*b)"}, sob{"Sobel z [p]"}, n_row{"N"};
    for (const auto& r : results) {
        ind.push_back(detail::fmt_value(r.indirect_effect));
        sob.push_back(detail::fmt_value(r.sobel_z) + " [" + detail::fmt_value(r.sobel_p) + "]");
        n_row.push_back(std::to_string(r.n_obs));
    }
    rows.push_back(ind);
    rows.push_back(sob);
    rows.push_back(n_row);
    std::string boot;
    for (const auto& r : results)
        if (r.has_bootstrap)
            boot += r.mediator + " bootstrap CI: [" + detail::fmt_value(r.boot_ci_low) + ", " +
                    detail::fmt_value(r.boot_ci_high) + "]\n";
    return detail::render_grid(rows) + "\n" + detail::kStarNote + "\n" + boot;
}

}  // namespace panelfe
