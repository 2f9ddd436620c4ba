#pragma once

#include <map>
#include <numeric>

#include "panelfe/design.hpp"
#include "panelfe/stats.hpp"

namespace panelfe {

struct FeOptions {
    bool entity_fe = true;
    bool time_fe = true;
    double demean_tol = 1e-12;
    int max_sweeps = 10000;
    double collinearity_rcond = 1e-12;
    double conf_level = 0.95;
};

struct WithinTransformed {
    VectorXd y;                 // demeaned dependent
    MatrixXd X;                 // demeaned regressors
    double y_mean = 0.0;        // grand means of the raw design
    VectorXd x_means;
    std::vector<int> absorbed;  // columns numerically zero after demeaning
    int sweeps = 0;
};

namespace detail {

inline std::vector<std::vector<int>> group_rows(const std::vector<int>& labels, int n_groups) {
    std::vector<std::vector<int>> out(n_groups);
    for (int i = 0; i < static_cast<int>(labels.size()); ++i) out[labels[i]].push_back(i);
    return out;
}

// One demeaning pass over groups; returns the largest mean subtracted.
inline double demean_pass(MatrixXd& W, const std::vector<std::vector<int>>& groups) {
    double max_delta = 0.0;
    for (const auto& rows : groups) {
        if (rows.empty()) continue;
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(W.cols());
        for (int r : rows) mean += W.row(r);
        mean /= static_cast<double>(rows.size());
        for (int r : rows) W.row(r) -= mean;
        max_delta = std::max(max_delta, mean.cwiseAbs().maxCoeff());
    }
    return max_delta;
}

}  // namespace detail

// Removes entity and/or period means from [y X] by alternating demeaning.
// A single double pass is exact on balanced panels; unbalanced two-way
// panels iterate to the tolerance. The grand mean is always removed, so
// the mean equation yields the reported intercept.
inline WithinTransformed within_transform(const DesignSample& design, const FeOptions& opts = {}) {
    const int n = design.n_rows();
    const int k = static_cast<int>(design.X.cols());
    if (n == 0) throw EstimationError("within_transform on empty design");

    MatrixXd W(n, k + 1);
    W.col(0) = design.y;
    if (k > 0) W.rightCols(k) = design.X;

    WithinTransformed out;
    out.y_mean = design.y.mean();
    out.x_means = k > 0 ? VectorXd(design.X.colwise().mean()) : VectorXd();

    VectorXd scale(k + 1);
    for (int j = 0; j <= k; ++j) scale(j) = std::max(1.0, W.col(j).cwiseAbs().maxCoeff());

    Eigen::RowVectorXd grand = W.colwise().mean();
    W.rowwise() -= grand;

    const bool two_way = opts.entity_fe && opts.time_fe;
    if (opts.entity_fe || opts.time_fe) {
        auto entity_groups = opts.entity_fe ? detail::group_rows(design.entity, design.n_entities())
                                            : std::vector<std::vector<int>>{};
        auto period_groups = opts.time_fe ? detail::group_rows(design.period, design.n_periods())
                                          : std::vector<std::vector<int>>{};
        int sweep = 0;
        for (; sweep < opts.max_sweeps; ++sweep) {
            double delta = 0.0;
            if (opts.entity_fe) delta = std::max(delta, detail::demean_pass(W, entity_groups));
            if (opts.time_fe) delta = std::max(delta, detail::demean_pass(W, period_groups));
            double rel = 0.0;
            for (int j = 0; j <= k; ++j) rel = std::max(rel, delta / scale(j));
            if (rel < opts.demean_tol) break;
            if (!two_way && sweep >= 1) break;  // one-way demeaning is a single projection
        }
        if (sweep >= opts.max_sweeps)
            throw EstimationError("alternating demeaning did not converge within " +
                                  std::to_string(opts.max_sweeps) + " sweeps");
        out.sweeps = sweep + 1;
    }

    out.y = W.col(0);
    out.X = k > 0 ? MatrixXd(W.rightCols(k)) : MatrixXd(n, 0);
    for (int j = 0; j < k; ++j)
        if (out.X.col(j).cwiseAbs().maxCoeff() <= 1e-8 * scale(j + 1)) out.absorbed.push_back(j);
    return out;
}

// Reusable FE projection for single vectors (grand mean + alternating
// entity/period demeaning on the same row structure as a design).
struct Demeaner {
    std::vector<std::vector<int>> entity_groups, period_groups;
    bool entity_fe, time_fe;
    double tol;
    int max_sweeps;

    Demeaner(const DesignSample& design, const FeOptions& opts = {})
        : entity_fe(opts.entity_fe), time_fe(opts.time_fe), tol(opts.demean_tol), max_sweeps(opts.max_sweeps) {
        if (entity_fe) entity_groups = detail::group_rows(design.entity, design.n_entities());
        if (time_fe) period_groups = detail::group_rows(design.period, design.n_periods());
    }

    void apply(VectorXd& v) const {
        v.array() -= v.mean();
        if (!entity_fe && !time_fe) return;
        double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
        MatrixXd w = v;
        const bool two_way = entity_fe && time_fe;
        int sweep = 0;
        for (; sweep < max_sweeps; ++sweep) {
            double delta = 0.0;
            if (entity_fe) delta = std::max(delta, detail::demean_pass(w, entity_groups));
            if (time_fe) delta = std::max(delta, detail::demean_pass(w, period_groups));
            if (delta / scale < tol) break;
            if (!two_way && sweep >= 1) break;
        }
        if (sweep >= max_sweeps) throw EstimationError("alternating demeaning did not converge");
        v = w.col(0);
    }
};

// CR1 sandwich: (G/(G-1))((N-1)/(N-K)) * (X'X)^-1 [sum_g s_g s_g'] (X'X)^-1
// with s_g = X_g' u_g. K counts slopes plus absorbed FE parameters.
inline MatrixXd cluster_robust_cov(const MatrixXd& X, const VectorXd& residuals,
                                   const std::vector<int>& clusters, int k_params) {
    const int n = static_cast<int>(X.rows());
    const int k = static_cast<int>(X.cols());
    if (static_cast<int>(clusters.size()) != n)
        throw EstimationError("cluster labels not aligned with design rows");
    int n_clusters = 0;
    for (int c : clusters) n_clusters = std::max(n_clusters, c + 1);

    MatrixXd xtx = X.transpose() * X;
    Eigen::LDLT<MatrixXd> ldlt(xtx);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw EstimationError("singular bread matrix in cluster covariance");

    MatrixXd scores = MatrixXd::Zero(n_clusters, k);
    for (int i = 0; i < n; ++i) scores.row(clusters[i]) += residuals(i) * X.row(i);
    MatrixXd meat = scores.transpose() * scores;

    const double g = static_cast<double>(n_clusters);
    const double nn = static_cast<double>(n);
    if (n_clusters < 2) throw EstimationError("fewer than 2 clusters");
    if (nn - k_params <= 0) throw EstimationError("no residual degrees of freedom");
    const double factor = g / (g - 1.0) * (nn - 1.0) / (nn - static_cast<double>(k_params));

    MatrixXd bread_meat = ldlt.solve(meat);
    MatrixXd cov = factor * ldlt.solve(bread_meat.transpose()).transpose();
    return 0.5 * (cov + cov.transpose());  // symmetrize roundoff
}

// 1/(1-R^2) from each column's auxiliary regression on the remaining
// columns; computed on the within-transformed design.
inline std::map<std::string, double> vif(const MatrixXd& X, const std::vector<std::string>& names) {
    const int k = static_cast<int>(X.cols());
    std::map<std::string, double> out;
    if (k < 2) {
        for (int j = 0; j < k; ++j) out[names[j]] = 1.0;
        return out;
    }
    for (int j = 0; j < k; ++j) {
        VectorXd target = X.col(j);
        MatrixXd others(X.rows(), k - 1);
        int c = 0;
        for (int m = 0; m < k; ++m)
            if (m != j) others.col(c++) = X.col(m);
        double tss = target.squaredNorm();
        if (tss <= 0.0) throw EstimationError("vif: zero-variance column '" + names[j] + "'");
        VectorXd beta = others.colPivHouseholderQr().solve(target);
        double ssr = (target - others * beta).squaredNorm();
        double r2 = 1.0 - ssr / tss;
        out[names[j]] = r2 >= 1.0 - 1e-14 ? kInf : 1.0 / (1.0 - r2);
    }
    return out;
}

struct FitResult {
    std::vector<std::string> names;
    VectorXd coef;
    MatrixXd cov;
    VectorXd se, t_stat, p_value, ci_low, ci_high;
    double intercept = kNaN;
    double intercept_se = kNaN;
    int n_obs = 0;
    int n_clusters = 0;
    int k_params = 0;  // slopes + absorbed FE parameters
    double df_t = 0;   // inference dof: G - 1
    double r_squared_within = kNaN;
    double ssr = kNaN, tss = kNaN;
    std::map<std::string, double> vif;
    VectorXd residuals, fitted;  // on the within-transformed scale

    int index_of(const std::string& name) const {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw EstimationError("fit has no coefficient '" + name + "'");
        return static_cast<int>(it - names.begin());
    }
    double coef_of(const std::string& name) const { return coef(index_of(name)); }
    double se_of(const std::string& name) const { return se(index_of(name)); }
    double p_of(const std::string& name) const { return p_value(index_of(name)); }
};

namespace detail {

// Rank / collinearity check on the pivoted R factor; names offending columns.
inline void check_collinearity(const Eigen::ColPivHouseholderQR<MatrixXd>& qr,
                               const std::vector<std::string>& names, double rcond_tol) {
    const int k = static_cast<int>(qr.matrixR().cols());
    if (k == 0) return;
    VectorXd diag = qr.matrixR().diagonal().cwiseAbs();
    double dmax = diag.maxCoeff();
    std::vector<std::string> offenders;
    for (int j = 0; j < k; ++j)
        if (diag(j) <= rcond_tol * dmax) offenders.push_back(names[qr.colsPermutation().indices()(j)]);
    if (!offenders.empty()) {
        std::string msg = "perfectly collinear regressors:";
        for (const auto& s : offenders) msg += " " + s;
        throw CollinearityError(msg, offenders);
    }
}

inline int fe_param_count(const DesignSample& design, const FeOptions& opts) {
    int fe = 1;  // grand mean
    if (opts.entity_fe) fe += design.n_entities() - 1;
    if (opts.time_fe) fe += design.n_periods() - 1;
    return fe;
}

}  // namespace detail

// Two-way FE least squares with CR1 clustered covariance. Inference uses
// a t reference with G-1 degrees of freedom; the intercept is the
// grand-mean normalization y_bar - x_bar' b.
inline FitResult fit_fe(const DesignSample& design, const FeOptions& opts = {}) {
    const int n = design.n_rows();
    const int k = static_cast<int>(design.X.cols());
    if (design.n_clusters() < 2) throw EstimationError("fewer than 2 clusters");

    WithinTransformed wt = within_transform(design, opts);
    if (!wt.absorbed.empty()) {
        std::vector<std::string> cols;
        std::string msg = "regressors absorbed by fixed effects (collinear):";
        for (int j : wt.absorbed) {
            cols.push_back(design.names[j]);
            msg += " " + design.names[j];
        }
        throw CollinearityError(msg, cols);
    }

    FitResult fit;
    fit.names = design.names;
    fit.n_obs = n;
    fit.n_clusters = design.n_clusters();
    fit.k_params = k + detail::fe_param_count(design, opts);
    if (n - fit.k_params < 1)
        throw EstimationError("too few rows for the number of free parameters");

    Eigen::ColPivHouseholderQR<MatrixXd> qr(wt.X);
    detail::check_collinearity(qr, design.names, opts.collinearity_rcond);
    fit.coef = qr.solve(wt.y);
    fit.fitted = wt.X * fit.coef;
    fit.residuals = wt.y - fit.fitted;
    fit.ssr = fit.residuals.squaredNorm();
    fit.tss = wt.y.squaredNorm();
    fit.r_squared_within = fit.tss > 0.0 ? 1.0 - fit.ssr / fit.tss : kNaN;

    fit.cov = cluster_robust_cov(wt.X, fit.residuals, design.cluster, fit.k_params);
    fit.df_t = static_cast<double>(design.n_clusters() - 1);
    fit.se.resize(k);
    fit.t_stat.resize(k);
    fit.p_value.resize(k);
    fit.ci_low.resize(k);
    fit.ci_high.resize(k);
    const double tcrit = t_quantile(0.5 + opts.conf_level / 2.0, fit.df_t);
    for (int j = 0; j < k; ++j) {
        fit.se(j) = std::sqrt(std::max(0.0, fit.cov(j, j)));
        fit.t_stat(j) = fit.se(j) > 0.0 ? fit.coef(j) / fit.se(j) : kNaN;
        fit.p_value(j) = t_pvalue(fit.t_stat(j), fit.df_t);
        fit.ci_low(j) = fit.coef(j) - tcrit * fit.se(j);
        fit.ci_high(j) = fit.coef(j) + tcrit * fit.se(j);
    }

    fit.intercept = wt.y_mean - wt.x_means.dot(fit.coef);
    fit.intercept_se = std::sqrt(std::max(0.0, (wt.x_means.transpose() * fit.cov * wt.x_means)(0, 0)));
    if (k >= 2) fit.vif = vif(wt.X, design.names);
    else if (k == 1) fit.vif[design.names[0]] = 1.0;
    return fit;
}

struct WaldResult {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
};

// Chi-square test of coefficient equality across independent subsample
// fits; pairwise when two fits are given, joint otherwise.
inline WaldResult wald_equality(const std::vector<FitResult>& fits, const std::string& coefficient) {
    if (fits.size() < 2) throw EstimationError("wald_equality needs at least two fits");
    std::vector<double> b, v;
    for (const auto& f : fits) {
        int j = f.index_of(coefficient);
        b.push_back(f.coef(j));
        double var = f.cov(j, j);
        if (var <= 0.0) throw EstimationError("wald_equality: nonpositive variance for '" + coefficient + "'");
        v.push_back(var);
    }
    double wsum = 0.0, wmean = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        wsum += 1.0 / v[i];
        wmean += b[i] / v[i];
    }
    wmean /= wsum;
    WaldResult out;
    for (std::size_t i = 0; i < b.size(); ++i) out.statistic += (b[i] - wmean) * (b[i] - wmean) / v[i];
    out.dof = static_cast<int>(b.size()) - 1;
    out.p_value = chi2_pvalue(out.statistic, out.dof);
    return out;
}

}  // namespace panelfe
