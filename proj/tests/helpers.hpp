// Test-only oracles and fixtures, independent of the library's estimation
// path: dummy-variable OLS, direct cluster-sum covariance, sort-based
// quantiles, and small random-panel generators.
#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "panelfe/design.hpp"
#include "panelfe/fe.hpp"

namespace testutil {

using panelfe::DesignSample;
using panelfe::MatrixXd;
using panelfe::VectorXd;

inline std::string write_temp_csv(const std::string& name, const std::string& content) {
    auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    return path.string();
}

// OLS of y on [X, entity dummies, period dummies, intercept]; returns the
// slope block. The projection route under test must agree with this.
inline VectorXd dummy_ols_slopes(const DesignSample& d, bool entity_fe, bool time_fe) {
    const int n = d.n_rows();
    const int k = static_cast<int>(d.X.cols());
    const int ne = entity_fe ? d.n_entities() - 1 : 0;
    const int np = time_fe ? d.n_periods() - 1 : 0;
    MatrixXd Z = MatrixXd::Zero(n, k + ne + np + 1);
    Z.leftCols(k) = d.X;
    for (int i = 0; i < n; ++i) {
        if (entity_fe && d.entity[i] > 0) Z(i, k + d.entity[i] - 1) = 1.0;
        if (time_fe && d.period[i] > 0) Z(i, k + ne + d.period[i] - 1) = 1.0;
        Z(i, k + ne + np) = 1.0;
    }
    VectorXd beta = Z.colPivHouseholderQr().solve(d.y);
    return beta.head(k);
}

// Residuals from the dummy-variable regression (for projection oracles).
inline VectorXd dummy_ols_residual_of_column(const DesignSample& d, const VectorXd& column,
                                             bool entity_fe, bool time_fe) {
    const int n = d.n_rows();
    const int ne = entity_fe ? d.n_entities() - 1 : 0;
    const int np = time_fe ? d.n_periods() - 1 : 0;
    MatrixXd Z = MatrixXd::Zero(n, ne + np + 1);
    for (int i = 0; i < n; ++i) {
        if (entity_fe && d.entity[i] > 0) Z(i, d.entity[i] - 1) = 1.0;
        if (time_fe && d.period[i] > 0) Z(i, ne + d.period[i] - 1) = 1.0;
        Z(i, ne + np) = 1.0;
    }
    VectorXd beta = Z.colPivHouseholderQr().solve(column);
    return column - Z * beta;
}

// Direct summation CR1 sandwich, no shared code with the implementation.
inline MatrixXd cluster_cov_oracle(const MatrixXd& X, const VectorXd& u,
                                   const std::vector<int>& clusters, int k_params) {
    const int n = static_cast<int>(X.rows());
    const int k = static_cast<int>(X.cols());
    int G = 0;
    for (int c : clusters) G = std::max(G, c + 1);
    MatrixXd xtx = MatrixXd::Zero(k, k);
    for (int i = 0; i < n; ++i) xtx += X.row(i).transpose() * X.row(i);
    MatrixXd bread = xtx.inverse();
    MatrixXd meat = MatrixXd::Zero(k, k);
    for (int g = 0; g < G; ++g) {
        VectorXd s = VectorXd::Zero(k);
        for (int i = 0; i < n; ++i)
            if (clusters[i] == g) s += u(i) * X.row(i).transpose();
        meat += s * s.transpose();
    }
    double factor = double(G) / (G - 1) * double(n - 1) / (n - k_params);
    return factor * bread * meat * bread;
}

inline double quantile_sort_oracle(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    // smallest value whose empirical CDF reaches q
    const int n = static_cast<int>(v.size());
    for (int i = 0; i < n; ++i)
        if (double(i + 1) / n >= q - 1e-15) return v[i];
    return v.back();
}

// Random panel with optional unbalancedness (rows dropped at random) and a
// known linear structure; returns a ready DesignSample.
struct RandomPanel {
    DesignSample design;
    VectorXd true_slopes;
};

inline RandomPanel random_panel(std::mt19937_64& rng, int n_entities, int n_periods, int k,
                                double drop_prob = 0.0, double noise_sd = 0.5) {
    std::normal_distribution<double> norm(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    RandomPanel out;
    out.true_slopes = VectorXd(k);
    for (int j = 0; j < k; ++j) out.true_slopes(j) = norm(rng);

    std::vector<double> fe_e(n_entities), fe_t(n_periods);
    for (auto& v : fe_e) v = norm(rng);
    for (auto& v : fe_t) v = norm(rng);

    DesignSample& d = out.design;
    std::vector<Eigen::RowVectorXd> xrows;
    std::vector<double> ys;
    for (int e = 0; e < n_entities; ++e) {
        int kept = 0;
        for (int t = 0; t < n_periods; ++t) {
            if (drop_prob > 0.0 && unif(rng) < drop_prob && !(t == n_periods - 1 && kept == 0)) continue;
            ++kept;
            Eigen::RowVectorXd x(k);
            for (int j = 0; j < k; ++j) x(j) = norm(rng);
            double y = 1.0 + fe_e[e] + fe_t[t] + x * out.true_slopes + noise_sd * norm(rng);
            xrows.push_back(x);
            ys.push_back(y);
            d.entity.push_back(e);
            d.period.push_back(t);
        }
    }
    // compact indices (an entity or period may have vanished entirely)
    std::map<int, int> emap, pmap;
    for (int e : d.entity) emap.emplace(e, 0);
    for (int p : d.period) pmap.emplace(p, 0);
    for (auto& [kk, v] : emap) { v = static_cast<int>(d.entity_ids.size()); d.entity_ids.push_back("e" + std::to_string(kk)); }
    for (auto& [kk, v] : pmap) { v = static_cast<int>(d.period_values.size()); d.period_values.push_back(kk); }
    for (auto& e : d.entity) e = emap[e];
    for (auto& p : d.period) p = pmap[p];
    d.cluster = d.entity;
    d.cluster_ids = d.entity_ids;

    const int n = static_cast<int>(ys.size());
    d.y.resize(n);
    d.X.resize(n, k);
    for (int i = 0; i < n; ++i) {
        d.y(i) = ys[i];
        d.X.row(i) = xrows[i];
    }
    for (int j = 0; j < k; ++j) d.names.push_back("x" + std::to_string(j));
    return out;
}

}  // namespace testutil
