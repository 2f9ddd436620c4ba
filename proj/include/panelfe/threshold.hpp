#pragma once

#include <random>

#include "panelfe/fe.hpp"
#include "panelfe/parallel.hpp"

namespace panelfe {

struct ThresholdOptions {
    std::string treatment;           // X column whose slope switches by regime
    std::string threshold_variable;  // X column providing the split values
    bool threshold_is_log = false;   // report exp(threshold) as the raw value
    bool full_switching = false;     // all slopes switch, not just the treatment
    FeOptions fe;
};

struct RegimeCoef {
    double coef = kNaN, se = kNaN, t = kNaN, p = kNaN;
    int n = 0;
};

struct ThresholdResult {
    double threshold = kNaN;      // in threshold-variable (design) units
    double threshold_raw = kNaN;  // exp(threshold) when the variable is a log
    RegimeCoef below, above;
    std::vector<double> grid, ssr_profile, lr_profile;
    double ssr_min = kNaN;
    double ssr_linear = kNaN;
    double lr_observed = kNaN;  // linear vs. threshold model
    double bootstrap_p = kNaN;
    int bootstrap_replications = 0;
    int bootstrap_failures = 0;
    double ci_low = kNaN, ci_high = kNaN;
    double ci_level = kNaN;
    bool ci_noncontiguous = false;
};

// Distinct observed threshold values between the trim and 1-trim quantiles
// whose induced regimes each hold at least min_regime rows. Ascending.
inline std::vector<double> grid_candidates(const DesignSample& design,
                                           const std::string& threshold_variable, double trim,
                                           int min_regime) {
    if (trim < 0.0 || trim >= 0.5) throw EstimationError("trim must lie in [0, 0.5)");
    int col = design.require_col(threshold_variable);
    std::vector<double> vals(design.X.col(col).data(), design.X.col(col).data() + design.n_rows());
    std::vector<double> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    double lo = quantile_lower(sorted, trim);
    double hi = quantile_lower(sorted, 1.0 - trim);

    std::vector<double> grid;
    const int n = static_cast<int>(sorted.size());
    for (int i = 0; i < n; ++i) {
        double c = sorted[i];
        if (i > 0 && c == sorted[i - 1]) continue;
        if (c < lo || c > hi) continue;
        int below = static_cast<int>(std::upper_bound(sorted.begin(), sorted.end(), c) - sorted.begin());
        int above = n - below;
        if (below >= min_regime && above >= min_regime) grid.push_back(c);
    }
    if (grid.empty()) throw EstimationError("empty threshold candidate set");
    return grid;
}

inline int default_min_regime(int n_regressors) { return std::max(30, n_regressors + 1 + 5); }

namespace detail {

// Precomputed grid-search machinery. With only the treatment slope
// switching, SSR(c) = SSR_lin - (z_c'e)^2 / z_c'z_c where z_c is the
// below-regime interaction column residualized against the FE projection
// and the linear-model regressors. Everything that does not depend on the
// outcome is computed once, so bootstrap replications reduce to one FE
// projection plus dot products.
class ThresholdEngine {
public:
    ThresholdEngine(const DesignSample& design, const ThresholdOptions& opts, std::vector<double> grid)
        : design_(design), opts_(opts), grid_(std::move(grid)), demeaner_(design, opts.fe) {
        if (grid_.empty()) throw EstimationError("empty threshold grid");
        WithinTransformed wt = within_transform(design, opts_.fe);
        if (!wt.absorbed.empty())
            throw CollinearityError("regressors absorbed by fixed effects", {design.names[wt.absorbed[0]]});
        Z_ = std::move(wt.X);
        y_dem_ = std::move(wt.y);
        ztz_ = Eigen::LDLT<MatrixXd>(Z_.transpose() * Z_);
        if (ztz_.info() != Eigen::Success)
            throw EstimationError("singular linear design in threshold search");

        int tcol = design.require_col(opts.treatment);
        thr_vals_ = design.X.col(design.require_col(opts.threshold_variable));
        VectorXd treat_raw = design.X.col(tcol);

        const int n = design.n_rows();
        const int m = static_cast<int>(grid_.size());
        Zc_ = MatrixXd(n, m);
        znorm2_.resize(m);
        double scale = std::max(1.0, treat_raw.cwiseAbs().maxCoeff());
        for (int c = 0; c < m; ++c) {
            VectorXd d = (thr_vals_.array() <= grid_[c]).cast<double>() * treat_raw.array();
            demeaner_.apply(d);
            VectorXd z = d - Z_ * ztz_.solve(Z_.transpose() * d);
            double nz = z.squaredNorm();
            if (nz <= 1e-20 * scale * scale) nz = 0.0;  // singular candidate, skipped
            Zc_.col(c) = z;
            znorm2_(c) = nz;
        }
    }

    const std::vector<double>& grid() const { return grid_; }
    const VectorXd& y_demeaned() const { return y_dem_; }
    const MatrixXd& Z() const { return Z_; }
    const Demeaner& demeaner() const { return demeaner_; }

    VectorXd linear_fitted(const VectorXd& y_dem) const { return Z_ * ztz_.solve(Z_.transpose() * y_dem); }

    struct Scan {
        double ssr_linear = kNaN;
        double ssr_min = kNaN;
        int argmin = -1;
        std::vector<double> ssr;  // populated when requested
    };

    Scan scan(const VectorXd& y_dem, bool keep_profile) const {
        Scan s;
        VectorXd e = y_dem - linear_fitted(y_dem);
        s.ssr_linear = e.squaredNorm();
        VectorXd gains = Zc_.transpose() * e;
        const int m = static_cast<int>(grid_.size());
        if (keep_profile) s.ssr.assign(m, kNaN);
        for (int c = 0; c < m; ++c) {
            if (znorm2_(c) == 0.0) continue;
            double ssr_c = s.ssr_linear - gains(c) * gains(c) / znorm2_(c);
            if (keep_profile) s.ssr[c] = ssr_c;
            if (s.argmin < 0 || ssr_c < s.ssr_min) {  // strict <: ties keep the smallest candidate
                s.ssr_min = ssr_c;
                s.argmin = c;
            }
        }
        if (s.argmin < 0) throw EstimationError("all threshold candidates singular");
        return s;
    }

private:
    const DesignSample& design_;
    ThresholdOptions opts_;
    std::vector<double> grid_;
    Demeaner demeaner_;
    MatrixXd Z_, Zc_;
    Eigen::LDLT<MatrixXd> ztz_;
    VectorXd y_dem_, thr_vals_, znorm2_;
};

// Design with the treatment (or every regressor) split by regime at c.
inline DesignSample split_design(const DesignSample& design, const ThresholdOptions& opts, double c) {
    int thr_col = design.require_col(opts.threshold_variable);
    VectorXd below = (design.X.col(thr_col).array() <= c).cast<double>();
    DesignSample out = design;
    const int k = static_cast<int>(design.X.cols());
    std::vector<int> to_split;
    for (int j = 0; j < k; ++j) {
        bool split = opts.full_switching || design.names[j] == opts.treatment;
        if (split) to_split.push_back(j);
    }
    out.X.resize(design.n_rows(), k + static_cast<int>(to_split.size()));
    out.names.clear();
    int col = 0;
    for (int j = 0; j < k; ++j) {
        if (std::find(to_split.begin(), to_split.end(), j) != to_split.end()) {
            out.names.push_back(design.names[j] + "_below");
            out.X.col(col++) = design.X.col(j).cwiseProduct(below);
            out.names.push_back(design.names[j] + "_above");
            out.X.col(col++) = design.X.col(j).cwiseProduct((1.0 - below.array()).matrix());
        } else {
            out.names.push_back(design.names[j]);
            out.X.col(col++) = design.X.col(j);
        }
    }
    return out;
}

inline double ssr_of_design(const DesignSample& design, const FeOptions& fe) {
    WithinTransformed wt = within_transform(design, fe);
    VectorXd beta = wt.X.colPivHouseholderQr().solve(wt.y);
    return (wt.y - wt.X * beta).squaredNorm();
}

}  // namespace detail

// Hansen-style grid search: minimize SSR of the regime model over the
// candidate set, then refit at the minimizer for regime coefficients and
// clustered SEs. lr_profile(c) = n (SSR(c) - SSR_min) / SSR_min.
inline ThresholdResult fit_threshold(const DesignSample& design, const ThresholdOptions& opts,
                                     const std::vector<double>& grid) {
    ThresholdResult res;
    res.grid = grid;
    const int n = design.n_rows();

    if (opts.full_switching) {
        res.ssr_profile.resize(grid.size());
        int best = -1;
        for (std::size_t c = 0; c < grid.size(); ++c) {
            res.ssr_profile[c] = detail::ssr_of_design(detail::split_design(design, opts, grid[c]), opts.fe);
            if (best < 0 || res.ssr_profile[c] < res.ssr_profile[best]) best = static_cast<int>(c);
        }
        res.ssr_min = res.ssr_profile[best];
        res.ssr_linear = detail::ssr_of_design(design, opts.fe);
        res.threshold = grid[best];
    } else {
        detail::ThresholdEngine engine(design, opts, grid);
        auto scan = engine.scan(engine.y_demeaned(), true);
        res.ssr_profile = std::move(scan.ssr);
        res.ssr_min = scan.ssr_min;
        res.ssr_linear = scan.ssr_linear;
        res.threshold = grid[scan.argmin];
    }
    res.threshold_raw = opts.threshold_is_log ? std::exp(res.threshold) : res.threshold;
    res.lr_profile.resize(grid.size());
    for (std::size_t c = 0; c < grid.size(); ++c)
        res.lr_profile[c] = std::isnan(res.ssr_profile[c])
                                ? kNaN
                                : n * (res.ssr_profile[c] - res.ssr_min) / res.ssr_min;
    res.lr_observed = n * (res.ssr_linear - res.ssr_min) / res.ssr_min;

    // regime coefficients and clustered inference at the minimizer
    DesignSample split = detail::split_design(design, opts, res.threshold);
    FitResult fit = fit_fe(split, opts.fe);
    int thr_col = design.require_col(opts.threshold_variable);
    auto fill = [&](RegimeCoef& rc, const std::string& name) {
        int j = fit.index_of(name);
        rc.coef = fit.coef(j);
        rc.se = fit.se(j);
        rc.t = fit.t_stat(j);
        rc.p = fit.p_value(j);
    };
    fill(res.below, opts.treatment + "_below");
    fill(res.above, opts.treatment + "_above");
    for (int i = 0; i < n; ++i)
        (design.X(i, thr_col) <= res.threshold ? res.below.n : res.above.n)++;
    return res;
}

// Cluster-preserving residual bootstrap of the linear-vs-threshold LR:
// each entity receives the intact residual vector of a donor entity with
// the same block length, pseudo outcomes are re-projected, and both
// models are refit on the precomputed grid.
inline void bootstrap_lr_test(const DesignSample& design, const ThresholdOptions& opts,
                              const std::vector<double>& grid, int replications, std::uint64_t seed,
                              ThresholdResult& res, int threads = 1) {
    if (replications < 100) throw EstimationError("bootstrap requires at least 100 replications");
    detail::ThresholdEngine engine(design, opts, grid);
    auto obs = engine.scan(engine.y_demeaned(), false);
    double lr_obs = design.n_rows() * (obs.ssr_linear - obs.ssr_min) / obs.ssr_min;

    VectorXd fitted = engine.linear_fitted(engine.y_demeaned());
    VectorXd resid = engine.y_demeaned() - fitted;

    auto entity_rows = detail::group_rows(design.entity, design.n_entities());
    std::map<std::size_t, std::vector<int>> by_size;  // block length -> entity ids
    for (int e = 0; e < design.n_entities(); ++e) by_size[entity_rows[e].size()].push_back(e);

    std::vector<double> lr(replications, kNaN);
    std::vector<char> failed(replications, 0);
    parallel_for(replications, threads, [&](std::size_t r) {
        std::mt19937_64 rng(derive_seed(seed, r));
        VectorXd pseudo = fitted;
        for (int e = 0; e < design.n_entities(); ++e) {
            const auto& pool = by_size.at(entity_rows[e].size());
            int donor = pool[std::uniform_int_distribution<int>(0, static_cast<int>(pool.size()) - 1)(rng)];
            const auto& src = entity_rows[donor];
            const auto& dst = entity_rows[e];
            for (std::size_t i = 0; i < dst.size(); ++i) pseudo(dst[i]) += resid(src[i]);
        }
        try {
            engine.demeaner().apply(pseudo);
            auto s = engine.scan(pseudo, false);
            lr[r] = design.n_rows() * (s.ssr_linear - s.ssr_min) / s.ssr_min;
        } catch (const Error&) {
            failed[r] = 1;
        }
    });

    int n_failed = std::accumulate(failed.begin(), failed.end(), 0);
    if (n_failed > replications / 20)
        throw EstimationError("bootstrap failure rate above 5% (" + std::to_string(n_failed) + "/" +
                              std::to_string(replications) + ")");
    int exceed = 0, valid = 0;
    for (int r = 0; r < replications; ++r) {
        if (failed[r]) continue;
        ++valid;
        if (lr[r] >= lr_obs) ++exceed;
    }
    res.lr_observed = lr_obs;
    res.bootstrap_p = static_cast<double>(exceed) / static_cast<double>(valid);
    res.bootstrap_replications = valid;
    res.bootstrap_failures = n_failed;
}

// Acceptance region {c : LR(c) <= -2 ln(1 - sqrt(level))}, returned as its
// enclosing interval; a non-contiguous region is flagged.
inline std::pair<double, double> lr_confidence_interval(ThresholdResult& res, double level) {
    if (level <= 0.0 || level >= 1.0) throw EstimationError("confidence level must lie in (0,1)");
    if (res.lr_profile.empty()) throw EstimationError("lr_profile not populated");
    const double crit = -2.0 * std::log(1.0 - std::sqrt(level));
    int first = -1, last = -1;
    bool gap = false, in_run = false, run_ended = false;
    for (std::size_t c = 0; c < res.lr_profile.size(); ++c) {
        if (std::isnan(res.lr_profile[c])) continue;
        if (res.lr_profile[c] <= crit) {
            if (run_ended) gap = true;
            if (first < 0) first = static_cast<int>(c);
            last = static_cast<int>(c);
            in_run = true;
        } else if (in_run) {
            run_ended = true;
            in_run = false;
        }
    }
    if (first < 0) throw EstimationError("empty LR acceptance set");
    res.ci_low = res.grid[first];
    res.ci_high = res.grid[last];
    res.ci_level = level;
    res.ci_noncontiguous = gap;
    return {res.ci_low, res.ci_high};
}

struct GroupCutoff {
    enum class Kind { median, mean, tertiles, quantile } kind = Kind::median;
    double q = kNaN;  // for Kind::quantile

    std::string label() const {
        switch (kind) {
            case Kind::median: return "median";
            case Kind::mean: return "mean";
            case Kind::tertiles: return "tertiles";
            case Kind::quantile: {
                std::ostringstream ss;
                ss << "quantile_" << q;
                return ss.str();
            }
        }
        return "?";
    }
};

struct GroupFit {
    std::string label;
    double coef = kNaN, se = kNaN, p = kNaN;
    int n = 0;
};

struct GroupedResult {
    GroupCutoff cutoff;
    std::vector<double> cut_values;  // boundaries in threshold-variable units
    std::vector<GroupFit> groups;
};

// Re-estimates the baseline independently on each induced subsample
// (groups are "value <= cut" vs "> cut"; tertiles give three bands).
inline std::vector<GroupedResult> grouped_fit(const DesignSample& design, const ThresholdOptions& opts,
                                              const std::vector<GroupCutoff>& cutoffs) {
    int thr_col = design.require_col(opts.threshold_variable);
    std::vector<double> vals(design.X.col(thr_col).data(), design.X.col(thr_col).data() + design.n_rows());

    std::vector<GroupedResult> results;
    for (const auto& cutoff : cutoffs) {
        GroupedResult gr;
        gr.cutoff = cutoff;
        std::vector<double> cuts;
        switch (cutoff.kind) {
            case GroupCutoff::Kind::median: cuts = {quantile_lower(vals, 0.5)}; break;
            case GroupCutoff::Kind::mean:
                cuts = {std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size()};
                break;
            case GroupCutoff::Kind::tertiles:
                cuts = {quantile_lower(vals, 1.0 / 3.0), quantile_lower(vals, 2.0 / 3.0)};
                break;
            case GroupCutoff::Kind::quantile: cuts = {quantile_lower(vals, cutoff.q)}; break;
        }
        gr.cut_values = cuts;

        std::vector<std::pair<double, double>> bands;  // (lower, upper], lower exclusive
        double lo = -kInf;
        for (double c : cuts) {
            bands.emplace_back(lo, c);
            lo = c;
        }
        bands.emplace_back(lo, kInf);
        static const char* kTwo[] = {"low", "high"};
        static const char* kThree[] = {"low", "middle", "high"};

        for (std::size_t b = 0; b < bands.size(); ++b) {
            std::vector<int> rows;
            for (int i = 0; i < design.n_rows(); ++i)
                if (vals[i] > bands[b].first && vals[i] <= bands[b].second) rows.push_back(i);
            if (rows.empty()) throw EstimationError("empty group for cutoff " + cutoff.label());
            FitResult fit = fit_fe(design.subset(rows), opts.fe);
            GroupFit g;
            g.label = bands.size() == 2 ? kTwo[b] : kThree[b];
            g.coef = fit.coef_of(opts.treatment);
            g.se = fit.se_of(opts.treatment);
            g.p = fit.p_of(opts.treatment);
            g.n = static_cast<int>(rows.size());
            gr.groups.push_back(g);
        }
        results.push_back(std::move(gr));
    }
    return results;
}

}  // namespace panelfe
