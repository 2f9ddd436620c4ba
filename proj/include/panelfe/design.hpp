#pragma once

#include <map>
#include <optional>
#include <unordered_map>

#include "panelfe/dataset.hpp"

namespace panelfe {

enum class Transform { identity, log };

struct Var {
    std::string name;
    Transform transform = Transform::identity;
    int lag = 0;  // periods; lags require consecutive integer periods

    std::string label() const {
        std::string base = transform == Transform::log ? "log(" + name + ")" : name;
        if (lag > 0) base += "_lag" + std::to_string(lag);
        return base;
    }
};

// Keep rows with lower < value <= upper, evaluated on the raw variable.
struct SampleFilter {
    std::string variable;
    double lower = -kInf;
    double upper = kInf;
};

struct ModelSpec {
    Var dependent;
    std::vector<Var> treatments;
    std::vector<Var> controls;
    bool entity_fe = true;
    bool time_fe = true;
    std::string cluster;  // variable name; empty = cluster by entity
    std::optional<SampleFilter> sample_filter;

    std::vector<Var> regressors() const {
        std::vector<Var> out = treatments;
        out.insert(out.end(), controls.begin(), controls.end());
        return out;
    }
};

enum class LogPolicy { drop_and_count, strict };

// Listwise-complete estimation sample for one ModelSpec, rows sorted by
// (entity label, period); entity/period/cluster indices are compacted.
struct DesignSample {
    VectorXd y;
    MatrixXd X;
    std::vector<std::string> names;  // X column labels

    std::vector<int> entity;   // 0..n_entities-1
    std::vector<int> period;   // 0..n_periods-1
    std::vector<int> cluster;  // 0..n_clusters-1
    std::vector<std::string> entity_ids;
    std::vector<int> period_values;
    std::vector<std::string> cluster_ids;

    int n_dropped_missing = 0;
    int n_dropped_nonpositive_log = 0;
    int n_dropped_filter = 0;

    int n_rows() const { return static_cast<int>(y.size()); }
    int n_entities() const { return static_cast<int>(entity_ids.size()); }
    int n_periods() const { return static_cast<int>(period_values.size()); }
    int n_clusters() const { return static_cast<int>(cluster_ids.size()); }

    int col_index(const std::string& label) const {
        auto it = std::find(names.begin(), names.end(), label);
        return it == names.end() ? -1 : static_cast<int>(it - names.begin());
    }

    int require_col(const std::string& label) const {
        int j = col_index(label);
        if (j < 0) throw DataError("design has no column '" + label + "'");
        return j;
    }

    // Row subset, re-compacting entity/period/cluster indices.
    DesignSample subset(const std::vector<int>& rows) const {
        DesignSample out;
        out.names = names;
        const int m = static_cast<int>(rows.size());
        out.y.resize(m);
        out.X.resize(m, X.cols());
        std::map<int, int> emap, pmap, cmap;
        for (int r : rows) {
            emap.emplace(entity[r], 0);
            pmap.emplace(period[r], 0);
            cmap.emplace(cluster[r], 0);
        }
        for (auto& [k, v] : emap) { v = static_cast<int>(out.entity_ids.size()); out.entity_ids.push_back(entity_ids[k]); }
        for (auto& [k, v] : pmap) { v = static_cast<int>(out.period_values.size()); out.period_values.push_back(period_values[k]); }
        for (auto& [k, v] : cmap) { v = static_cast<int>(out.cluster_ids.size()); out.cluster_ids.push_back(cluster_ids[k]); }
        for (int i = 0; i < m; ++i) {
            int r = rows[i];
            out.y(i) = y(r);
            out.X.row(i) = X.row(r);
            out.entity.push_back(emap[entity[r]]);
            out.period.push_back(pmap[period[r]]);
            out.cluster.push_back(cmap[cluster[r]]);
        }
        return out;
    }

    // Same design with selected X columns removed.
    DesignSample drop_columns(const std::vector<std::string>& labels) const {
        DesignSample out = *this;
        std::vector<int> keep;
        out.names.clear();
        for (int j = 0; j < static_cast<int>(names.size()); ++j) {
            if (std::find(labels.begin(), labels.end(), names[j]) == labels.end()) {
                keep.push_back(j);
                out.names.push_back(names[j]);
            }
        }
        out.X.resize(y.size(), static_cast<int>(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j) out.X.col(j) = X.col(keep[j]);
        return out;
    }
};

namespace detail {

struct PanelIndex {
    std::unordered_map<long long, int> row_of;  // (entity, period) -> row
    static long long key(int e, int p) { return (static_cast<long long>(e) << 32) | static_cast<unsigned>(p); }

    explicit PanelIndex(const PanelDataset& data) {
        row_of.reserve(data.n_rows() * 2);
        for (int i = 0; i < data.n_rows(); ++i)
            row_of.emplace(key(data.entity[i], data.period[i]), i);
    }

    int lookup(int e, int p) const {
        auto it = row_of.find(key(e, p));
        return it == row_of.end() ? -1 : it->second;
    }
};

// Value of var at design row i, honoring lag and transform.
// Returns NaN when unavailable; sets nonpositive when a log is infeasible.
inline double eval_var(const PanelDataset& data, const PanelIndex& index, int row, const Var& v,
                       int col, bool& nonpositive) {
    int src = row;
    if (v.lag > 0) {
        src = index.lookup(data.entity[row], data.period[row] - v.lag);
        if (src < 0) return kNaN;  // gap years break the lag chain
    }
    double raw = data.values(src, col);
    if (is_missing(raw)) return kNaN;
    if (v.transform == Transform::log) {
        if (raw <= 0.0) {
            nonpositive = true;
            return kNaN;
        }
        return std::log(raw);
    }
    return raw;
}

}  // namespace detail

inline DesignSample build_design(const PanelDataset& data, const ModelSpec& spec,
                                 LogPolicy log_policy = LogPolicy::drop_and_count) {
    std::vector<Var> vars;
    vars.push_back(spec.dependent);
    for (const auto& v : spec.regressors()) vars.push_back(v);

    std::vector<int> var_cols;
    for (const auto& v : vars) var_cols.push_back(data.require_var(v.name));
    int filter_col = -1;
    if (spec.sample_filter) filter_col = data.require_var(spec.sample_filter->variable);
    int cluster_col = -1;
    if (!spec.cluster.empty()) cluster_col = data.require_var(spec.cluster);

    detail::PanelIndex index(data);
    const int k = static_cast<int>(vars.size());

    std::vector<int> rows;
    std::vector<std::vector<double>> cells;
    DesignSample out;
    for (int i = 0; i < data.n_rows(); ++i) {
        if (filter_col >= 0) {
            double f = data.values(i, filter_col);
            if (is_missing(f)) { ++out.n_dropped_missing; continue; }
            if (!(f > spec.sample_filter->lower && f <= spec.sample_filter->upper)) {
                ++out.n_dropped_filter;
                continue;
            }
        }
        if (cluster_col >= 0 && is_missing(data.values(i, cluster_col))) {
            ++out.n_dropped_missing;
            continue;
        }
        std::vector<double> row_vals(k);
        bool ok = true, nonpositive = false;
        for (int j = 0; j < k; ++j) {
            row_vals[j] = detail::eval_var(data, index, i, vars[j], var_cols[j], nonpositive);
            if (is_missing(row_vals[j])) { ok = false; break; }
        }
        if (!ok) {
            if (nonpositive) {
                if (log_policy == LogPolicy::strict)
                    throw DataError("log transform applied to nonpositive value (entity " +
                                    data.entity_labels[data.entity[i]] + ", period " +
                                    std::to_string(data.period[i]) + ")");
                ++out.n_dropped_nonpositive_log;
            } else {
                ++out.n_dropped_missing;
            }
            continue;
        }
        rows.push_back(i);
        cells.push_back(std::move(row_vals));
    }
    if (rows.empty()) throw DataError("empty estimation sample after listwise deletion");

    const int n = static_cast<int>(rows.size());
    out.y.resize(n);
    out.X.resize(n, k - 1);
    for (const auto& v : spec.regressors()) out.names.push_back(v.label());
    for (int i = 0; i < n; ++i) {
        out.y(i) = cells[i][0];
        for (int j = 1; j < k; ++j) out.X(i, j - 1) = cells[i][j];
    }

    // Compact entity/period indices over retained rows (input is sorted, so
    // iteration order is deterministic and row-permutation independent).
    std::map<int, int> emap;
    std::map<int, int> pmap;
    std::map<std::string, int> cmap;
    for (int r : rows) {
        emap.emplace(data.entity[r], 0);
        pmap.emplace(data.period[r], 0);
    }
    for (auto& [e, idx] : emap) { idx = static_cast<int>(out.entity_ids.size()); out.entity_ids.push_back(data.entity_labels[e]); }
    for (auto& [p, idx] : pmap) { idx = static_cast<int>(out.period_values.size()); out.period_values.push_back(p); }
    for (int r : rows) {
        out.entity.push_back(emap[data.entity[r]]);
        out.period.push_back(pmap[data.period[r]]);
    }
    if (cluster_col < 0) {
        out.cluster = out.entity;
        out.cluster_ids = out.entity_ids;
    } else {
        // cluster variable must be constant within entity
        std::unordered_map<int, double> cluster_of_entity;
        for (int r : rows) {
            double c = data.values(r, cluster_col);
            auto [it, fresh] = cluster_of_entity.emplace(data.entity[r], c);
            if (!fresh && it->second != c)
                throw DataError("cluster variable '" + spec.cluster + "' varies within entity " +
                                data.entity_labels[data.entity[r]]);
        }
        for (int r : rows) {
            std::ostringstream label;
            label << data.values(r, cluster_col);
            auto [it, fresh] = cmap.emplace(label.str(), static_cast<int>(out.cluster_ids.size()));
            if (fresh) out.cluster_ids.push_back(label.str());
            out.cluster.push_back(it->second);
        }
    }
    return out;
}

}  // namespace panelfe
