#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "panelfe/common.hpp"

namespace panelfe {

// Long-format panel: rows sorted by (entity label, period), one numeric
// column per variable, NaN marks a missing cell. Immutable after load.
struct PanelDataset {
    std::vector<std::string> entity_labels;  // entity index -> original id
    std::vector<int> entity;                 // per row
    std::vector<int> period;                 // per row, raw period value (year)
    std::vector<std::string> variables;
    MatrixXd values;                         // n_rows x n_variables

    int n_rows() const { return static_cast<int>(entity.size()); }
    int n_entities() const { return static_cast<int>(entity_labels.size()); }

    int var_index(const std::string& name) const {
        auto it = std::find(variables.begin(), variables.end(), name);
        return it == variables.end() ? -1 : static_cast<int>(it - variables.begin());
    }

    int require_var(const std::string& name) const {
        int j = var_index(name);
        if (j < 0) throw DataError("unknown variable: " + name);
        return j;
    }

    int n_present(const std::string& name) const {
        int j = require_var(name);
        int n = 0;
        for (int i = 0; i < n_rows(); ++i)
            if (!is_missing(values(i, j))) ++n;
        return n;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline double parse_cell(const std::string& raw) {
    std::string s = strip(raw);
    if (s.empty()) return kNaN;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == nullptr || *end != '\0') return kNaN;  // non-parsable -> missing
    return v;
}

}  // namespace detail

// CSV schema: `entity`, `period`, then one column per variable. Empty or
// non-parsable numeric cells become missing; duplicate (entity, period)
// rows are an error. Rows are re-sorted by (entity label, period).
inline PanelDataset load_panel(const std::string& path,
                               const std::string& entity_col = "entity",
                               const std::string& period_col = "period") {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open panel file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty panel file: " + path);
    auto header = detail::split_csv_line(line);
    for (auto& h : header) h = detail::strip(h);

    int entity_idx = -1, period_idx = -1;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == entity_col) entity_idx = static_cast<int>(j);
        if (header[j] == period_col) period_idx = static_cast<int>(j);
    }
    if (entity_idx < 0) throw DataError("panel file is missing the entity column '" + entity_col + "'");
    if (period_idx < 0) throw DataError("panel file is missing the period column '" + period_col + "'");

    std::vector<std::string> var_names;
    std::vector<int> var_cols;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (static_cast<int>(j) == entity_idx || static_cast<int>(j) == period_idx) continue;
        var_names.push_back(header[j]);
        var_cols.push_back(static_cast<int>(j));
    }

    struct Row {
        std::string entity;
        int period;
        std::vector<double> vals;
    };
    std::vector<Row> rows;
    std::map<std::pair<std::string, int>, int> seen;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::strip(line).empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() < header.size()) fields.resize(header.size());
        Row r;
        r.entity = detail::strip(fields[entity_idx]);
        std::string pstr = detail::strip(fields[period_idx]);
        char* end = nullptr;
        long p = std::strtol(pstr.c_str(), &end, 10);
        if (r.entity.empty() || pstr.empty() || *end != '\0')
            throw DataError("line " + std::to_string(line_no) + ": bad entity/period");
        r.period = static_cast<int>(p);
        auto key = std::make_pair(r.entity, r.period);
        if (seen.count(key))
            throw DataError("duplicate (entity, period) row: (" + r.entity + ", " + pstr + ")");
        seen[key] = 1;
        r.vals.reserve(var_cols.size());
        for (int c : var_cols) r.vals.push_back(detail::parse_cell(fields[c]));
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw DataError("panel file has no data rows: " + path);

    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return a.entity != b.entity ? a.entity < b.entity : a.period < b.period;
    });

    PanelDataset ds;
    ds.variables = var_names;
    ds.values.resize(static_cast<int>(rows.size()), static_cast<int>(var_names.size()));
    std::unordered_map<std::string, int> entity_of;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto it = entity_of.find(rows[i].entity);
        int e;
        if (it == entity_of.end()) {
            e = static_cast<int>(ds.entity_labels.size());
            entity_of.emplace(rows[i].entity, e);
            ds.entity_labels.push_back(rows[i].entity);
        } else {
            e = it->second;
        }
        ds.entity.push_back(e);
        ds.period.push_back(rows[i].period);
        for (std::size_t j = 0; j < var_names.size(); ++j)
            ds.values(static_cast<int>(i), static_cast<int>(j)) = rows[i].vals[j];
    }
    return ds;
}

// Order statistic at fraction q, lower-value interpolation (inverted CDF):
// the smallest sample value v with #(x <= v) >= ceil(q*n). Splits built
// from it are reproducible bit-exactly.
inline double quantile_lower(std::vector<double> sorted_or_not, double q) {
    if (sorted_or_not.empty()) throw DataError("quantile of empty column");
    if (q < 0.0 || q > 1.0) throw DataError("quantile fraction outside [0,1]");
    std::sort(sorted_or_not.begin(), sorted_or_not.end());
    const auto n = sorted_or_not.size();
    if (q <= 0.0) return sorted_or_not.front();
    auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    if (k < 1) k = 1;
    if (k > n) k = n;
    return sorted_or_not[k - 1];
}

inline double quantile_of(const PanelDataset& data, const std::string& variable, double q) {
    int j = data.require_var(variable);
    std::vector<double> vals;
    vals.reserve(data.n_rows());
    for (int i = 0; i < data.n_rows(); ++i)
        if (!is_missing(data.values(i, j))) vals.push_back(data.values(i, j));
    return quantile_lower(std::move(vals), q);
}

}  // namespace panelfe
