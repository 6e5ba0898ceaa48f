#ifndef RGMWM_IO_HPP
#define RGMWM_IO_HPP

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rgmwm/errors.hpp"
#include "rgmwm/gmwm.hpp"
#include "rgmwm/models.hpp"
#include "rgmwm/wavelet.hpp"
#include "rgmwm/wv.hpp"

namespace rgmwm {

// All numeric output uses 17 significant digits so values round-trip exactly.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& tok, long line) {
    try {
        std::size_t used = 0;
        double v = std::stod(tok, &used);
        while (used < tok.size() && std::isspace(static_cast<unsigned char>(tok[used]))) ++used;
        if (used != tok.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw parse_error("cannot parse '" + tok + "' as a number", line);
    }
}

inline bool looks_numeric(const std::string& tok) {
    try {
        std::size_t used = 0;
        (void)std::stod(tok, &used);
        return used > 0;
    } catch (const std::exception&) {
        return false;
    }
}

} // namespace detail

// Time-series CSV: one value per line, optional single header line.
inline TimeSeries read_series_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open input file: " + path);
    std::vector<double> values;
    std::string line;
    long lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty()) continue;
        if (first && !detail::looks_numeric(t)) {
            first = false;  // header
            continue;
        }
        first = false;
        values.push_back(detail::parse_double(t, lineno));
    }
    if (values.size() < 4) throw parse_error("input series has fewer than 4 values", lineno);
    return TimeSeries(std::move(values));
}

inline void write_series_csv(const std::string& path, const TimeSeries& series) {
    std::ofstream out(path);
    if (!out) throw invalid_input("cannot open output file: " + path);
    for (double v : series.values()) out << format_double(v) << "\n";
}

// Lattice CSV: K rows of M comma-separated values.
inline LatticeField read_lattice_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open input file: " + path);
    std::vector<double> values;
    std::size_t cols = 0, rows = 0;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(t);
        std::string tok;
        while (std::getline(ss, tok, ',')) row.push_back(detail::parse_double(detail::trim(tok), lineno));
        if (cols == 0)
            cols = row.size();
        else if (row.size() != cols)
            throw parse_error("row has " + std::to_string(row.size()) + " values, expected " +
                                  std::to_string(cols),
                              lineno);
        values.insert(values.end(), row.begin(), row.end());
        ++rows;
    }
    if (rows < 2 || cols < 2) throw parse_error("lattice input must be at least 2x2", lineno);
    return LatticeField(rows, cols, std::move(values));
}

inline void write_lattice_csv(const std::string& path, const LatticeField& field) {
    std::ofstream out(path);
    if (!out) throw invalid_input("cannot open output file: " + path);
    for (std::size_t r = 0; r < field.rows(); ++r) {
        for (std::size_t c = 0; c < field.cols(); ++c)
            out << (c ? "," : "") << format_double(field.at(r, c));
        out << "\n";
    }
}

inline void write_indices(const std::string& path, const std::vector<std::size_t>& indices) {
    std::ofstream out(path);
    if (!out) throw invalid_input("cannot open output file: " + path);
    for (auto i : indices) out << i << "\n";
}

// Fit report: parameter table in the estimate / CI-low / CI-high layout.
inline std::string format_fit_report(const FitResult& r, const std::optional<JTestResult>& jt = {}) {
    std::ostringstream os;
    os << "model: " << r.model_spec.format() << "\n";
    os << "fitted: " << r.model.format() << "\n";
    os << "estimator: " << (r.options.robust ? "RGMWM" : "GMWM");
    if (r.options.robust) os << " (efficiency " << r.options.efficiency << ")";
    os << "\n";
    os << "omega: " << omega_kind_name(r.options.omega) << "\n";
    os << "n: " << (r.rows > 0 ? std::to_string(r.rows) + "x" + std::to_string(r.cols)
                               : std::to_string(r.n_obs))
       << "\n";
    os << "scales: " << r.wv.num_scales() << "\n";
    os << "converged: " << (r.converged ? "yes" : "no") << "\n";
    os << "objective: " << format_double(r.objective) << "\n";
    os << "iterations: " << r.iterations << "\n";
    os << "wall_seconds: " << format_double(r.wall_seconds) << "\n";
    os << "ci_level: " << r.ci_level << "\n";
    os << "parameter,estimate,ci_low,ci_high\n";
    for (std::size_t i = 0; i < r.theta.size(); ++i)
        os << r.param_names[i] << "," << format_double(r.theta[i]) << ","
           << format_double(r.ci[i].first) << "," << format_double(r.ci[i].second) << "\n";
    if (jt) {
        os << "jtest_statistic: " << format_double(jt->statistic) << "\n";
        os << "jtest_p_value: " << format_double(jt->p_value) << "\n";
        os << "jtest_replicates: " << jt->replicates << "\n";
    }
    if (r.options.robust) {
        os << "flagged_outliers: " << r.flagged.size() << "\n";
        for (auto i : r.flagged)
            os << "outlier," << i << "," << format_double(r.weights[i]) << "\n";
    }
    return os.str();
}

// WV table: scale, classical estimate + CI, robust estimate + CI, and the
// model-implied curves when a fitted model is supplied (7 or 9 columns).
inline std::string format_wv_table(const WvEstimate& classical, const WvEstimate& robust,
                                   const std::vector<double>* implied_classical,
                                   const std::vector<double>* implied_robust) {
    std::ostringstream os;
    os << "scale,nu_classical,ci_low_classical,ci_high_classical,nu_robust,ci_low_robust,ci_high_robust";
    if (implied_classical && implied_robust) os << ",nu_implied_classical,nu_implied_robust";
    os << "\n";
    for (std::size_t j = 0; j < classical.num_scales(); ++j) {
        os << classical.scales[j].str() << "," << format_double(classical.nu[j]) << ","
           << format_double(classical.ci[j].first) << "," << format_double(classical.ci[j].second)
           << "," << format_double(robust.nu[j]) << "," << format_double(robust.ci[j].first) << ","
           << format_double(robust.ci[j].second);
        if (implied_classical && implied_robust)
            os << "," << format_double((*implied_classical)[j]) << ","
               << format_double((*implied_robust)[j]);
        os << "\n";
    }
    return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw invalid_input("cannot open output file: " + path);
    out << text;
}

} // namespace rgmwm

#endif
