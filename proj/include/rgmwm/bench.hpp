#ifndef RGMWM_BENCH_HPP
#define RGMWM_BENCH_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rgmwm/errors.hpp"
#include "rgmwm/gmwm.hpp"
#include "rgmwm/math.hpp"
#include "rgmwm/models.hpp"
#include "rgmwm/parallel.hpp"
#include "rgmwm/rng.hpp"
#include "rgmwm/wavelet.hpp"

namespace rgmwm {

enum class ContaminationKind { none, scale, isolated, patchy, level_shift };

inline const char* contamination_kind_name(ContaminationKind k) {
    switch (k) {
        case ContaminationKind::none: return "none";
        case ContaminationKind::scale: return "scale";
        case ContaminationKind::isolated: return "isolated";
        case ContaminationKind::patchy: return "patchy";
        case ContaminationKind::level_shift: return "level_shift";
    }
    return "?";
}

struct ContaminationSpec {
    ContaminationKind kind = ContaminationKind::none;
    double epsilon = 0.0;        // contaminated fraction
    double sigma2_eps = 0.0;     // contamination variance (variance-based kinds)
    int scale_index = 3;         // scale kind: wavelet scale of the noise band
    int patch_len = 10;          // patchy kind: block length
    std::vector<double> shifts;  // level_shift kind: per-segment mean shifts
    bool replace = false;        // isolated kind: replace instead of add
    std::uint64_t seed = 0;

    void validate() const {
        if (kind == ContaminationKind::none) return;
        if (!(epsilon >= 0.0 && epsilon < 0.5))
            throw invalid_input("contamination: epsilon must lie in [0, 0.5)");
        if (kind == ContaminationKind::level_shift) {
            if (shifts.empty()) throw invalid_input("contamination: level_shift needs shift values");
        } else if (epsilon > 0.0 && !(sigma2_eps > 0.0)) {
            throw invalid_input("contamination: sigma2_eps must be positive");
        }
        if (kind == ContaminationKind::scale && scale_index < 1)
            throw invalid_input("contamination: scale index must be >= 1");
        if (kind == ContaminationKind::patchy && patch_len < 1)
            throw invalid_input("contamination: patch length must be >= 1");
    }

    std::string describe() const {
        std::ostringstream os;
        os << contamination_kind_name(kind);
        if (kind == ContaminationKind::none) return os.str();
        os << " eps=" << epsilon;
        if (kind == ContaminationKind::level_shift) {
            os << " shifts=";
            for (std::size_t i = 0; i < shifts.size(); ++i) os << (i ? "," : "") << shifts[i];
        } else {
            os << " s2eps=" << sigma2_eps;
        }
        if (kind == ContaminationKind::scale) os << " j=" << scale_index;
        if (kind == ContaminationKind::patchy) os << " patch=" << patch_len;
        return os.str();
    }
};

template <typename T>
struct Contaminated {
    T data;
    std::vector<std::size_t> indices;  // affected observations, ascending
};

namespace detail {

inline void detail_haar(const std::vector<double>& src, int j, std::vector<double>& out);
inline void detail_haar_adjoint(const std::vector<double>& w, int j, std::vector<double>& out);

// n distinct draws from [0, size) via partial Fisher-Yates.
inline std::vector<std::size_t> sample_indices(std::size_t size, std::size_t n, std::mt19937_64& eng) {
    std::vector<std::size_t> all(size);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t i = 0; i < n && i + 1 < size; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, size - 1);
        std::swap(all[i], all[pick(eng)]);
    }
    all.resize(std::min(n, size));
    std::sort(all.begin(), all.end());
    return all;
}

// Non-overlapping random block placement; falls back to even spacing when
// rejection sampling keeps colliding.
inline std::vector<std::pair<std::size_t, std::size_t>> place_blocks(
    std::size_t size, const std::vector<std::size_t>& lengths, std::mt19937_64& eng) {
    std::vector<std::pair<std::size_t, std::size_t>> blocks;
    for (int attempt = 0; attempt < 2000; ++attempt) {
        blocks.clear();
        bool ok = true;
        for (auto len : lengths) {
            if (len > size) {
                ok = false;
                break;
            }
            std::uniform_int_distribution<std::size_t> pick(0, size - len);
            std::size_t start = pick(eng);
            for (const auto& b : blocks)
                if (start < b.first + b.second && b.first < start + len) {
                    ok = false;
                    break;
                }
            if (!ok) break;
            blocks.emplace_back(start, len);
        }
        if (ok) {
            std::sort(blocks.begin(), blocks.end());
            return blocks;
        }
    }
    // deterministic even spacing
    blocks.clear();
    std::size_t total = 0;
    for (auto len : lengths) total += len;
    std::size_t gap = lengths.empty() ? 0 : (size > total ? (size - total) / (lengths.size() + 1) : 0);
    std::size_t pos = gap;
    for (auto len : lengths) {
        if (pos + len > size) pos = size - len;
        blocks.emplace_back(pos, len);
        pos += len + gap;
    }
    std::sort(blocks.begin(), blocks.end());
    return blocks;
}

inline Contaminated<std::vector<double>> contaminate_vector(const std::vector<double>& x,
                                                            const ContaminationSpec& spec) {
    spec.validate();
    Contaminated<std::vector<double>> out;
    out.data = x;
    const std::size_t n = x.size();
    const std::size_t n_c = static_cast<std::size_t>(std::llround(spec.epsilon * static_cast<double>(n)));
    if (spec.kind == ContaminationKind::none || spec.epsilon == 0.0 || n_c == 0) return out;

    auto eng = make_engine(spec.seed, 31);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double s_eps = std::sqrt(spec.sigma2_eps);

    switch (spec.kind) {
        case ContaminationKind::isolated: {
            out.indices = sample_indices(n, n_c, eng);
            for (auto i : out.indices) {
                double e = s_eps * normal(eng);
                out.data[i] = spec.replace ? e : out.data[i] + e;
            }
            break;
        }
        case ContaminationKind::patchy: {
            const std::size_t plen = static_cast<std::size_t>(spec.patch_len);
            std::size_t n_blocks = (n_c + plen - 1) / plen;
            std::vector<std::size_t> lengths(n_blocks, plen);
            if (n_c % plen != 0) lengths.back() = n_c % plen;
            auto blocks = place_blocks(n, lengths, eng);
            for (const auto& [start, len] : blocks)
                for (std::size_t i = start; i < start + len; ++i) {
                    out.data[i] += s_eps * normal(eng);
                    out.indices.push_back(i);
                }
            std::sort(out.indices.begin(), out.indices.end());
            break;
        }
        case ContaminationKind::level_shift: {
            const std::size_t k = spec.shifts.size();
            std::vector<std::size_t> lengths(k, n_c / k);
            if (lengths.back() == 0) throw invalid_input("contamination: epsilon too small for the shift count");
            lengths.back() += n_c % k;
            auto blocks = place_blocks(n, lengths, eng);
            for (std::size_t s = 0; s < blocks.size(); ++s) {
                const auto& [start, len] = blocks[s];
                for (std::size_t i = start; i < start + len; ++i) {
                    out.data[i] += spec.shifts[s];
                    out.indices.push_back(i);
                }
            }
            std::sort(out.indices.begin(), out.indices.end());
            break;
        }
        case ContaminationKind::scale: {
            // Noise band-limited to wavelet scale j: white noise pushed
            // through the scale-j Haar detail (filter, then its adjoint),
            // rescaled so the added band has variance sigma2_eps, and laid
            // over a random window of exactly n_c observations.
            const int j = spec.scale_index;
            const long L = haar_length(j);
            const std::size_t ext = static_cast<std::size_t>(n_c) + 2 * (static_cast<std::size_t>(L) - 1);
            std::vector<double> e(ext);
            for (auto& v : e) v = s_eps * normal(eng);
            // forward filter: w_t = sum_l h_l e_{t-l}, t = L-1 .. ext-1
            std::vector<double> w(ext - static_cast<std::size_t>(L) + 1, 0.0);
            detail_haar(e, j, w);
            // adjoint: d_t = sum_l h_l w_{t+l}; exactly n_c interior samples
            std::vector<double> d(n_c, 0.0);
            detail_haar_adjoint(w, j, d);
            double norm2 = 0.0;
            for (long m = -(L - 1); m < L; ++m) {
                double r = haar_filter_autocorr(j, m);
                norm2 += r * r;
            }
            const double rescale = 1.0 / std::sqrt(norm2);
            std::uniform_int_distribution<std::size_t> pick(0, n - n_c);
            const std::size_t start = pick(eng);
            for (std::size_t i = 0; i < n_c; ++i) {
                out.data[start + i] += rescale * d[i];
                out.indices.push_back(start + i);
            }
            break;
        }
        case ContaminationKind::none: break;
    }
    return out;
}

inline void detail_haar(const std::vector<double>& src, int j, std::vector<double>& out) {
    const long tau = haar_tau(j), L = haar_length(j);
    for (std::size_t t = static_cast<std::size_t>(L) - 1; t < src.size(); ++t) {
        double older = 0.0, recent = 0.0;
        for (long l = 0; l < tau; ++l) recent += src[t - static_cast<std::size_t>(l)];
        for (long l = tau; l < L; ++l) older += src[t - static_cast<std::size_t>(l)];
        out[t - (static_cast<std::size_t>(L) - 1)] = (older - recent) / (2.0 * static_cast<double>(tau));
    }
}

inline void detail_haar_adjoint(const std::vector<double>& w, int j, std::vector<double>& out) {
    const long tau = haar_tau(j), L = haar_length(j);
    // out[t] = sum_l h_l w[t + l], valid while t + L - 1 < w.size()
    for (std::size_t t = 0; t < out.size(); ++t) {
        double older = 0.0, recent = 0.0;
        for (long l = 0; l < tau; ++l) recent += w[t + static_cast<std::size_t>(l)];
        for (long l = tau; l < L; ++l) older += w[t + static_cast<std::size_t>(l)];
        out[t] = (older - recent) / (2.0 * static_cast<double>(tau));
    }
}

} // namespace detail

inline Contaminated<TimeSeries> contaminate(const TimeSeries& series, const ContaminationSpec& spec) {
    if (spec.kind == ContaminationKind::scale &&
        static_cast<std::size_t>(std::llround(spec.epsilon * static_cast<double>(series.size()))) > 0 &&
        std::llround(spec.epsilon * static_cast<double>(series.size())) < haar_length(spec.scale_index))
        throw invalid_input("contamination: window shorter than the scale-" +
                            std::to_string(spec.scale_index) + " filter");
    auto r = detail::contaminate_vector(series.values(), spec);
    return {TimeSeries(std::move(r.data)), std::move(r.indices)};
}

// Lattice contamination operates on the row-major flattened field; patches
// and level-shift segments are contiguous runs in that ordering.
inline Contaminated<LatticeField> contaminate(const LatticeField& field, const ContaminationSpec& spec) {
    if (spec.kind == ContaminationKind::scale)
        throw invalid_input("contamination: scale-based contamination is defined for time series only");
    auto r = detail::contaminate_vector(field.values(), spec);
    return {LatticeField(field.rows(), field.cols(), std::move(r.data)), std::move(r.indices)};
}

// Robust relative accuracy: sqrt(med((th-th0)/th0)^2 + mad(th/th0)^2) with
// mad carrying the 1.4826 normal-consistency factor.
inline double rmse_star(const std::vector<double>& estimates, double theta0) {
    if (theta0 == 0.0) throw invalid_input("rmse_star: theta0 must be nonzero");
    if (estimates.size() < 3) throw invalid_input("rmse_star: need at least 3 replicates");
    std::vector<double> rel(estimates.size()), ratio(estimates.size());
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        rel[i] = (estimates[i] - theta0) / theta0;
        ratio[i] = estimates[i] / theta0;
    }
    const double med_rel = median(rel);
    const double med_ratio = median(ratio);
    std::vector<double> dev(ratio.size());
    for (std::size_t i = 0; i < ratio.size(); ++i) dev[i] = std::abs(ratio[i] - med_ratio);
    const double mad = 1.4826 * median(dev);
    return std::sqrt(med_rel * med_rel + mad * mad);
}

// --- replication engine -------------------------------------------------------

struct EstimatorSpec {
    std::string name;  // e.g. "GMWM", "RGMWM"
    FitOptions options;
};

inline EstimatorSpec gmwm_estimator(OmegaKind omega = OmegaKind::inverse_diag) {
    EstimatorSpec e;
    e.name = "GMWM";
    e.options.robust = false;
    e.options.omega = omega;
    return e;
}

inline EstimatorSpec rgmwm_estimator(double efficiency = 0.6, OmegaKind omega = OmegaKind::inverse_diag) {
    EstimatorSpec e;
    e.name = "RGMWM";
    e.options.robust = true;
    e.options.efficiency = efficiency;
    e.options.omega = omega;
    return e;
}

struct StudyDesign {
    ModelSpec model;  // fully specified truth
    std::size_t n = 0;          // temporal size; or
    std::size_t rows = 0, cols = 0;  // spatial size
    ContaminationSpec contamination;
    std::vector<EstimatorSpec> estimators;
    int replicates = 100;
    std::uint64_t seed = 1;
    double fit_budget_seconds = 60.0;
};

struct StudyReport {
    struct ParamSummary {
        std::string name;
        double theta0 = 0.0;
        double rmse = std::numeric_limits<double>::quiet_NaN();  // absent when no replicate converged
    };
    struct EstimatorSummary {
        std::string name;
        double convergence_rate = 0.0;  // percent
        double median_seconds = 0.0;
        std::vector<ParamSummary> params;
        std::vector<std::vector<double>> estimates;  // per free parameter, converged replicates
    };
    std::string model_text;
    std::string contamination_text;
    std::string size_text;
    int replicates = 0;
    std::uint64_t seed = 0;
    std::vector<EstimatorSummary> estimators;

    const EstimatorSummary& by_name(const std::string& n) const {
        for (const auto& e : estimators)
            if (e.name == n) return e;
        throw invalid_input("study report has no estimator named " + n);
    }
};

// Simulate -> contaminate -> fit every estimator, with per-fit timing and the
// study's per-fit budget; deterministic for a given seed, independent of the
// estimator ordering and of scheduling.
inline StudyReport run_study(const StudyDesign& design) {
    design.model.validate();
    if (design.replicates < 1) throw invalid_input("run_study: need at least one replicate");
    const bool spatial = design.model.spatial();
    const ModelSpec fit_model = design.model.with_all_free();
    // theta0 of the design: all parameters of the truth
    std::vector<double> truth;
    for (const auto& p : design.model.parameters()) truth.push_back(p.value);
    const auto names = fit_model.free_names();

    struct Cell {
        bool converged = false;
        double seconds = 0.0;
        std::vector<double> theta;
    };
    std::vector<std::vector<Cell>> cells(design.estimators.size());
    for (auto& c : cells) c.resize(static_cast<std::size_t>(design.replicates));

    parallel_for(static_cast<std::size_t>(design.replicates), [&](std::size_t rep) {
        ContaminationSpec cont = design.contamination;
        cont.seed = stream_seed(design.seed, 7000, rep);

        std::optional<TimeSeries> series;
        std::optional<LatticeField> field;
        if (spatial) {
            auto f = simulate(design.model, design.rows, design.cols, stream_seed(design.seed, 5000, rep));
            field = contaminate(f, cont).data;
        } else {
            auto s = simulate(design.model, design.n, stream_seed(design.seed, 5000, rep));
            series = contaminate(s, cont).data;
        }

        for (std::size_t e = 0; e < design.estimators.size(); ++e) {
            FitOptions opt = design.estimators[e].options;
            opt.time_budget_seconds = design.fit_budget_seconds;
            Cell& cell = cells[e][rep];
            const auto t0 = std::chrono::steady_clock::now();
            try {
                FitResult r = spatial ? fit(*field, fit_model, opt) : fit(*series, fit_model, opt);
                cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                cell.converged = r.converged && cell.seconds <= design.fit_budget_seconds;
                cell.theta = r.theta;
            } catch (const std::exception&) {
                cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                cell.converged = false;
            }
        }
    });

    StudyReport report;
    report.model_text = design.model.format();
    report.contamination_text = design.contamination.describe();
    report.size_text = spatial ? std::to_string(design.rows) + "x" + std::to_string(design.cols)
                               : std::to_string(design.n);
    report.replicates = design.replicates;
    report.seed = design.seed;

    for (std::size_t e = 0; e < design.estimators.size(); ++e) {
        StudyReport::EstimatorSummary s;
        s.name = design.estimators[e].name;
        std::vector<double> times;
        std::size_t conv = 0;
        s.estimates.assign(names.size(), {});
        for (const auto& cell : cells[e]) {
            times.push_back(cell.seconds);
            if (!cell.converged) continue;
            ++conv;
            for (std::size_t p = 0; p < names.size(); ++p) s.estimates[p].push_back(cell.theta[p]);
        }
        s.convergence_rate = 100.0 * static_cast<double>(conv) / static_cast<double>(design.replicates);
        s.median_seconds = median(times);
        for (std::size_t p = 0; p < names.size(); ++p) {
            StudyReport::ParamSummary ps;
            ps.name = names[p];
            ps.theta0 = truth[p];
            if (s.estimates[p].size() >= 3 && ps.theta0 != 0.0)
                ps.rmse = rmse_star(s.estimates[p], ps.theta0);
            s.params.push_back(ps);
        }
        report.estimators.push_back(std::move(s));
    }
    return report;
}

// CSV: one row per estimator x parameter.
inline std::string study_report_csv(const StudyReport& r) {
    std::ostringstream os;
    os << "model,size,contamination,replicates,estimator,parameter,theta0,rmse_star,conv_rate_pct,median_seconds\n";
    for (const auto& e : r.estimators)
        for (const auto& p : e.params) {
            char buf[64];
            os << '"' << r.model_text << '"' << ',' << r.size_text << ',' << '"'
               << r.contamination_text << '"' << ',' << r.replicates << ',' << e.name << ',' << p.name
               << ',';
            std::snprintf(buf, sizeof buf, "%.17g", p.theta0);
            os << buf << ',';
            if (std::isfinite(p.rmse)) {
                std::snprintf(buf, sizeof buf, "%.17g", p.rmse);
                os << buf;
            }
            os << ',';
            std::snprintf(buf, sizeof buf, "%.4g", e.convergence_rate);
            os << buf << ',';
            std::snprintf(buf, sizeof buf, "%.6g", e.median_seconds);
            os << buf << '\n';
        }
    return os.str();
}

// Text table with the timing/convergence columns of the paper-style summary.
inline std::string study_report_table(const StudyReport& r) {
    std::ostringstream os;
    os << "Model: " << r.model_text << "\n";
    os << "Contamination: " << r.contamination_text << "\n";
    os << "Estimator     Sample size   Median (s)    Conv. rate (%)\n";
    for (const auto& e : r.estimators) {
        char line[160];
        std::snprintf(line, sizeof line, "%-13s %-13s %-13.4g %.4g\n", e.name.c_str(),
                      r.size_text.c_str(), e.median_seconds, e.convergence_rate);
        os << line;
    }
    os << "\nRMSE* per parameter\n";
    os << "Estimator     Parameter         theta0        RMSE*\n";
    for (const auto& e : r.estimators)
        for (const auto& p : e.params) {
            char line[160];
            std::snprintf(line, sizeof line, "%-13s %-17s %-13.6g %.6g\n", e.name.c_str(),
                          p.name.c_str(), p.theta0, std::isfinite(p.rmse) ? p.rmse : std::nan(""));
            os << line;
        }
    return os.str();
}

} // namespace rgmwm

#endif
