#ifndef RGMWM_WV_HPP
#define RGMWM_WV_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

#include "rgmwm/errors.hpp"
#include "rgmwm/math.hpp"
#include "rgmwm/rng.hpp"
#include "rgmwm/wavelet.hpp"

namespace rgmwm {

// Fixed seed of the Monte Carlo efficiency calibration (documented so that
// calibrated tuning constants are reproducible across runs).
inline constexpr std::uint64_t calibration_seed = 0x52474d574d303031ULL;

enum class WvMethod { classical, robust };

// Tukey biweight: (1 - (x/c)^2)^2 on |x| <= c, 0 outside.
inline double tukey_weight(double x, double c) {
    if (!(c > 0.0)) throw invalid_input("tukey_weight: c must be positive");
    if (std::isinf(c)) return 1.0;
    double u = (x / c) * (x / c);
    if (u >= 1.0) return 0.0;
    double d = 1.0 - u;
    return d * d;
}

namespace detail {

// rho(x) = w_c(x)^2 x^2; the WV estimating equation is
//   (1/M) sum_t [ rho(W_t / sqrt(nu)) ] - b_c = 0.
inline double score_rho(double x, double c) {
    if (std::isinf(c)) return x * x;
    double u = (x / c) * (x / c);
    if (u >= 1.0) return 0.0;
    double d = 1.0 - u;
    double d2 = d * d;
    return x * x * d2 * d2;
}

// rho'(x) * x = 2 x^2 (1-u)^3 (1-5u); feeds M-hat = E[-dPsi/dnu] = E[rho' x]/(2 nu).
inline double score_rho_prime_x(double x, double c) {
    if (std::isinf(c)) return 2.0 * x * x;
    double u = (x / c) * (x / c);
    if (u >= 1.0) return 0.0;
    double d = 1.0 - u;
    return 2.0 * x * x * d * d * d * (1.0 - 5.0 * u);
}

} // namespace detail

// b_c = E[w_c(Z)^2 Z^2] for standard normal Z, by adaptive quadrature on
// [-c, c]; relative accuracy ~1e-10, well inside the 1e-8 contract.  The
// domain is split into panels so the initial probes cannot miss the bulk of
// the Gaussian mass when c is large.
inline double consistency_constant(double c) {
    if (!(c > 0.0)) throw invalid_input("consistency_constant: c must be positive");
    if (std::isinf(c)) return 1.0;
    const double lim = std::min(c, 9.5);  // |z| > 9.5 contributes < 1e-17
    auto f = [c](double z) { return detail::score_rho(z, c) * normal_pdf(z); };
    const double cuts[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    const double tol = 1e-15 * std::min(1.0, c * c * c);  // ~ the integral's magnitude
    double acc = 0.0;
    for (int i = 0; i + 1 < 5; ++i) {
        double a = lim * cuts[i], b = lim * cuts[i + 1];
        acc += 2.0 * integrate_adaptive(f, a, b, tol);  // integrand is even
    }
    return acc;
}

// Tuning constant plus its Fisher-consistency constant and target efficiency.
// c == +inf is the classical sentinel (no downweighting).
struct RobustScore {
    double c = std::numeric_limits<double>::infinity();
    double b = 1.0;
    double efficiency = 1.0;
    bool classical() const noexcept { return std::isinf(c); }
};

inline RobustScore score_for_constant(double c) {
    return RobustScore{c, consistency_constant(c), std::numeric_limits<double>::quiet_NaN()};
}

namespace detail {

struct EffDraws {
    std::vector<double> z;
    double avar_classical = 0.0;
};

inline const EffDraws& efficiency_draws() {
    static EffDraws d = [] {
        EffDraws e;
        const std::size_t n = 1'000'000;
        e.z.resize(n);
        auto eng = make_engine(calibration_seed, 0);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (auto& zi : e.z) zi = normal(eng);
        // classical score is Z^2 - 1; its variance is the classical avar
        double m = 0.0;
        for (double zi : e.z) m += zi * zi;
        m /= static_cast<double>(n);
        double v = 0.0;
        for (double zi : e.z) v += (zi * zi - m) * (zi * zi - m);
        e.avar_classical = v / static_cast<double>(n - 1);
        return e;
    }();
    return d;
}

// Monte Carlo asymptotic efficiency of the robust WV estimator at the
// Gaussian model.  Monotone increasing in c on c >= ~2.6 (below that the
// estimating-equation derivative changes sign and the score is unusable).
inline double efficiency_of_constant_mc(double c) {
    const auto& d = efficiency_draws();
    double s1 = 0.0, s2 = 0.0, sm = 0.0;
    for (double z : d.z) {
        double r = score_rho(z, c);
        s1 += r;
        s2 += r * r;
        sm += score_rho_prime_x(z, c);
    }
    const double n = static_cast<double>(d.z.size());
    double m1 = s1 / n;
    double var_rho = s2 / n - m1 * m1;
    double mhat = 0.5 * sm / n;
    if (!(mhat > 0.0) || !(var_rho > 0.0)) return 0.0;
    return d.avar_classical * mhat * mhat / var_rho;
}

} // namespace detail

// Solve for the tuning constant giving a target asymptotic efficiency at the
// Gaussian model.  Results are cached per target.
inline RobustScore tuning_for_efficiency(double efficiency) {
    if (!(efficiency > 0.05 && efficiency <= 1.0))
        throw invalid_input("tuning_for_efficiency: efficiency must lie in (0.05, 1]");
    if (efficiency >= 1.0 - 1e-12) return RobustScore{};  // classical sentinel

    static std::mutex mtx;
    static std::map<long long, RobustScore> cache;
    const long long key = llround(efficiency * 1e9);
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    double lo = 2.7, hi = 1024.0;
    double flo = detail::efficiency_of_constant_mc(lo) - efficiency;
    double fhi = detail::efficiency_of_constant_mc(hi) - efficiency;
    if (flo > 0.0 || fhi < 0.0)
        throw invalid_input("tuning_for_efficiency: target efficiency is unattainable");
    for (int i = 0; i < 80 && (hi - lo) > 1e-9 * lo; ++i) {
        double mid = 0.5 * (lo + hi);
        if (detail::efficiency_of_constant_mc(mid) - efficiency < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    double c = 0.5 * (lo + hi);
    RobustScore score{c, consistency_constant(c), efficiency};
    cache[key] = score;
    return score;
}

// Classical wavelet variance of one scale: mean of squared coefficients.
inline double wv_classical_scale(const std::vector<double>& w) {
    if (w.empty()) throw invalid_input("wv_classical_scale: empty coefficient vector");
    double s = 0.0;
    for (double x : w) s += x * x;
    return s / static_cast<double>(w.size());
}

// Robust wavelet variance of one scale: root in nu of
//   F(nu) = (1/M) sum_t rho(W_t/sqrt(nu)) - b_c = 0,
// searched by bracketing bisection on log(nu).  The walk starts from a
// median-of-squares pilot scale rather than the classical mean of squares:
// the classical value explodes under gross contamination and would push the
// root outside the 1e-6..1e6 expansion range.  If several roots exist the
// search settles on the one nearest the pilot.
inline double wv_robust_scale(const std::vector<double>& w, const RobustScore& score) {
    if (w.size() < 2) throw invalid_input("wv_robust_scale: need at least 2 coefficients");
    const double nu_cl = wv_classical_scale(w);
    if (!(nu_cl > 0.0)) throw invalid_input("wv_robust_scale: all coefficients are zero");
    if (score.classical()) return nu_cl;

    // median(W^2) / median(chi^2_1); falls back to the classical value when
    // more than half of the coefficients are zero
    double nu0 = nu_cl;
    {
        std::vector<double> sq(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) sq[i] = w[i] * w[i];
        double med = median(std::move(sq));
        if (med > 0.0) nu0 = med / 0.454936423119572;
    }

    auto F = [&](double nu) {
        double inv = 1.0 / std::sqrt(nu);
        double s = 0.0;
        for (double x : w) s += detail::score_rho(x * inv, score.c);
        return s / static_cast<double>(w.size()) - score.b;
    };

    const double f_tol = 1e-10;
    double f0 = F(nu0);
    if (std::abs(f0) <= f_tol) return nu0;

    // Expand a bracket by factors of 10, staying within [1e-6, 1e6] x nu0.
    double lo = nu0, hi = nu0, flo = f0, fhi = f0;
    if (f0 > 0.0) {
        // F eventually goes negative as nu grows
        for (int k = 0; k < 7 && fhi > 0.0; ++k) {
            lo = hi;
            flo = fhi;
            hi = nu0 * std::pow(10.0, k + 1);
            fhi = F(hi);
        }
        if (fhi > 0.0) throw no_solution("wv_robust_scale: no sign change up to pilot*1e6");
    } else {
        for (int k = 0; k < 7 && flo < 0.0; ++k) {
            hi = lo;
            fhi = flo;
            lo = nu0 * std::pow(10.0, -(k + 1));
            flo = F(lo);
        }
        if (flo < 0.0) throw no_solution("wv_robust_scale: no sign change down to pilot*1e-6");
    }

    // Geometric bisection (bisection on log nu).
    double mid = std::sqrt(lo * hi);
    for (int it = 0; it < 200; ++it) {
        mid = std::sqrt(lo * hi);
        double fm = F(mid);
        if (std::abs(fm) <= f_tol || (hi - lo) <= 1e-9 * mid) return mid;
        // F decreases through the root on the branch we bracketed
        if ((flo > 0.0) == (fm > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    return mid;
}

struct WvEstimate {
    std::vector<ScaleLabel> scales;
    std::vector<double> nu;              // per-scale WV
    std::vector<std::size_t> counts;     // per-scale coefficient count M_j
    std::vector<bool> degenerate;        // all-zero scale
    WvMethod method = WvMethod::classical;
    RobustScore score;                   // classical sentinel when classical
    std::optional<Eigen::MatrixXd> cov;  // covariance of nu-hat (finite sample)
    std::vector<std::pair<double, double>> ci;
    double ci_level = 0.0;

    std::size_t num_scales() const noexcept { return nu.size(); }
    std::size_t n_min() const {
        std::size_t m = counts.empty() ? 0 : counts.front();
        for (auto c : counts) m = std::min(m, c);
        return m;
    }
};

namespace detail {

template <typename Coeffs, typename PerScale>
WvEstimate make_estimate(const Coeffs& coeffs, WvMethod method, RobustScore score, PerScale per_scale);

template <typename PerScale>
WvEstimate make_estimate(const WaveletCoefficients1D& coeffs, WvMethod method, RobustScore score,
                         PerScale per_scale) {
    WvEstimate est;
    est.method = method;
    est.score = score;
    for (int j = 1; j <= coeffs.num_scales(); ++j) {
        const auto& w = coeffs.at_scale(j);
        est.scales.push_back({j, 0});
        est.counts.push_back(w.size());
        bool zero = true;
        for (double x : w)
            if (x != 0.0) {
                zero = false;
                break;
            }
        est.degenerate.push_back(zero);
        est.nu.push_back(zero ? 0.0 : per_scale(w));
    }
    return est;
}

template <typename PerScale>
WvEstimate make_estimate(const WaveletCoefficients2D& coeffs, WvMethod method, RobustScore score,
                         PerScale per_scale) {
    WvEstimate est;
    est.method = method;
    est.score = score;
    for (std::size_t i = 0; i < coeffs.pairs.size(); ++i) {
        const auto& w = coeffs.blocks[i].v;
        est.scales.push_back({coeffs.pairs[i].j1, coeffs.pairs[i].j2});
        est.counts.push_back(w.size());
        bool zero = true;
        for (double x : w)
            if (x != 0.0) {
                zero = false;
                break;
            }
        est.degenerate.push_back(zero);
        est.nu.push_back(zero ? 0.0 : per_scale(w));
    }
    return est;
}

} // namespace detail

inline WvEstimate wv_classical(const WaveletCoefficients1D& c) {
    return detail::make_estimate(c, WvMethod::classical, RobustScore{},
                                 [](const std::vector<double>& w) { return wv_classical_scale(w); });
}
inline WvEstimate wv_classical(const WaveletCoefficients2D& c) {
    return detail::make_estimate(c, WvMethod::classical, RobustScore{},
                                 [](const std::vector<double>& w) { return wv_classical_scale(w); });
}
inline WvEstimate wv_robust(const WaveletCoefficients1D& c, const RobustScore& s) {
    return detail::make_estimate(c, WvMethod::robust, s, [&](const std::vector<double>& w) {
        return wv_robust_scale(w, s);
    });
}
inline WvEstimate wv_robust(const WaveletCoefficients2D& c, const RobustScore& s) {
    return detail::make_estimate(c, WvMethod::robust, s, [&](const std::vector<double>& w) {
        return wv_robust_scale(w, s);
    });
}

namespace detail {

struct ScaleScores {
    double mhat = 0.0;     // E-hat[-dPsi/dnu]
    double var_psi = 0.0;  // Var-hat[Psi]
};

inline ScaleScores scale_scores(const std::vector<double>& w, double nu, const RobustScore& score) {
    ScaleScores s;
    const double inv = 1.0 / std::sqrt(nu);
    double sum_rp = 0.0, sum_psi = 0.0, sum_psi2 = 0.0;
    for (double x : w) {
        double z = x * inv;
        double psi = score_rho(z, score.c) - score.b;
        sum_rp += score_rho_prime_x(z, score.c);
        sum_psi += psi;
        sum_psi2 += psi * psi;
    }
    const double n = static_cast<double>(w.size());
    s.mhat = 0.5 * (sum_rp / n) / nu;
    double m = sum_psi / n;
    s.var_psi = std::max(0.0, sum_psi2 / n - m * m);
    return s;
}

// Flat-top lag weight: full weight within the filter-induced correlation
// support, linear decay beyond it.  Triangular-only tapering was found to
// bite into true correlation mass at lags comparable to the filter length
// and pushed per-scale CI coverage below nominal.
inline double flat_top_weight(long h, long flat, long H) {
    h = std::labs(h);
    if (h <= flat) return 1.0;
    if (h > H) return 0.0;
    return static_cast<double>(H - h) / static_cast<double>(std::max<long>(1, H - flat));
}

// sum over lags of weight(h) * crosscorr(u, v; h)^2, sampled on a stride so
// the cost stays bounded for long filters.  u and v are aligned on a common
// index range of length n.
inline double tapered_sq_crosscorr_1d(const double* u, const double* v, std::size_t n, long flat,
                                      long H) {
    if (n < 3) return 1.0;
    double mu = 0.0, mv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mu += u[i];
        mv += v[i];
    }
    mu /= static_cast<double>(n);
    mv /= static_cast<double>(n);
    double su = 0.0, sv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        su += (u[i] - mu) * (u[i] - mu);
        sv += (v[i] - mv) * (v[i] - mv);
    }
    if (!(su > 0.0) || !(sv > 0.0)) return 0.0;
    const double norm = std::sqrt(su * sv);

    auto corr_at = [&](long h) {
        // corr between u_{t+h} and v_t over the overlap
        double s = 0.0;
        if (h >= 0) {
            for (std::size_t t = 0; t + static_cast<std::size_t>(h) < n; ++t)
                s += (u[t + static_cast<std::size_t>(h)] - mu) * (v[t] - mv);
        } else {
            for (std::size_t t = 0; t + static_cast<std::size_t>(-h) < n; ++t)
                s += (u[t] - mu) * (v[t + static_cast<std::size_t>(-h)] - mv);
        }
        return s / norm;
    };

    H = std::min<long>(H, static_cast<long>(n) - 1);
    flat = std::min(flat, H);
    const long max_samples = 32;  // lags sampled per side
    const long stride = std::max<long>(1, (H + max_samples - 1) / max_samples);
    double total = 0.0;
    {
        double r0 = corr_at(0);
        total += r0 * r0;  // h = 0, weight 1
    }
    for (long k = 1; k * stride <= H; ++k) {
        long h = k * stride;
        double wgt = flat_top_weight(h, flat, H);
        double rp = corr_at(h), rm = corr_at(-h);
        total += static_cast<double>(stride) * wgt * (rp * rp + rm * rm);
    }
    return total;
}

inline void symmetrize_psd(Eigen::MatrixXd& m) {
    m = 0.5 * (m + m.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd ev = es.eigenvalues();
    bool clip = false;
    for (int i = 0; i < ev.size(); ++i)
        if (ev[i] < 0.0) {
            ev[i] = 0.0;
            clip = true;
        }
    if (clip) m = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    m = 0.5 * (m + m.transpose()).eval();
}

} // namespace detail

// Plug-in covariance of nu-hat for a 1D decomposition: per-scale sandwich
// M-hat^-1 S-hat(0) M-hat^-T with a tapered squared-cross-correlation
// estimate of the score long-run covariance.  Cross terms are kept for scale
// distance <= 2; farther scales are near-orthogonal and set to zero.
inline Eigen::MatrixXd estimate_v_plugin(WvEstimate& est, const WaveletCoefficients1D& coeffs) {
    const std::size_t J = est.num_scales();
    if (J == 0 || static_cast<int>(J) != coeffs.num_scales())
        throw invalid_input("estimate_v_plugin: estimate/coefficients scale mismatch");
    std::vector<detail::ScaleScores> sc(J);
    for (std::size_t i = 0; i < J; ++i) {
        if (est.degenerate[i] || !(est.nu[i] > 0.0))
            throw numerical_failure("estimate_v_plugin: degenerate scale " + est.scales[i].str());
        sc[i] = detail::scale_scores(coeffs.at_scale(static_cast<int>(i + 1)), est.nu[i], est.score);
        if (!(sc[i].mhat > 0.0))
            throw numerical_failure("estimate_v_plugin: singular M-hat at scale " + est.scales[i].str());
    }

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<int>(J), static_cast<int>(J));
    const std::size_t n = coeffs.n;
    for (std::size_t i = 0; i < J; ++i) {
        for (std::size_t j = i; j < J && j <= i + 2; ++j) {
            const long Li = haar_length(static_cast<int>(i + 1));
            const long Lj = haar_length(static_cast<int>(j + 1));
            const long Lmax = std::max(Li, Lj);
            const std::size_t nc = n - static_cast<std::size_t>(Lmax) + 1;
            const double* u = coeffs.at_scale(static_cast<int>(i + 1)).data() +
                              (static_cast<std::size_t>(Lmax) - static_cast<std::size_t>(Li));
            const double* v = coeffs.at_scale(static_cast<int>(j + 1)).data() +
                              (static_cast<std::size_t>(Lmax) - static_cast<std::size_t>(Lj));
            const long q0 = static_cast<long>(std::cbrt(static_cast<double>(nc))) + 1;
            double sum_r2 = detail::tapered_sq_crosscorr_1d(u, v, nc, Lmax + q0, 2 * Lmax + 2 * q0);
            double s_ij = std::sqrt(sc[i].var_psi * sc[j].var_psi) * sum_r2;
            double v_ij = s_ij / (sc[i].mhat * sc[j].mhat);
            double scale = std::sqrt(static_cast<double>(est.counts[i]) *
                                     static_cast<double>(est.counts[j]));
            cov(static_cast<int>(i), static_cast<int>(j)) = v_ij / scale;
            cov(static_cast<int>(j), static_cast<int>(i)) = v_ij / scale;
        }
    }
    detail::symmetrize_psd(cov);
    est.cov = cov;
    return cov;
}

namespace detail {

// 2D analogue on coefficient grids: tapered squared cross-correlation over a
// sampled grid of 2D lags.
inline double tapered_sq_crosscorr_2d(const WaveletCoefficients2D::Block& a, std::size_t ar0,
                                      std::size_t ac0, const WaveletCoefficients2D::Block& b,
                                      std::size_t br0, std::size_t bc0, std::size_t rows,
                                      std::size_t cols, long flat_r, long Hr, long flat_c, long Hc) {
    const std::size_t n = rows * cols;
    if (n < 4) return 1.0;
    double ma = 0.0, mb = 0.0;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            ma += a.at(ar0 + r, ac0 + c);
            mb += b.at(br0 + r, bc0 + c);
        }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sa = 0.0, sb = 0.0;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            double da = a.at(ar0 + r, ac0 + c) - ma;
            double db = b.at(br0 + r, bc0 + c) - mb;
            sa += da * da;
            sb += db * db;
        }
    if (!(sa > 0.0) || !(sb > 0.0)) return 0.0;
    const double norm = std::sqrt(sa * sb);

    Hr = std::min<long>(Hr, static_cast<long>(rows) - 1);
    Hc = std::min<long>(Hc, static_cast<long>(cols) - 1);
    const long max_side = 8;  // sampled lags per direction and side
    const long sr = std::max<long>(1, (Hr + max_side - 1) / max_side);
    const long scc = std::max<long>(1, (Hc + max_side - 1) / max_side);

    auto corr_at = [&](long dr, long dc) {
        double s = 0.0;
        const long r_lo = std::max<long>(0, -dr), r_hi = std::min<long>(static_cast<long>(rows), static_cast<long>(rows) - dr);
        const long c_lo = std::max<long>(0, -dc), c_hi = std::min<long>(static_cast<long>(cols), static_cast<long>(cols) - dc);
        for (long r = r_lo; r < r_hi; ++r)
            for (long c = c_lo; c < c_hi; ++c)
                s += (a.at(ar0 + static_cast<std::size_t>(r + dr), ac0 + static_cast<std::size_t>(c + dc)) - ma) *
                     (b.at(br0 + static_cast<std::size_t>(r), bc0 + static_cast<std::size_t>(c)) - mb);
        return s / norm;
    };

    flat_r = std::min(flat_r, Hr);
    flat_c = std::min(flat_c, Hc);
    double total = 0.0;
    for (long kr = -max_side; kr <= max_side; ++kr) {
        long dr = kr * sr;
        if (std::labs(dr) > Hr) continue;
        double tr = flat_top_weight(dr, flat_r, Hr);
        for (long kc = -max_side; kc <= max_side; ++kc) {
            long dc = kc * scc;
            if (std::labs(dc) > Hc) continue;
            double tc = flat_top_weight(dc, flat_c, Hc);
            double r = corr_at(dr, dc);
            double cell = static_cast<double>(kr == 0 ? 1 : sr) * static_cast<double>(kc == 0 ? 1 : scc);
            total += cell * tr * tc * r * r;
        }
    }
    return total;
}

} // namespace detail

inline Eigen::MatrixXd estimate_v_plugin(WvEstimate& est, const WaveletCoefficients2D& coeffs) {
    const std::size_t J = est.num_scales();
    if (J == 0 || J != coeffs.pairs.size())
        throw invalid_input("estimate_v_plugin: estimate/coefficients pair mismatch");
    std::vector<detail::ScaleScores> sc(J);
    for (std::size_t i = 0; i < J; ++i) {
        if (est.degenerate[i] || !(est.nu[i] > 0.0))
            throw numerical_failure("estimate_v_plugin: degenerate pair " + est.scales[i].str());
        sc[i] = detail::scale_scores(coeffs.blocks[i].v, est.nu[i], est.score);
        if (!(sc[i].mhat > 0.0))
            throw numerical_failure("estimate_v_plugin: singular M-hat at pair " + est.scales[i].str());
    }

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<int>(J), static_cast<int>(J));
    for (std::size_t i = 0; i < J; ++i) {
        for (std::size_t j = i; j < J; ++j) {
            const auto& pa = coeffs.pairs[i];
            const auto& pb = coeffs.pairs[j];
            const long L1 = std::max(haar_length(pa.j1), haar_length(pb.j1));
            const long L2 = std::max(haar_length(pa.j2), haar_length(pb.j2));
            // common support of both blocks in field coordinates
            const std::size_t rows = coeffs.field_rows - static_cast<std::size_t>(L1) + 1;
            const std::size_t cols = coeffs.field_cols - static_cast<std::size_t>(L2) + 1;
            const auto& A = coeffs.blocks[i];
            const auto& B = coeffs.blocks[j];
            std::size_t ar0 = A.rows - rows, ac0 = A.cols - cols;
            std::size_t br0 = B.rows - rows, bc0 = B.cols - cols;
            double sum_r2 = detail::tapered_sq_crosscorr_2d(A, ar0, ac0, B, br0, bc0, rows, cols,
                                                            L1 + 1, 2 * L1 + 2, L2 + 1, 2 * L2 + 2);
            double s_ij = std::sqrt(sc[i].var_psi * sc[j].var_psi) * sum_r2;
            double v_ij = s_ij / (sc[i].mhat * sc[j].mhat);
            double scale = std::sqrt(static_cast<double>(est.counts[i]) *
                                     static_cast<double>(est.counts[j]));
            cov(static_cast<int>(i), static_cast<int>(j)) = v_ij / scale;
            cov(static_cast<int>(j), static_cast<int>(i)) = v_ij / scale;
        }
    }
    detail::symmetrize_psd(cov);
    est.cov = cov;
    return cov;
}

// Gaussian per-scale intervals nu +- z sqrt(cov_jj), floored at nu * 1e-6.
inline std::vector<std::pair<double, double>> wv_confidence_intervals(WvEstimate& est, double level) {
    if (!est.cov) throw invalid_input("wv_confidence_intervals: covariance not estimated");
    if (!(level > 0.0 && level < 1.0))
        throw invalid_input("wv_confidence_intervals: level must lie in (0,1)");
    const double z = normal_quantile(0.5 * (1.0 + level));
    est.ci.clear();
    for (std::size_t j = 0; j < est.num_scales(); ++j) {
        double sd = std::sqrt(std::max(0.0, (*est.cov)(static_cast<int>(j), static_cast<int>(j))));
        double lo = est.nu[j] - z * sd;
        double hi = est.nu[j] + z * sd;
        lo = std::max(lo, est.nu[j] * 1e-6);
        est.ci.emplace_back(lo, hi);
    }
    est.ci_level = level;
    return est.ci;
}

} // namespace rgmwm

#endif
