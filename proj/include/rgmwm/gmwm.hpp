#ifndef RGMWM_GMWM_HPP
#define RGMWM_GMWM_HPP

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rgmwm/errors.hpp"
#include "rgmwm/math.hpp"
#include "rgmwm/models.hpp"
#include "rgmwm/parallel.hpp"
#include "rgmwm/rng.hpp"
#include "rgmwm/wavelet.hpp"
#include "rgmwm/wv.hpp"

namespace rgmwm {

enum class OmegaKind { identity, inverse_diag, inverse_full };

inline const char* omega_kind_name(OmegaKind k) {
    switch (k) {
        case OmegaKind::identity: return "identity";
        case OmegaKind::inverse_diag: return "diag";
        case OmegaKind::inverse_full: return "full";
    }
    return "?";
}

struct WeightingMatrix {
    OmegaKind kind = OmegaKind::identity;
    Eigen::MatrixXd m;
};

// Builds Omega from the estimated WV covariance.  The full inverse gets a
// ridge of 1e-8 * trace/J when ill-conditioned.
inline WeightingMatrix build_omega(OmegaKind kind, const WvEstimate& est) {
    const int J = static_cast<int>(est.num_scales());
    WeightingMatrix omega;
    omega.kind = kind;
    if (kind == OmegaKind::identity) {
        omega.m = Eigen::MatrixXd::Identity(J, J);
        return omega;
    }
    if (!est.cov) throw invalid_input("build_omega: WV covariance required for this weighting");
    const Eigen::MatrixXd& v = *est.cov;
    if (kind == OmegaKind::inverse_diag) {
        omega.m = Eigen::MatrixXd::Zero(J, J);
        for (int j = 0; j < J; ++j) {
            double d = v(j, j);
            if (!(d > 0.0)) throw numerical_failure("build_omega: nonpositive WV variance at scale " +
                                                    est.scales[static_cast<std::size_t>(j)].str());
            omega.m(j, j) = 1.0 / d;
        }
        return omega;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
    double emax = es.eigenvalues().maxCoeff();
    double emin = es.eigenvalues().minCoeff();
    Eigen::MatrixXd vr = v;
    if (!(emin > 1e-12 * emax)) vr.diagonal().array() += 1e-8 * v.trace() / static_cast<double>(J);
    omega.m = vr.llt().solve(Eigen::MatrixXd::Identity(J, J));
    omega.m = 0.5 * (omega.m + omega.m.transpose()).eval();
    return omega;
}

// The minimum-distance objective (nu_hat - nu(theta))^T Omega (nu_hat - nu(theta)).
inline double gmwm_objective(const std::vector<double>& nu_hat, const std::vector<double>& nu_model,
                             const WeightingMatrix& omega) {
    if (nu_hat.size() != nu_model.size() ||
        static_cast<long>(nu_hat.size()) != omega.m.rows())
        throw invalid_input("gmwm_objective: dimension mismatch");
    Eigen::Map<const Eigen::VectorXd> a(nu_hat.data(), static_cast<long>(nu_hat.size()));
    Eigen::Map<const Eigen::VectorXd> b(nu_model.data(), static_cast<long>(nu_model.size()));
    Eigen::VectorXd r = a - b;
    return r.dot(omega.m * r);
}

struct FitOptions {
    bool robust = false;
    double efficiency = 0.6;
    OmegaKind omega = OmegaKind::inverse_diag;
    int max_scales = 0;       // 0: all scales the data admits (1D)
    int max_scale_2d = 4;     // largest per-direction scale used for 2D fits
    double objective_tol = 1e-9;
    int restarts = 2;
    int max_iterations = 0;   // 0: 200 * (dim + 2) per pass
    double time_budget_seconds = 60.0;
    double ci_level = 0.95;
    int starting_candidates = 18;
};

struct FitResult {
    ModelSpec model_spec;   // as passed, free marks intact
    ModelSpec model;        // fitted, fully specified
    std::vector<std::string> param_names;
    std::vector<double> theta;  // free parameters at the optimum (natural space)
    double objective = std::numeric_limits<double>::infinity();
    bool converged = false;
    bool at_bound = false;
    int iterations = 0;
    double wall_seconds = 0.0;
    std::size_t n_obs = 0;
    std::size_t rows = 0, cols = 0;  // nonzero for lattice fits
    std::size_t n_min = 0;           // smallest per-scale coefficient count
    WvEstimate wv;
    WeightingMatrix omega;
    Eigen::MatrixXd param_cov;
    std::vector<std::pair<double, double>> ci;
    double ci_level = 0.95;
    std::vector<double> weights;        // per-observation robustness weights (robust 1D)
    std::vector<std::size_t> flagged;   // observations with weight < 0.1
    FitOptions options;

    double jstatistic() const { return static_cast<double>(n_min) * objective; }
};

// Minimum-distance sandwich: B = (D' Omega D)^-1 D' Omega, covariance B V B'.
// nu_cov is the covariance of nu-hat, so the 1/N_J scaling is already inside.
inline Eigen::MatrixXd param_covariance(const Eigen::MatrixXd& D, const Eigen::MatrixXd& nu_cov,
                                        const WeightingMatrix& omega) {
    if (D.rows() != nu_cov.rows() || D.rows() != omega.m.rows())
        throw invalid_input("param_covariance: dimension mismatch");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(D);
    double smax = svd.singularValues()(0);
    double smin = svd.singularValues()(svd.singularValues().size() - 1);
    if (!(smin > 1e-10 * std::max(1.0, smax)))
        throw identifiability_error("param_covariance: WV Jacobian is rank deficient");
    Eigen::MatrixXd dtod = D.transpose() * omega.m * D;
    Eigen::MatrixXd B = dtod.ldlt().solve(D.transpose() * omega.m);
    Eigen::MatrixXd cov = B * nu_cov * B.transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
    return cov;
}

// --- starting values ---------------------------------------------------------

namespace detail {

struct ImpliedWv {
    // evaluates the model-implied WV on the fit's scales
    std::function<std::vector<double>(const ModelSpec&)> eval;
};

// least-squares variance match: scale the unit-variance implied WV onto the
// mass allocated to this component
inline double mass_match(const std::vector<double>& implied_unit, double mass) {
    double s = 0.0;
    for (double v : implied_unit) s += v;
    if (!(s > 0.0)) return std::max(mass, 1e-8);
    return std::max(mass / s, 1e-10);
}

inline std::vector<std::vector<double>> component_seed_options(const ModelSpec& model,
                                                               const Component& comp,
                                                               const WvEstimate& est, double mass,
                                                               const ImpliedWv& implied) {
    const std::size_t np = comp.n_params();
    std::vector<std::vector<double>> opts;
    // peak scale drives the AR/range guesses
    std::size_t jstar = 0;
    for (std::size_t j = 1; j < est.nu.size(); ++j)
        if (est.nu[j] > est.nu[jstar]) jstar = j;

    auto unit_sum = [&](ComponentType t, const std::vector<double>& vals) {
        ModelSpec unit;
        switch (t) {
            case ComponentType::white_noise: unit.add_white_noise(1.0); break;
            case ComponentType::random_walk: unit.add_random_walk(1.0); break;
            case ComponentType::ar1: unit.add_ar1(vals[0], 1.0); break;
            case ComponentType::arma: {
                std::vector<double> ar(vals.begin(), vals.begin() + comp.p);
                std::vector<double> ma(vals.begin() + comp.p, vals.begin() + comp.p + comp.q);
                unit.add_arma(ar, ma, 1.0);
                break;
            }
            case ComponentType::spatial_exp: unit.add_spatial_exp(vals[0], 1.0); break;
            case ComponentType::spatial_gauss: unit.add_spatial_gauss(vals[0], 1.0); break;
        }
        return implied.eval(unit);
    };

    switch (comp.type) {
        case ComponentType::white_noise: {
            opts.push_back({mass_match(unit_sum(comp.type, {}), mass)});
            break;
        }
        case ComponentType::random_walk: {
            opts.push_back({mass_match(unit_sum(comp.type, {}), mass)});
            break;
        }
        case ComponentType::ar1: {
            double tau_star = static_cast<double>(haar_tau(est.scales[jstar].j1 > 0 ? est.scales[jstar].j1 : 1));
            double rho_peak = std::clamp(1.0 - 1.0 / (2.0 * tau_star), 0.05, 0.99);
            for (double rho : {rho_peak, 0.3, 0.7, 0.95, -0.3})
                opts.push_back({rho, mass_match(unit_sum(comp.type, {rho}), mass)});
            break;
        }
        case ComponentType::arma: {
            double tau_star = static_cast<double>(haar_tau(est.scales[jstar].j1 > 0 ? est.scales[jstar].j1 : 1));
            double rho_peak = std::clamp(1.0 - 1.0 / (2.0 * tau_star), 0.05, 0.9);
            std::vector<std::vector<double>> heads;
            std::vector<double> zeros(np - 1, 0.0);
            heads.push_back(zeros);  // white-noise-like
            if (comp.p > 0) {
                auto h = zeros;
                h[0] = rho_peak;
                heads.push_back(h);
                h[0] = 0.5;
                heads.push_back(h);
                h[0] = -0.3;
                heads.push_back(h);
            }
            for (auto& h : heads) {
                auto full = h;
                full.push_back(mass_match(unit_sum(comp.type, h), mass));
                opts.push_back(full);
            }
            break;
        }
        case ComponentType::spatial_exp:
        case ComponentType::spatial_gauss: {
            for (double phi : {0.5, 1.0, 2.0, 4.0})
                opts.push_back({phi, mass_match(unit_sum(comp.type, {phi}), mass)});
            break;
        }
    }
    (void)model;
    return opts;
}

} // namespace detail

// Moment-matching multi-start heuristic: candidate parameter vectors are
// seeded from the WV mass and peak scale, evaluated through the objective,
// and the best one wins.  Always returns a candidate.
inline std::vector<double> starting_values(const WvEstimate& est, const ModelSpec& model,
                                           const WeightingMatrix& omega,
                                           const detail::ImpliedWv& implied, int n_candidates = 18) {
    // single white-noise model: one-parameter inversion from scale 1
    if (model.components().size() == 1 &&
        model.components()[0].type == ComponentType::white_noise && model.n_free() == 1) {
        return {2.0 * est.nu.at(0)};
    }

    double mass = 0.0;
    for (double v : est.nu) mass += v;
    mass = std::max(mass, 1e-12);
    const double share = mass / static_cast<double>(model.components().size());

    std::vector<std::vector<std::vector<double>>> per_comp;
    for (const auto& c : model.components())
        per_comp.push_back(detail::component_seed_options(model, c, est, share, implied));

    auto jitter_engine = make_engine(0x5eedbeefULL, 7);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);

    ModelSpec cand = model;
    std::vector<double> best_free;
    double best_obj = std::numeric_limits<double>::infinity();
    std::size_t base_combos = 1;
    for (const auto& o : per_comp) base_combos = std::max(base_combos, o.size());

    for (int k = 0; k < n_candidates; ++k) {
        std::vector<double> full;
        for (std::size_t ci = 0; ci < per_comp.size(); ++ci) {
            const auto& opts = per_comp[ci];
            auto vals = opts[(static_cast<std::size_t>(k) + ci) % opts.size()];
            if (static_cast<std::size_t>(k) >= base_combos) {
                // jittered extra candidates
                const auto& comp = model.components()[ci];
                for (std::size_t pi = 0; pi < vals.size(); ++pi) {
                    const auto& par = model.parameters()[comp.offset + pi];
                    if (std::isfinite(par.hi)) {
                        vals[pi] = std::clamp(vals[pi] * (1.0 + 0.2 * unif(jitter_engine)),
                                              par.lo + 1e-6, par.hi - 1e-6);
                    } else {
                        vals[pi] = vals[pi] * std::exp(0.5 * unif(jitter_engine));
                    }
                }
            }
            full.insert(full.end(), vals.begin(), vals.end());
        }
        // keep fixed parameters at their pinned values
        std::vector<double> free_vals;
        for (std::size_t i = 0; i < model.parameters().size(); ++i) {
            if (model.parameters()[i].free)
                free_vals.push_back(full[i]);
        }
        try {
            cand.set_free_values(free_vals);
            cand.validate();
            double obj = gmwm_objective(est.nu, implied.eval(cand), omega);
            if (obj < best_obj) {
                best_obj = obj;
                best_free = free_vals;
            }
        } catch (const std::exception&) {
            // non-stationary or otherwise invalid seed; skip
        }
    }
    if (best_free.empty()) {
        // conservative fallback: zero dependence, equal mass
        std::vector<double> free_vals;
        for (const auto& p : model.parameters()) {
            if (!p.free) continue;
            if (std::isfinite(p.hi))
                free_vals.push_back(0.5 * (p.lo + p.hi));
            else
                free_vals.push_back(share);
        }
        return free_vals;
    }
    return best_free;
}

// --- fit ----------------------------------------------------------------------

namespace detail {

struct FitData {
    bool spatial = false;
    std::optional<WaveletCoefficients1D> c1;
    std::optional<WaveletCoefficients2D> c2;
    std::vector<ScalePair> pairs;
    int levels = 0;
};

inline FitResult fit_common(FitData&& data, const ModelSpec& model_in, const FitOptions& opt,
                            std::size_t n_obs, std::size_t rows, std::size_t cols) {
    const auto t_start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };

    FitResult res;
    res.model_spec = model_in;
    res.options = opt;
    res.n_obs = n_obs;
    res.rows = rows;
    res.cols = cols;
    res.ci_level = opt.ci_level;

    ModelSpec model = model_in;
    if (model.n_free() == 0) throw invalid_input("fit: model has no free parameters");
    if (model.spatial() != data.spatial)
        throw invalid_input("fit: model type does not match the data dimensionality");

    RobustScore score;  // classical sentinel
    if (opt.robust) score = tuning_for_efficiency(opt.efficiency);

    WvEstimate est = data.spatial
                         ? (opt.robust ? wv_robust(*data.c2, score) : wv_classical(*data.c2))
                         : (opt.robust ? wv_robust(*data.c1, score) : wv_classical(*data.c1));
    if (data.spatial)
        estimate_v_plugin(est, *data.c2);
    else
        estimate_v_plugin(est, *data.c1);
    wv_confidence_intervals(est, opt.ci_level);

    const std::size_t n_scales = est.num_scales();
    if (n_scales < model.n_free())
        throw identifiability_error("fit: " + std::to_string(n_scales) + " scales cannot identify " +
                                    std::to_string(model.n_free()) + " free parameters");

    WeightingMatrix omega = build_omega(opt.omega, est);

    ImpliedWv implied;
    if (data.spatial) {
        auto pairs = data.pairs;
        implied.eval = [pairs](const ModelSpec& m) { return theoretical_wv_2d(m, pairs).nu; };
    } else {
        int levels = data.levels;
        implied.eval = [levels](const ModelSpec& m) { return theoretical_wv_1d(m, levels).nu; };
    }

    auto theta0 = starting_values(est, model, omega, implied, opt.starting_candidates);
    model.set_free_values(theta0);

    const double penalty = 1e15;
    ModelSpec work = model;
    auto objective_u = [&](const std::vector<double>& u) {
        try {
            work.set_free_values(work.free_to_natural(u));
            if (!work.stationary()) return penalty;
            return gmwm_objective(est.nu, implied.eval(work), omega);
        } catch (const std::exception&) {
            return penalty;
        }
    };

    std::vector<double> u = model.free_to_unbounded(theta0);
    const int dim = static_cast<int>(u.size());
    SimplexOptions nm;
    nm.max_iter = opt.max_iterations > 0 ? opt.max_iterations : 200 * (dim + 2);
    nm.f_tol = opt.objective_tol;
    nm.should_stop = [&] { return elapsed() > opt.time_budget_seconds; };

    bool converged = false;
    bool aborted = false;
    double fbest = std::numeric_limits<double>::infinity();
    const double steps[] = {0.5, 0.1, 0.02};
    int iterations = 0;
    for (int pass = 0; pass <= opt.restarts; ++pass) {
        nm.initial_step = steps[std::min<std::size_t>(static_cast<std::size_t>(pass), 2)];
        auto r = nelder_mead(objective_u, u, nm);
        iterations += r.iterations;
        if (r.fx <= fbest) {
            fbest = r.fx;
            u = r.x;
        }
        converged = r.converged;
        aborted = r.aborted;
        if (aborted) break;
    }

    res.iterations = iterations;
    res.theta = model.free_to_natural(u);
    model.set_free_values(res.theta);
    res.model = model;
    res.param_names = model.free_names();
    res.objective = fbest;
    res.wv = est;
    res.omega = omega;
    res.n_min = est.n_min();

    for (double ui : u)
        if (std::abs(ui) > 25.0) res.at_bound = true;
    res.converged = converged && !aborted && !res.at_bound && fbest < penalty;

    // covariance and Wald intervals
    Eigen::MatrixXd D = data.spatial ? wv_jacobian_2d(model, data.pairs)
                                     : wv_jacobian_1d(model, data.levels);
    res.param_cov = param_covariance(D, *est.cov, omega);
    const double z = normal_quantile(0.5 * (1.0 + opt.ci_level));
    auto bounds = model.free_bounds();
    for (std::size_t i = 0; i < res.theta.size(); ++i) {
        double sd = std::sqrt(std::max(0.0, res.param_cov(static_cast<int>(i), static_cast<int>(i))));
        double lo = res.theta[i] - z * sd, hi = res.theta[i] + z * sd;
        lo = std::max(lo, bounds[i].first);
        hi = std::min(hi, bounds[i].second);
        res.ci.emplace_back(lo, hi);
    }

    res.wall_seconds = elapsed();
    return res;
}

} // namespace detail

inline FitResult fit(const TimeSeries& series, const ModelSpec& model, const FitOptions& opt = {}) {
    detail::FitData d;
    d.spatial = false;
    int jmax = max_scales_1d(series.size());
    d.levels = (opt.max_scales > 0) ? std::min(opt.max_scales, jmax) : jmax;
    d.c1 = modwt_haar(series, d.levels);
    auto res = detail::fit_common(std::move(d), model, opt, series.size(), 0, 0);
    if (opt.robust) {
        // per-observation weights from the fitted robust WV
        res.weights.clear();
        res.flagged.clear();
        const auto& w1 = res.wv;
        const int scales_used = std::min(2, static_cast<int>(w1.num_scales()));
        std::vector<double> obs(series.size(), 0.0);
        auto coeffs = modwt_haar(series, scales_used);
        for (int j = 1; j <= scales_used; ++j) {
            const auto& w = coeffs.at_scale(j);
            const long L = haar_length(j);
            const double inv = 1.0 / std::sqrt(w1.nu[static_cast<std::size_t>(j - 1)]);
            for (std::size_t t = 0; t < w.size(); ++t) {
                double tw = tukey_weight(w[t] * inv, w1.score.c);
                double sqw = tw * tw;
                // coefficient anchored at time t + L - 1 covers L observations
                std::size_t hi_t = t + static_cast<std::size_t>(L) - 1;
                for (std::size_t i = hi_t + 1 - static_cast<std::size_t>(L); i <= hi_t; ++i)
                    obs[i] = std::max(obs[i], sqw);
            }
        }
        res.weights = std::move(obs);
        for (std::size_t i = 0; i < res.weights.size(); ++i)
            if (res.weights[i] < 0.1) res.flagged.push_back(i);
    }
    return res;
}

inline FitResult fit(const LatticeField& field, const ModelSpec& model, const FitOptions& opt = {}) {
    detail::FitData d;
    d.spatial = true;
    int jmax = std::min(max_scale_2d(field.rows(), field.cols()), opt.max_scale_2d);
    for (int j1 = 1; j1 <= jmax; ++j1)
        for (int j2 = j1; j2 <= jmax; ++j2) d.pairs.push_back({j1, j2});
    d.c2 = modwt2d_haar(field, d.pairs);
    return detail::fit_common(std::move(d), model, opt, field.rows() * field.cols(), field.rows(),
                              field.cols());
}

// Per-observation robustness weights of a converged robust fit.  Each
// observation gets the largest squared Tukey weight among the scale-1/2
// coefficients covering it, so an isolated spike zeroes its own weight
// without dragging its clean neighbours below the flag threshold.
inline std::vector<double> observation_weights(const TimeSeries& series, const FitResult& fit_result) {
    if (!fit_result.options.robust)
        throw invalid_input("observation_weights: available for robust fits only");
    if (fit_result.rows > 0) throw invalid_input("observation_weights: time-series fits only");
    if (!fit_result.weights.empty() && fit_result.weights.size() == series.size())
        return fit_result.weights;
    throw invalid_input("observation_weights: fit does not carry weights for this series");
}

// --- parametric bootstrap -----------------------------------------------------

// Covariance of nu-hat over B replicates simulated from a fitted model.
inline Eigen::MatrixXd estimate_v_bootstrap(WvEstimate& est, const ModelSpec& fitted,
                                            std::size_t n_or_rows, std::size_t cols, int B,
                                            std::uint64_t seed) {
    if (B < 2) throw invalid_input("estimate_v_bootstrap: need at least 2 replicates");
    fitted.validate();
    const std::size_t J = est.num_scales();
    std::vector<std::vector<double>> nus(static_cast<std::size_t>(B));
    parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
        WvEstimate e;
        if (fitted.spatial()) {
            auto field = simulate(fitted, n_or_rows, cols, stream_seed(seed, 101, b));
            std::vector<ScalePair> pairs;
            for (const auto& s : est.scales) pairs.push_back({s.j1, s.j2});
            auto c = modwt2d_haar(field, pairs);
            e = est.method == WvMethod::robust ? wv_robust(c, est.score) : wv_classical(c);
        } else {
            auto series = simulate(fitted, n_or_rows, stream_seed(seed, 101, b));
            int levels = static_cast<int>(J);
            auto c = modwt_haar(series, levels);
            e = est.method == WvMethod::robust ? wv_robust(c, est.score) : wv_classical(c);
        }
        nus[b] = e.nu;
    });
    Eigen::MatrixXd X(B, static_cast<int>(J));
    for (int b = 0; b < B; ++b)
        for (std::size_t j = 0; j < J; ++j) X(b, static_cast<int>(j)) = nus[static_cast<std::size_t>(b)][j];
    Eigen::RowVectorXd mean = X.colwise().mean();
    Eigen::MatrixXd centered = X.rowwise() - mean;
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(B - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (B - 1 < static_cast<int>(J) ||
        !(es.eigenvalues().minCoeff() > 1e-12 * std::max(1e-300, es.eigenvalues().maxCoeff())))
        throw numerical_failure("estimate_v_bootstrap: rank-deficient covariance (too few replicates)");
    cov = 0.5 * (cov + cov.transpose()).eval();
    est.cov = cov;
    return cov;
}

// --- bootstrap J-test -----------------------------------------------------------

struct JTestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    int replicates = 0;
    std::vector<double> null_sample;
};

// Simulates B datasets from the fitted model, refits each with the same
// estimator, and compares N_J * objective against the bootstrap null.
inline JTestResult jtest_bootstrap(const FitResult& fitted, int B, std::uint64_t seed) {
    if (!fitted.converged) throw invalid_input("jtest_bootstrap: fit did not converge");
    if (B < 99) throw invalid_input("jtest_bootstrap: need at least 99 bootstrap replicates");
    const double observed = fitted.jstatistic();

    std::vector<double> stats(static_cast<std::size_t>(B),
                              std::numeric_limits<double>::quiet_NaN());
    parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
        try {
            FitResult r;
            if (fitted.rows > 0) {
                auto field = simulate(fitted.model, fitted.rows, fitted.cols, stream_seed(seed, 211, b));
                r = fit(field, fitted.model_spec, fitted.options);
            } else {
                auto series = simulate(fitted.model, fitted.n_obs, stream_seed(seed, 211, b));
                r = fit(series, fitted.model_spec, fitted.options);
            }
            if (r.converged) stats[b] = r.jstatistic();
        } catch (const std::exception&) {
            // counted as a failed replicate below
        }
    });

    JTestResult out;
    out.statistic = observed;
    for (double s : stats)
        if (std::isfinite(s)) out.null_sample.push_back(s);
    const int failures = B - static_cast<int>(out.null_sample.size());
    if (failures > B / 5)
        throw numerical_failure("jtest_bootstrap: more than 20% of bootstrap refits failed");
    out.replicates = static_cast<int>(out.null_sample.size());
    int ge = 0;
    for (double s : out.null_sample)
        if (s >= observed) ++ge;
    out.p_value = (1.0 + ge) / (out.replicates + 1.0);
    return out;
}

} // namespace rgmwm

#endif
