#ifndef RGMWM_MODELS_HPP
#define RGMWM_MODELS_HPP

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rgmwm/errors.hpp"
#include "rgmwm/rng.hpp"
#include "rgmwm/wavelet.hpp"

namespace rgmwm {

enum class ComponentType { white_noise, random_walk, ar1, arma, spatial_exp, spatial_gauss };

inline bool is_spatial_type(ComponentType t) {
    return t == ComponentType::spatial_exp || t == ComponentType::spatial_gauss;
}

inline const char* component_name(ComponentType t) {
    switch (t) {
        case ComponentType::white_noise: return "wn";
        case ComponentType::random_walk: return "rw";
        case ComponentType::ar1: return "ar1";
        case ComponentType::arma: return "arma";
        case ComponentType::spatial_exp: return "exp";
        case ComponentType::spatial_gauss: return "gauss";
    }
    return "?";
}

struct Component {
    ComponentType type = ComponentType::white_noise;
    int p = 0, q = 0;        // ARMA orders
    std::size_t offset = 0;  // first parameter index in the flat vector

    std::size_t n_params() const {
        switch (type) {
            case ComponentType::white_noise:
            case ComponentType::random_walk: return 1;
            case ComponentType::ar1:
            case ComponentType::spatial_exp:
            case ComponentType::spatial_gauss: return 2;
            case ComponentType::arma: return static_cast<std::size_t>(p + q + 1);
        }
        return 0;
    }
};

struct Parameter {
    std::string name;  // "<component-index>.<component>.<param>"
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();  // open interval
    bool free = true;
    double value = std::numeric_limits<double>::quiet_NaN();
};

// Bijections between a bounded natural parameter and the optimizer's
// unbounded space: log for half-lines, scaled logit for intervals.
inline double param_to_unbounded(double x, double lo, double hi) {
    const bool lo_f = std::isfinite(lo), hi_f = std::isfinite(hi);
    if (!lo_f && !hi_f) return x;
    if (lo_f && !hi_f) return std::log(x - lo);
    if (!lo_f && hi_f) return -std::log(hi - x);
    return std::log((x - lo) / (hi - x));
}

inline double param_to_natural(double u, double lo, double hi) {
    const bool lo_f = std::isfinite(lo), hi_f = std::isfinite(hi);
    if (!lo_f && !hi_f) return u;
    if (lo_f && !hi_f) return lo + std::exp(u);
    if (!lo_f && hi_f) return hi - std::exp(-u);
    if (u >= 0.0) {
        double e = std::exp(-u);
        return (lo * e + hi) / (1.0 + e);
    }
    double e = std::exp(u);
    return (lo + hi * e) / (1.0 + e);
}

struct TheoreticalWv {
    std::vector<ScaleLabel> scales;
    std::vector<double> nu;
};

class ModelSpec {
public:
    ModelSpec() = default;

    // --- construction -----------------------------------------------------

    ModelSpec& add_white_noise(double s2 = nan_) { return add(ComponentType::white_noise, {s2}); }
    ModelSpec& add_random_walk(double g2 = nan_) { return add(ComponentType::random_walk, {g2}); }
    ModelSpec& add_ar1(double rho = nan_, double v2 = nan_) { return add(ComponentType::ar1, {rho, v2}); }
    ModelSpec& add_arma(const std::vector<double>& ar, const std::vector<double>& ma, double s2 = nan_) {
        Component c;
        c.type = ComponentType::arma;
        c.p = static_cast<int>(ar.size());
        c.q = static_cast<int>(ma.size());
        std::vector<double> vals = ar;
        vals.insert(vals.end(), ma.begin(), ma.end());
        vals.push_back(s2);
        return add_component(c, vals);
    }
    ModelSpec& add_spatial_exp(double phi = nan_, double s2 = nan_) {
        return add(ComponentType::spatial_exp, {phi, s2});
    }
    ModelSpec& add_spatial_gauss(double phi = nan_, double s2 = nan_) {
        return add(ComponentType::spatial_gauss, {phi, s2});
    }

    static ModelSpec parse(const std::string& text);
    std::string format() const;

    // --- structure --------------------------------------------------------

    const std::vector<Component>& components() const noexcept { return comps_; }
    const std::vector<Parameter>& parameters() const noexcept { return params_; }
    std::size_t n_params() const noexcept { return params_.size(); }

    bool empty() const noexcept { return comps_.empty(); }
    bool spatial() const {
        return !comps_.empty() && is_spatial_type(comps_.front().type);
    }
    bool has_component(ComponentType t) const {
        for (const auto& c : comps_)
            if (c.type == t) return true;
        return false;
    }

    std::size_t n_free() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.free ? 1 : 0;
        return n;
    }
    std::vector<std::size_t> free_indices() const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < params_.size(); ++i)
            if (params_[i].free) idx.push_back(i);
        return idx;
    }
    std::vector<double> free_values() const {
        std::vector<double> v;
        for (const auto& p : params_)
            if (p.free) v.push_back(p.value);
        return v;
    }
    void set_free_values(const std::vector<double>& v) {
        if (v.size() != n_free()) throw invalid_input("set_free_values: size mismatch");
        std::size_t k = 0;
        for (auto& p : params_)
            if (p.free) p.value = v[k++];
    }
    std::vector<std::string> free_names() const {
        std::vector<std::string> v;
        for (const auto& p : params_)
            if (p.free) v.push_back(p.name);
        return v;
    }
    std::vector<std::pair<double, double>> free_bounds() const {
        std::vector<std::pair<double, double>> v;
        for (const auto& p : params_)
            if (p.free) v.emplace_back(p.lo, p.hi);
        return v;
    }

    std::vector<double> free_to_unbounded(const std::vector<double>& natural) const {
        auto b = free_bounds();
        if (natural.size() != b.size()) throw invalid_input("free_to_unbounded: size mismatch");
        std::vector<double> u(natural.size());
        for (std::size_t i = 0; i < u.size(); ++i)
            u[i] = param_to_unbounded(natural[i], b[i].first, b[i].second);
        return u;
    }
    std::vector<double> free_to_natural(const std::vector<double>& unbounded) const {
        auto b = free_bounds();
        if (unbounded.size() != b.size()) throw invalid_input("free_to_natural: size mismatch");
        std::vector<double> x(unbounded.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] = param_to_natural(unbounded[i], b[i].first, b[i].second);
        return x;
    }

    ModelSpec with_all_free() const {
        ModelSpec m = *this;
        for (auto& p : m.params_) {
            p.free = true;
            p.value = nan_;
        }
        return m;
    }

    bool fully_specified() const {
        for (const auto& p : params_)
            if (!std::isfinite(p.value)) return false;
        return true;
    }

    // Numerical stationarity of every ARMA component: companion-matrix
    // spectral radius below 1 - margin.  AR1 is checked directly.
    bool stationary(double margin = 1e-8) const {
        for (const auto& c : comps_) {
            if (c.type == ComponentType::ar1) {
                double rho = params_[c.offset].value;
                if (!(std::abs(rho) < 1.0 - margin)) return false;
            } else if (c.type == ComponentType::arma && c.p > 0) {
                Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(c.p, c.p);
                for (int i = 0; i < c.p; ++i) comp(0, i) = params_[c.offset + static_cast<std::size_t>(i)].value;
                for (int i = 1; i < c.p; ++i) comp(i, i - 1) = 1.0;
                double radius = comp.eigenvalues().cwiseAbs().maxCoeff();
                if (!(radius < 1.0 - margin)) return false;
            }
        }
        return true;
    }

    // Throws invalid_input when values are missing, out of bounds,
    // non-stationary, or temporal/spatial components are mixed.
    void validate() const {
        if (comps_.empty()) throw invalid_input("model has no components");
        bool sp = is_spatial_type(comps_.front().type);
        for (const auto& c : comps_)
            if (is_spatial_type(c.type) != sp)
                throw invalid_input("temporal and spatial components cannot be mixed");
        if (!fully_specified()) throw invalid_input("model has unset parameters");
        for (const auto& p : params_) {
            if (!(p.value > p.lo && p.value < p.hi))
                throw invalid_input("parameter " + p.name + " outside its open bounds");
        }
        if (!stationary()) throw invalid_input("autoregressive polynomial is not stationary");
    }

private:
    static constexpr double nan_ = std::numeric_limits<double>::quiet_NaN();

    std::vector<Component> comps_;
    std::vector<Parameter> params_;

    ModelSpec& add(ComponentType t, std::vector<double> vals) {
        Component c;
        c.type = t;
        return add_component(c, vals);
    }

    ModelSpec& add_component(Component c, const std::vector<double>& vals) {
        c.offset = params_.size();
        const std::string prefix =
            std::to_string(comps_.size() + 1) + "." + component_name(c.type) + ".";
        auto push = [&](const std::string& n, double lo, double hi, double v) {
            Parameter p;
            p.name = prefix + n;
            p.lo = lo;
            p.hi = hi;
            p.value = v;
            p.free = !std::isfinite(v);
            params_.push_back(p);
        };
        const double inf = std::numeric_limits<double>::infinity();
        switch (c.type) {
            case ComponentType::white_noise: push("s2", 0.0, inf, vals.at(0)); break;
            case ComponentType::random_walk: push("g2", 0.0, inf, vals.at(0)); break;
            case ComponentType::ar1:
                push("rho", -0.999999, 0.999999, vals.at(0));
                push("v2", 0.0, inf, vals.at(1));
                break;
            case ComponentType::arma: {
                std::size_t k = 0;
                for (int i = 1; i <= c.p; ++i) push("rho" + std::to_string(i), -4.0, 4.0, vals.at(k++));
                for (int i = 1; i <= c.q; ++i) push("ma" + std::to_string(i), -4.0, 4.0, vals.at(k++));
                push("s2", 0.0, inf, vals.at(k));
                break;
            }
            case ComponentType::spatial_exp:
            case ComponentType::spatial_gauss:
                push("phi", 0.0, inf, vals.at(0));
                push("s2", 0.0, inf, vals.at(1));
                break;
        }
        comps_.push_back(c);
        return *this;
    }
};

// --- mini-language ---------------------------------------------------------
// model     := "sum" "(" component ("," component)* ")" | component
// component := name "(" param "=" (number | "?") {"," ...} ")"
// names: wn(s2), rw(g2), ar1(rho,v2), arma(rho1..,ma1..,s2), exp(phi,s2),
// gauss(phi,s2).  "?" marks a parameter left free for estimation.

namespace detail {

struct ModelLexer {
    const std::string& s;
    std::size_t i = 0;
    explicit ModelLexer(const std::string& text) : s(text) {}
    void skip_ws() {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    }
    bool eat(char c) {
        skip_ws();
        if (i < s.size() && s[i] == c) {
            ++i;
            return true;
        }
        return false;
    }
    void expect(char c) {
        if (!eat(c)) throw parse_error(std::string("expected '") + c + "' in model spec near position " +
                                       std::to_string(i));
    }
    std::string ident() {
        skip_ws();
        std::size_t b = i;
        while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
        if (b == i) throw parse_error("expected identifier in model spec near position " + std::to_string(i));
        return s.substr(b, i - b);
    }
    double number_or_free() {
        skip_ws();
        if (i < s.size() && s[i] == '?') {
            ++i;
            return std::numeric_limits<double>::quiet_NaN();
        }
        std::size_t b = i;
        while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '+' ||
                                s[i] == '-' || s[i] == '.' || s[i] == 'e' || s[i] == 'E'))
            ++i;
        try {
            std::size_t used = 0;
            double v = std::stod(s.substr(b, i - b), &used);
            if (used != i - b) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw parse_error("invalid number in model spec near position " + std::to_string(b));
        }
    }
    bool done() {
        skip_ws();
        return i >= s.size();
    }
};

inline void parse_component(ModelLexer& lx, ModelSpec& spec) {
    std::string name = lx.ident();
    lx.expect('(');
    std::vector<std::pair<std::string, double>> kv;
    while (true) {
        std::string key = lx.ident();
        lx.expect('=');
        kv.emplace_back(key, lx.number_or_free());
        if (!lx.eat(',')) break;
    }
    lx.expect(')');

    auto get = [&](const std::string& key) -> double {
        for (auto& [k, v] : kv)
            if (k == key) return v;
        throw parse_error("component '" + name + "' is missing parameter '" + key + "'");
    };
    auto allow_only = [&](std::initializer_list<const char*> keys) {
        for (auto& [k, v] : kv) {
            bool ok = false;
            for (auto key : keys) ok = ok || (k == key);
            if (!ok) throw parse_error("component '" + name + "' has unknown parameter '" + k + "'");
        }
    };

    if (name == "wn") {
        allow_only({"s2"});
        spec.add_white_noise(get("s2"));
    } else if (name == "rw") {
        allow_only({"g2"});
        spec.add_random_walk(get("g2"));
    } else if (name == "ar1") {
        allow_only({"rho", "v2"});
        spec.add_ar1(get("rho"), get("v2"));
    } else if (name == "exp") {
        allow_only({"phi", "s2"});
        spec.add_spatial_exp(get("phi"), get("s2"));
    } else if (name == "gauss") {
        allow_only({"phi", "s2"});
        spec.add_spatial_gauss(get("phi"), get("s2"));
    } else if (name == "arma") {
        int p = 0, q = 0;
        for (auto& [k, v] : kv) {
            if (k.rfind("rho", 0) == 0)
                p = std::max(p, std::stoi(k.substr(3)));
            else if (k.rfind("ma", 0) == 0)
                q = std::max(q, std::stoi(k.substr(2)));
            else if (k != "s2")
                throw parse_error("component 'arma' has unknown parameter '" + k + "'");
        }
        std::vector<double> ar, ma;
        for (int i = 1; i <= p; ++i) ar.push_back(get("rho" + std::to_string(i)));
        for (int i = 1; i <= q; ++i) ma.push_back(get("ma" + std::to_string(i)));
        spec.add_arma(ar, ma, get("s2"));
    } else {
        throw parse_error("unknown model component '" + name + "'");
    }
}

} // namespace detail

inline ModelSpec ModelSpec::parse(const std::string& text) {
    detail::ModelLexer lx(text);
    ModelSpec spec;
    lx.skip_ws();
    if (text.compare(lx.i, 4, "sum(") == 0 || text.compare(lx.i, 4, "sum ") == 0) {
        std::string kw = lx.ident();
        lx.expect('(');
        while (true) {
            detail::parse_component(lx, spec);
            if (!lx.eat(',')) break;
        }
        lx.expect(')');
    } else {
        detail::parse_component(lx, spec);
    }
    if (!lx.done()) throw parse_error("trailing characters in model spec near position " + std::to_string(lx.i));
    if (spec.empty()) throw parse_error("empty model spec");
    bool sp = is_spatial_type(spec.components().front().type);
    for (const auto& c : spec.components())
        if (is_spatial_type(c.type) != sp)
            throw parse_error("temporal and spatial components cannot be mixed");
    return spec;
}

inline std::string ModelSpec::format() const {
    auto fmt_val = [](double v) -> std::string {
        if (!std::isfinite(v)) return "?";
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    };
    std::ostringstream os;
    if (comps_.size() > 1) os << "sum(";
    for (std::size_t ci = 0; ci < comps_.size(); ++ci) {
        const auto& c = comps_[ci];
        if (ci) os << ",";
        os << component_name(c.type) << "(";
        for (std::size_t k = 0; k < c.n_params(); ++k) {
            const auto& p = params_[c.offset + k];
            if (k) os << ",";
            // strip the "<idx>.<component>." prefix back off
            auto pos = p.name.rfind('.');
            os << p.name.substr(pos + 1) << "=" << fmt_val(p.value);
        }
        os << ")";
    }
    if (comps_.size() > 1) os << ")";
    return os.str();
}

// --- theoretical autocovariance ---------------------------------------------

namespace detail {

inline std::vector<double> arma_acf(const std::vector<double>& ar, const std::vector<double>& ma,
                                    double s2, std::size_t max_lag) {
    const int p = static_cast<int>(ar.size()), q = static_cast<int>(ma.size());
    // MA(inf) weights up to q
    std::vector<double> psi(static_cast<std::size_t>(q) + 1, 0.0);
    psi[0] = 1.0;
    for (int j = 1; j <= q; ++j) {
        double v = ma[static_cast<std::size_t>(j - 1)];
        for (int i = 1; i <= std::min(j, p); ++i) v += ar[static_cast<std::size_t>(i - 1)] * psi[static_cast<std::size_t>(j - i)];
        psi[static_cast<std::size_t>(j)] = v;
    }
    auto rhs = [&](int k) {
        double v = 0.0;
        for (int j = k; j <= q; ++j) {
            double bj = (j == 0) ? 1.0 : ma[static_cast<std::size_t>(j - 1)];
            v += bj * psi[static_cast<std::size_t>(j - k)];
        }
        return s2 * v;
    };

    std::vector<double> gamma(max_lag + 1, 0.0);
    if (p == 0) {
        for (std::size_t k = 0; k <= max_lag; ++k)
            gamma[k] = (static_cast<int>(k) <= q) ? rhs(static_cast<int>(k)) : 0.0;
        return gamma;
    }

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p + 1, p + 1);
    Eigen::VectorXd b(p + 1);
    for (int k = 0; k <= p; ++k) {
        A(k, k) += 1.0;
        for (int i = 1; i <= p; ++i) A(k, std::abs(k - i)) -= ar[static_cast<std::size_t>(i - 1)];
        b(k) = (k <= q) ? rhs(k) : 0.0;
    }
    Eigen::VectorXd g0 = A.fullPivLu().solve(b);
    for (int k = 0; k <= p && static_cast<std::size_t>(k) <= max_lag; ++k) gamma[static_cast<std::size_t>(k)] = g0(k);
    for (std::size_t k = static_cast<std::size_t>(p) + 1; k <= max_lag; ++k) {
        double v = 0.0;
        for (int i = 1; i <= p; ++i) v += ar[static_cast<std::size_t>(i - 1)] * gamma[k - static_cast<std::size_t>(i)];
        if (static_cast<int>(k) <= q) v += rhs(static_cast<int>(k));
        gamma[k] = v;
    }
    return gamma;
}

inline std::vector<double> component_acf(const ModelSpec& m, const Component& c, std::size_t max_lag) {
    const auto& pars = m.parameters();
    std::vector<double> g(max_lag + 1, 0.0);
    switch (c.type) {
        case ComponentType::white_noise:
            g[0] = pars[c.offset].value;
            break;
        case ComponentType::ar1: {
            double rho = pars[c.offset].value, v2 = pars[c.offset + 1].value;
            double g0 = v2 / (1.0 - rho * rho);
            for (std::size_t h = 0; h <= max_lag; ++h) g[h] = g0 * std::pow(rho, static_cast<double>(h));
            break;
        }
        case ComponentType::arma: {
            std::vector<double> ar, ma;
            for (int i = 0; i < c.p; ++i) ar.push_back(pars[c.offset + static_cast<std::size_t>(i)].value);
            for (int i = 0; i < c.q; ++i) ma.push_back(pars[c.offset + static_cast<std::size_t>(c.p + i)].value);
            double s2 = pars[c.offset + static_cast<std::size_t>(c.p + c.q)].value;
            g = arma_acf(ar, ma, s2, max_lag);
            break;
        }
        case ComponentType::random_walk:
            throw unsupported_for_acf("random walk has no stationary autocovariance");
        default:
            throw invalid_input("theoretical_acf: spatial components have no temporal ACF");
    }
    return g;
}

} // namespace detail

// Autocovariance gamma(0..max_lag) of a sum of independent stationary
// temporal components.
inline std::vector<double> theoretical_acf(const ModelSpec& model, std::size_t max_lag) {
    model.validate();
    if (model.spatial()) throw invalid_input("theoretical_acf: temporal models only");
    if (model.has_component(ComponentType::random_walk))
        throw unsupported_for_acf("theoretical_acf: random walk component is not stationary");
    std::vector<double> g(max_lag + 1, 0.0);
    for (const auto& c : model.components()) {
        auto gc = detail::component_acf(model, c, max_lag);
        for (std::size_t h = 0; h <= max_lag; ++h) g[h] += gc[h];
    }
    return g;
}

// --- model-implied wavelet variance -----------------------------------------

// nu_j = rho_h(0) gamma(0) + 2 sum_k rho_h(k) gamma(k) per stationary
// component (rho_h the Haar filter autocorrelation); the random walk uses the
// closed form gamma^2 (2 tau^2 + 1) / (12 tau), verified against a
// brute-force variance of Haar-filtered cumulative sums in the test suite.
inline TheoreticalWv theoretical_wv_1d(const ModelSpec& model, int levels) {
    model.validate();
    if (model.spatial()) throw invalid_input("theoretical_wv_1d: temporal models only");
    if (levels < 1) throw invalid_input("theoretical_wv_1d: need at least one scale");

    TheoreticalWv out;
    for (int j = 1; j <= levels; ++j) out.scales.push_back({j, 0});
    out.nu.assign(static_cast<std::size_t>(levels), 0.0);

    const std::size_t max_lag = static_cast<std::size_t>(haar_length(levels)) - 1;
    for (const auto& c : model.components()) {
        if (c.type == ComponentType::random_walk) {
            double g2 = model.parameters()[c.offset].value;
            for (int j = 1; j <= levels; ++j) {
                double tau = static_cast<double>(haar_tau(j));
                out.nu[static_cast<std::size_t>(j - 1)] += g2 * (2.0 * tau * tau + 1.0) / (12.0 * tau);
            }
            continue;
        }
        auto gamma = detail::component_acf(model, c, max_lag);
        for (int j = 1; j <= levels; ++j) {
            const long L = haar_length(j);
            double nu = haar_filter_autocorr(j, 0) * gamma[0];
            for (long k = 1; k < L; ++k) nu += 2.0 * haar_filter_autocorr(j, k) * gamma[static_cast<std::size_t>(k)];
            out.nu[static_cast<std::size_t>(j - 1)] += nu;
        }
    }
    return out;
}

// Isotropic spatial covariance of one component at distance d.
inline double spatial_covariance(ComponentType t, double phi, double s2, double d) {
    if (t == ComponentType::spatial_exp) return s2 * std::exp(-d / phi);
    if (t == ComponentType::spatial_gauss) return s2 * std::exp(-(d / phi) * (d / phi));
    throw invalid_input("spatial_covariance: not a spatial component");
}

// nu_{j1,j2} = sum over filter-lag offsets of rho_{j1}(du) rho_{j2}(dv) C(d),
// the separable-filter reduction of the exact quadruple sum.
inline TheoreticalWv theoretical_wv_2d(const ModelSpec& model, const std::vector<ScalePair>& pairs) {
    model.validate();
    if (!model.spatial()) throw invalid_input("theoretical_wv_2d: spatial models only");
    TheoreticalWv out;
    out.nu.assign(pairs.size(), 0.0);
    for (const auto& p : pairs) out.scales.push_back({p.j1, p.j2});

    for (const auto& c : model.components()) {
        const double phi = model.parameters()[c.offset].value;
        const double s2 = model.parameters()[c.offset + 1].value;
        for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
            const long L1 = haar_length(pairs[pi].j1);
            const long L2 = haar_length(pairs[pi].j2);
            double acc = 0.0;
            for (long du = 0; du < L1; ++du) {
                const double wu = haar_filter_autocorr(pairs[pi].j1, du) * (du == 0 ? 1.0 : 2.0);
                for (long dv = 0; dv < L2; ++dv) {
                    const double wv = haar_filter_autocorr(pairs[pi].j2, dv) * (dv == 0 ? 1.0 : 2.0);
                    const double d = std::hypot(static_cast<double>(du), static_cast<double>(dv));
                    acc += wu * wv * spatial_covariance(c.type, phi, s2, d);
                }
            }
            out.nu[pi] += acc;
        }
    }
    return out;
}

// --- Jacobian of the model-implied WV ---------------------------------------

namespace detail {

template <typename Eval>
Eigen::MatrixXd wv_jacobian_impl(const ModelSpec& model, std::size_t n_scales, Eval eval) {
    auto idx = model.free_indices();
    if (idx.empty()) throw invalid_input("wv_jacobian: model has no free parameters");
    Eigen::MatrixXd D(static_cast<int>(n_scales), static_cast<int>(idx.size()));
    ModelSpec work = model;
    auto theta = work.free_values();
    auto bounds = work.free_bounds();
    for (std::size_t k = 0; k < idx.size(); ++k) {
        double h = std::max(1e-6, 1e-6 * std::abs(theta[k]));
        std::vector<double> plus, minus;
        for (int attempt = 0;; ++attempt) {
            if (h < 1e-12)
                throw numerical_failure("wv_jacobian: cannot take a finite-difference step for " +
                                        work.free_names()[k]);
            double lo = bounds[k].first, hi = bounds[k].second;
            if (theta[k] + h >= hi || theta[k] - h <= lo) {
                h *= 0.5;
                continue;
            }
            try {
                auto t = theta;
                t[k] = theta[k] + h;
                work.set_free_values(t);
                plus = eval(work);
                t[k] = theta[k] - h;
                work.set_free_values(t);
                minus = eval(work);
                break;
            } catch (const invalid_input&) {
                h *= 0.5;  // stepped over a stationarity boundary
            }
        }
        for (std::size_t s = 0; s < n_scales; ++s)
            D(static_cast<int>(s), static_cast<int>(k)) = (plus[s] - minus[s]) / (2.0 * h);
    }
    work.set_free_values(theta);
    return D;
}

} // namespace detail

inline Eigen::MatrixXd wv_jacobian_1d(const ModelSpec& model, int levels) {
    return detail::wv_jacobian_impl(model, static_cast<std::size_t>(levels), [levels](const ModelSpec& m) {
        return theoretical_wv_1d(m, levels).nu;
    });
}

inline Eigen::MatrixXd wv_jacobian_2d(const ModelSpec& model, const std::vector<ScalePair>& pairs) {
    return detail::wv_jacobian_impl(model, pairs.size(), [&pairs](const ModelSpec& m) {
        return theoretical_wv_2d(m, pairs).nu;
    });
}

// --- simulation --------------------------------------------------------------

namespace detail {

inline std::size_t arma_burn_in(const ModelSpec& m, const Component& c) {
    double radius = 0.0;
    if (c.type == ComponentType::ar1) radius = std::abs(m.parameters()[c.offset].value);
    if (c.type == ComponentType::arma && c.p > 0) {
        Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(c.p, c.p);
        for (int i = 0; i < c.p; ++i) comp(0, i) = m.parameters()[c.offset + static_cast<std::size_t>(i)].value;
        for (int i = 1; i < c.p; ++i) comp(i, i - 1) = 1.0;
        radius = comp.eigenvalues().cwiseAbs().maxCoeff();
    }
    double charlen = radius < 1.0 ? 1.0 / (1.0 - radius) : 1e4;
    charlen = std::min(charlen, 1e4);
    return static_cast<std::size_t>(10.0 * std::ceil(charlen)) + static_cast<std::size_t>(c.p + c.q) + 1;
}

inline void add_component_path(const ModelSpec& m, const Component& c, std::vector<double>& x,
                               std::mt19937_64& eng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto& pars = m.parameters();
    const std::size_t n = x.size();
    switch (c.type) {
        case ComponentType::white_noise: {
            double s = std::sqrt(pars[c.offset].value);
            for (auto& xi : x) xi += s * normal(eng);
            break;
        }
        case ComponentType::random_walk: {
            double s = std::sqrt(pars[c.offset].value);
            double acc = 0.0;
            for (auto& xi : x) {
                acc += s * normal(eng);
                xi += acc;
            }
            break;
        }
        case ComponentType::ar1: {
            double rho = pars[c.offset].value;
            double s = std::sqrt(pars[c.offset + 1].value);
            std::size_t burn = arma_burn_in(m, c);
            double y = 0.0;
            for (std::size_t t = 0; t < burn; ++t) y = rho * y + s * normal(eng);
            for (auto& xi : x) {
                y = rho * y + s * normal(eng);
                xi += y;
            }
            break;
        }
        case ComponentType::arma: {
            std::vector<double> ar, ma;
            for (int i = 0; i < c.p; ++i) ar.push_back(pars[c.offset + static_cast<std::size_t>(i)].value);
            for (int i = 0; i < c.q; ++i) ma.push_back(pars[c.offset + static_cast<std::size_t>(c.p + i)].value);
            double s = std::sqrt(pars[c.offset + static_cast<std::size_t>(c.p + c.q)].value);
            std::size_t burn = arma_burn_in(m, c);
            std::deque<double> ybuf(ar.size(), 0.0), ebuf(ma.size(), 0.0);
            auto step = [&]() {
                double e = s * normal(eng);
                double y = e;
                for (std::size_t i = 0; i < ar.size(); ++i) y += ar[i] * ybuf[i];
                for (std::size_t i = 0; i < ma.size(); ++i) y += ma[i] * ebuf[i];
                if (!ybuf.empty()) {
                    ybuf.pop_back();
                    ybuf.push_front(y);
                }
                if (!ebuf.empty()) {
                    ebuf.pop_back();
                    ebuf.push_front(e);
                }
                return y;
            };
            for (std::size_t t = 0; t < burn; ++t) step();
            for (std::size_t t = 0; t < n; ++t) x[t] += step();
            break;
        }
        default:
            throw invalid_input("add_component_path: not a temporal component");
    }
}

// Cholesky factors of spatial covariance matrices, cached per
// (dimensions, model values) since studies re-simulate the same field model.
class SpatialFactorCache {
public:
    static std::shared_ptr<Eigen::MatrixXd> get(const ModelSpec& m, std::size_t rows, std::size_t cols) {
        std::string key = make_key(m, rows, cols);
        static std::mutex mtx;
        static std::vector<std::pair<std::string, std::shared_ptr<Eigen::MatrixXd>>> cache;
        {
            std::lock_guard<std::mutex> lock(mtx);
            for (auto& [k, v] : cache)
                if (k == key) return v;
        }
        auto L = std::make_shared<Eigen::MatrixXd>(factor(m, rows, cols));
        std::lock_guard<std::mutex> lock(mtx);
        for (auto& [k, v] : cache)
            if (k == key) return v;
        if (cache.size() >= 4) cache.erase(cache.begin());
        cache.emplace_back(std::move(key), L);
        return cache.back().second;
    }

private:
    static std::string make_key(const ModelSpec& m, std::size_t rows, std::size_t cols) {
        std::ostringstream os;
        os << rows << "x" << cols << "|" << m.format();
        return os.str();
    }

    static Eigen::MatrixXd factor(const ModelSpec& m, std::size_t rows, std::size_t cols) {
        const std::size_t n = rows * cols;
        Eigen::MatrixXd sigma(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            const double ri = static_cast<double>(i / cols), ci = static_cast<double>(i % cols);
            for (std::size_t j = i; j < n; ++j) {
                const double rj = static_cast<double>(j / cols), cj = static_cast<double>(j % cols);
                const double d = std::hypot(ri - rj, ci - cj);
                double v = 0.0;
                for (const auto& c : m.components())
                    v += spatial_covariance(c.type, m.parameters()[c.offset].value,
                                            m.parameters()[c.offset + 1].value, d);
                sigma(static_cast<int>(i), static_cast<int>(j)) = v;
                sigma(static_cast<int>(j), static_cast<int>(i)) = v;
            }
        }
        // tiny jitter keeps smooth (Gaussian-covariance) fields factorizable
        Eigen::LLT<Eigen::MatrixXd> llt;
        double jitter = 0.0;
        for (int attempt = 0; attempt < 6; ++attempt) {
            Eigen::MatrixXd s = sigma;
            if (jitter > 0.0) s.diagonal().array() += jitter;
            llt.compute(s);
            if (llt.info() == Eigen::Success) return llt.matrixL();
            jitter = (jitter == 0.0) ? 1e-10 * sigma.diagonal().maxCoeff() : jitter * 100.0;
        }
        throw numerical_failure("spatial covariance matrix is not positive definite");
    }
};

} // namespace detail

// Exact recursive generation for temporal models; deterministic per seed,
// with one independent substream per component.
inline TimeSeries simulate(const ModelSpec& model, std::size_t n, std::uint64_t seed) {
    model.validate();
    if (model.spatial()) throw invalid_input("simulate: use the (rows, cols) overload for spatial models");
    if (n < 4) throw invalid_input("simulate: need at least 4 observations");
    std::vector<double> x(n, 0.0);
    for (std::size_t ci = 0; ci < model.components().size(); ++ci) {
        auto eng = make_engine(seed, ci + 1);
        detail::add_component_path(model, model.components()[ci], x, eng);
    }
    return TimeSeries(std::move(x));
}

// Exact covariance square-root simulation for spatial models; grids above
// 4096 cells are refused (documented size limit of the exact method).
inline LatticeField simulate(const ModelSpec& model, std::size_t rows, std::size_t cols,
                             std::uint64_t seed) {
    model.validate();
    if (!model.spatial()) throw invalid_input("simulate: use the (n) overload for temporal models");
    if (rows < 2 || cols < 2) throw invalid_input("simulate: lattice must be at least 2x2");
    if (rows * cols > 4096)
        throw size_limit_error("simulate: exact spatial simulation is limited to 4096 cells");
    auto L = detail::SpatialFactorCache::get(model, rows, cols);
    auto eng = make_engine(seed, 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(static_cast<int>(rows * cols));
    for (int i = 0; i < z.size(); ++i) z(i) = normal(eng);
    Eigen::VectorXd x = (*L) * z;
    return LatticeField(rows, cols, std::vector<double>(x.data(), x.data() + x.size()));
}

} // namespace rgmwm

#endif
