#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "rgmwm/models.hpp"
#include "rgmwm/rng.hpp"
#include "rgmwm/wavelet.hpp"
#include "rgmwm/wv.hpp"

using namespace rgmwm;

namespace {

double haar_tap(int j, long l) {
    const long tau = 1L << (j - 1);
    if (l < 0 || l >= 2 * tau) return 0.0;
    return (l < tau ? -1.0 : 1.0) / (2.0 * static_cast<double>(tau));
}

// literal double sum over the 1D filter taps
double wv_from_acf_oracle(const std::vector<double>& gamma, int j) {
    const long L = 1L << j;
    double acc = 0.0;
    for (long l = 0; l < L; ++l)
        for (long m = 0; m < L; ++m)
            acc += haar_tap(j, l) * haar_tap(j, m) * gamma[static_cast<std::size_t>(std::labs(l - m))];
    return acc;
}

double sample_mean(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double sample_var(const std::vector<double>& x) {
    double m = sample_mean(x), s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

double sample_acov(const std::vector<double>& x, std::size_t lag) {
    double m = sample_mean(x), s = 0.0;
    for (std::size_t t = lag; t < x.size(); ++t) s += (x[t] - m) * (x[t - lag] - m);
    return s / static_cast<double>(x.size());
}

} // namespace

TEST_CASE("theoretical_acf closed forms") {
    ModelSpec wn;
    wn.add_white_noise(2.0);
    auto g = theoretical_acf(wn, 5);
    CHECK(g[0] == 2.0);
    for (std::size_t h = 1; h <= 5; ++h) CHECK(g[h] == 0.0);

    ModelSpec ar;
    ar.add_ar1(0.9, 1.0);
    auto ga = theoretical_acf(ar, 3);
    CHECK(ga[0] == Catch::Approx(5.263157894736842).epsilon(1e-12));
    CHECK(ga[1] == Catch::Approx(0.9 * ga[0]).epsilon(1e-12));
    CHECK(ga[3] == Catch::Approx(std::pow(0.9, 3) * ga[0]).epsilon(1e-12));
}

TEST_CASE("AR(1) closed form equals the ARMA recursion route") {
    ModelSpec ar;
    ar.add_ar1(0.75, 1.3);
    ModelSpec arma;
    arma.add_arma({0.75}, {}, 1.3);
    auto g1 = theoretical_acf(ar, 30);
    auto g2 = theoretical_acf(arma, 30);
    for (std::size_t h = 0; h <= 30; ++h) CHECK(g1[h] == Catch::Approx(g2[h]).epsilon(1e-10));
}

TEST_CASE("ARMA(1,2) ACF matches a long simulation") {
    ModelSpec m;
    m.add_arma({0.5}, {-0.1, 0.5}, 1.0);
    const std::size_t n = 1'000'000;
    auto x = simulate(m, n, 2024);
    auto g = theoretical_acf(m, 5);
    for (std::size_t h = 0; h <= 5; ++h) {
        double se = std::sqrt(2.0 * g[0] * g[0] / static_cast<double>(n)) * 2.0;
        CHECK(std::abs(sample_acov(x.values(), h) - g[h]) < 3.0 * se);
    }
}

TEST_CASE("ACF input validation") {
    ModelSpec rw;
    rw.add_random_walk(1.0);
    CHECK_THROWS_AS(theoretical_acf(rw, 5), unsupported_for_acf);

    ModelSpec sp;
    sp.add_spatial_exp(2.0, 1.0);
    CHECK_THROWS_AS(theoretical_acf(sp, 5), invalid_input);

    ModelSpec bad;
    bad.add_arma({1.2}, {}, 1.0);  // explosive
    CHECK_THROWS_AS(theoretical_acf(bad, 5), invalid_input);
}

TEST_CASE("theoretical_wv_1d white-noise and additivity identities") {
    ModelSpec wn;
    wn.add_white_noise(1.0);
    auto nu = theoretical_wv_1d(wn, 8);
    for (int j = 1; j <= 8; ++j)
        CHECK(nu.nu[j - 1] == Catch::Approx(std::pow(2.0, -j)).epsilon(1e-13));

    ModelSpec ar0;
    ar0.add_ar1(0.0, 1.0);
    auto nu0 = theoretical_wv_1d(ar0, 6);
    for (int j = 0; j < 6; ++j) CHECK(nu0.nu[j] == Catch::Approx(nu.nu[j]).epsilon(1e-12));

    ModelSpec both;
    both.add_ar1(0.9, 1.0).add_white_noise(1.0);
    ModelSpec ar;
    ar.add_ar1(0.9, 1.0);
    auto nb = theoretical_wv_1d(both, 7);
    auto na = theoretical_wv_1d(ar, 7);
    auto nw = theoretical_wv_1d(wn, 7);
    for (int j = 0; j < 7; ++j)
        CHECK(nb.nu[j] == Catch::Approx(na.nu[j] + nw.nu[j]).epsilon(1e-13));
}

TEST_CASE("theoretical_wv_1d equals the literal tap-sum oracle") {
    ModelSpec m;
    m.add_arma({0.5}, {-0.1, 0.5}, 1.0);
    auto gamma = theoretical_acf(m, (1 << 5) - 1);
    auto nu = theoretical_wv_1d(m, 5);
    for (int j = 1; j <= 5; ++j)
        CHECK(nu.nu[j - 1] == Catch::Approx(wv_from_acf_oracle(gamma, j)).epsilon(1e-12));
}

TEST_CASE("random-walk WV closed form passes the cumulative-sum oracle") {
    // Haar-filtered random walk: weight of increment eps_{t-m} is the partial
    // tap sum, so Var(W_j) = g2 * sum_m (sum_{l<=m} h_l)^2.
    for (int j = 1; j <= 6; ++j) {
        const long L = 1L << j;
        double var = 0.0;
        for (long m = 0; m < L; ++m) {
            double cum = 0.0;
            for (long l = 0; l <= m; ++l) cum += haar_tap(j, l);
            var += cum * cum;
        }
        ModelSpec rw;
        rw.add_random_walk(1.7);
        auto nu = theoretical_wv_1d(rw, j);
        CHECK(nu.nu[static_cast<std::size_t>(j - 1)] == Catch::Approx(1.7 * var).epsilon(1e-12));
        // and the closed form itself
        double tau = static_cast<double>(1L << (j - 1));
        CHECK(1.7 * var == Catch::Approx(1.7 * (2.0 * tau * tau + 1.0) / (12.0 * tau)).epsilon(1e-12));
    }
    // simulation cross-check
    ModelSpec rw;
    rw.add_random_walk(1.0);
    auto x = simulate(rw, 1 << 15, 5);
    auto c = modwt_haar(x, 4);
    auto est = wv_classical(c);
    auto nu = theoretical_wv_1d(rw, 4);
    for (int j = 0; j < 4; ++j) {
        double se = nu.nu[j] * std::sqrt(8.0 / static_cast<double>(est.counts[j]) *
                                         static_cast<double>(haar_length(j + 1)));
        CHECK(std::abs(est.nu[j] - nu.nu[j]) < 3.0 * std::max(se, 0.02 * nu.nu[j]));
    }
}

TEST_CASE("theoretical_wv_2d white-noise limit and the quadruple-sum oracle") {
    ModelSpec tiny;
    tiny.add_spatial_exp(1e-9, 2.0);
    std::vector<ScalePair> pairs = {{1, 1}, {1, 2}, {2, 2}, {2, 3}};
    auto nu = theoretical_wv_2d(tiny, pairs);
    for (std::size_t p = 0; p < pairs.size(); ++p)
        CHECK(nu.nu[p] ==
              Catch::Approx(2.0 * std::pow(2.0, -pairs[p].j1 - pairs[p].j2)).epsilon(1e-10));

    // literal quadruple sum over both filters' taps
    for (bool gauss : {false, true}) {
        ModelSpec m;
        if (gauss)
            m.add_spatial_gauss(1.5, 0.8);
        else
            m.add_spatial_exp(2.0, 1.0);
        auto cov = [&](double d) {
            return gauss ? 0.8 * std::exp(-(d / 1.5) * (d / 1.5)) : std::exp(-d / 2.0);
        };
        for (const auto& pr : {ScalePair{1, 1}, ScalePair{1, 2}, ScalePair{2, 2}}) {
            const long L1 = 1L << pr.j1, L2 = 1L << pr.j2;
            double acc = 0.0;
            for (long u = 0; u < L1; ++u)
                for (long v = 0; v < L2; ++v)
                    for (long up = 0; up < L1; ++up)
                        for (long vp = 0; vp < L2; ++vp)
                            acc += haar_tap(pr.j1, u) * haar_tap(pr.j2, v) * haar_tap(pr.j1, up) *
                                   haar_tap(pr.j2, vp) *
                                   cov(std::hypot(static_cast<double>(u - up),
                                                  static_cast<double>(v - vp)));
            auto one = theoretical_wv_2d(m, {pr});
            CHECK(one.nu[0] == Catch::Approx(acc).epsilon(1e-11));
        }
    }
}

TEST_CASE("theoretical_wv_2d isotropy and validation") {
    ModelSpec m;
    m.add_spatial_exp(2.0, 1.0);
    auto a = theoretical_wv_2d(m, {{1, 3}});
    auto b = theoretical_wv_2d(m, {{3, 1}});
    CHECK(a.nu[0] == Catch::Approx(b.nu[0]).epsilon(1e-14));

    ModelSpec deg;
    deg.add_spatial_exp(2.0, 0.0);  // sigma^2 at the open bound
    CHECK_THROWS_AS(theoretical_wv_2d(deg, {{1, 1}}), invalid_input);

    ModelSpec temporal;
    temporal.add_ar1(0.5, 1.0);
    CHECK_THROWS_AS(theoretical_wv_2d(temporal, {{1, 1}}), invalid_input);
    CHECK_THROWS_AS(theoretical_wv_1d(m, 3), invalid_input);
}

TEST_CASE("spatial theoretical WV matches simulated fields") {
    ModelSpec m;
    m.add_spatial_exp(2.0, 1.0);
    auto pairs = max_scale_pairs_2d(32, 32);
    pairs.resize(6);
    auto nu = theoretical_wv_2d(m, pairs);
    const int reps = 100;
    std::vector<std::vector<double>> draws(pairs.size());
    for (int r = 0; r < reps; ++r) {
        auto f = simulate(m, 32, 32, 9000 + static_cast<std::uint64_t>(r));
        auto c = modwt2d_haar(f, pairs);
        auto est = wv_classical(c);
        for (std::size_t p = 0; p < pairs.size(); ++p) draws[p].push_back(est.nu[p]);
    }
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        double mean = sample_mean(draws[p]);
        double se = std::sqrt(sample_var(draws[p]) / reps);
        INFO("pair " << pairs[p].j1 << "," << pairs[p].j2 << " mean " << mean << " theor " << nu.nu[p]);
        CHECK(std::abs(mean - nu.nu[p]) < 3.0 * se);
    }
}

TEST_CASE("wv_jacobian: white-noise column is the exact scale profile") {
    auto wn = ModelSpec::parse("wn(s2=?)");
    wn.set_free_values({1.3});
    auto D = wv_jacobian_1d(wn, 6);
    REQUIRE(D.rows() == 6);
    REQUIRE(D.cols() == 1);
    for (int j = 1; j <= 6; ++j)
        CHECK(D(j - 1, 0) == Catch::Approx(std::pow(2.0, -j)).epsilon(1e-7));
}

TEST_CASE("wv_jacobian matches a Richardson-extrapolated oracle") {
    auto ar = ModelSpec::parse("ar1(rho=?,v2=?)");
    ar.set_free_values({0.8, 1.5});
    const int J = 6;
    auto D = wv_jacobian_1d(ar, J);
    for (int k = 0; k < 2; ++k) {
        const double h = 1e-4;
        auto eval = [&](double delta) {
            ModelSpec m = ar;
            auto th = m.free_values();
            th[static_cast<std::size_t>(k)] += delta;
            m.set_free_values(th);
            return theoretical_wv_1d(m, J).nu;
        };
        auto p1 = eval(h), m1 = eval(-h), p2 = eval(2 * h), m2 = eval(-2 * h);
        for (int j = 0; j < J; ++j) {
            double rich = (8.0 * (p1[j] - m1[j]) - (p2[j] - m2[j])) / (12.0 * h);
            CHECK(D(j, k) == Catch::Approx(rich).epsilon(1e-4));
        }
    }
    for (int j = 0; j < J; ++j) CHECK(D.row(j).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("simulate: white-noise variance and AR(1) autocorrelation") {
    ModelSpec wn;
    wn.add_white_noise(1.0);
    auto x = simulate(wn, 100'000, 3);
    CHECK(sample_var(x.values()) > 0.98);
    CHECK(sample_var(x.values()) < 1.02);

    ModelSpec ar;
    ar.add_ar1(0.9, 1.0);
    auto y = simulate(ar, 100'000, 4);
    double r1 = sample_acov(y.values(), 1) / sample_acov(y.values(), 0);
    CHECK(r1 > 0.89);
    CHECK(r1 < 0.91);
}

TEST_CASE("simulate is bitwise deterministic per seed") {
    ModelSpec m;
    m.add_ar1(0.99, 0.1).add_ar1(0.6, 2.0).add_white_noise(3.0);
    auto a = simulate(m, 512, 42);
    auto b = simulate(m, 512, 42);
    REQUIRE(a.values() == b.values());
    auto c = simulate(m, 512, 43);
    CHECK(a.values() != c.values());

    ModelSpec sp;
    sp.add_spatial_gauss(1.0, 1.0);
    auto f1 = simulate(sp, 16, 16, 7);
    auto f2 = simulate(sp, 16, 16, 7);
    CHECK(f1.values() == f2.values());
}

TEST_CASE("latent sum: simulated WV of the state-space model matches theory") {
    ModelSpec ssm;
    ssm.add_ar1(0.99, 0.1).add_ar1(0.6, 2.0).add_white_noise(3.0);
    const std::size_t n = 1 << 15;
    auto x = simulate(ssm, n, 77);
    auto coeffs = modwt_haar(x, 8);
    auto est = wv_classical(coeffs);
    auto theor = theoretical_wv_1d(ssm, 8);
    for (int j = 0; j < 8; ++j) {
        double L = static_cast<double>(haar_length(j + 1));
        double se = theor.nu[j] * std::sqrt(6.0 * L / static_cast<double>(est.counts[j]));
        INFO("scale " << (j + 1));
        CHECK(std::abs(est.nu[j] - theor.nu[j]) < 3.0 * std::max(se, 0.03 * theor.nu[j]));
    }
}

TEST_CASE("spatial simulation validates its limits") {
    ModelSpec sp;
    sp.add_spatial_exp(2.0, 1.0);
    CHECK_THROWS_AS(simulate(sp, 65, 65, 1), size_limit_error);
    CHECK_NOTHROW(simulate(sp, 8, 8, 1));
    CHECK_THROWS_AS(simulate(sp, 1000, 1), invalid_input);

    ModelSpec t;
    t.add_ar1(0.5, 1.0);
    CHECK_THROWS_AS(simulate(t, 8, 8, 1), invalid_input);
}

TEST_CASE("parameter transforms round-trip to 1e-12") {
    ModelSpec m;
    m.add_arma({0.5, -0.2}, {0.3}, 1.0);
    m.add_ar1(0.7, 2.0);
    auto bounds = m.free_bounds();
    auto eng = make_engine(5150);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int rep = 0; rep < 1000; ++rep) {
        std::vector<double> theta(bounds.size());
        for (std::size_t i = 0; i < bounds.size(); ++i) {
            double lo = bounds[i].first, hi = bounds[i].second;
            if (std::isfinite(hi))
                theta[i] = lo + (hi - lo) * (0.001 + 0.998 * unif(eng));
            else
                theta[i] = std::exp(8.0 * (unif(eng) - 0.5));
        }
        auto u = m.free_to_unbounded(theta);
        auto back = m.free_to_natural(u);
        for (std::size_t i = 0; i < theta.size(); ++i)
            CHECK(back[i] == Catch::Approx(theta[i]).epsilon(1e-12).margin(1e-12));
    }
    CHECK(param_to_unbounded(0.2, -1.0, 1.0) < param_to_unbounded(0.3, -1.0, 1.0));
    CHECK(param_to_unbounded(1.0, 0.0, std::numeric_limits<double>::infinity()) <
          param_to_unbounded(2.0, 0.0, std::numeric_limits<double>::infinity()));
}

TEST_CASE("ACF Toeplitz matrices are positive semi-definite") {
    auto eng = make_engine(31337);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int lags = 50;
    for (int rep = 0; rep < 100; ++rep) {
        ModelSpec m;
        if (rep % 2 == 0) {
            m.add_ar1(-0.98 + 1.96 * unif(eng), 0.1 + 3.0 * unif(eng));
        } else {
            // stationary-by-construction AR(2) via partial autocorrelations
            double k1 = -0.95 + 1.9 * unif(eng), k2 = -0.95 + 1.9 * unif(eng);
            double a2 = k2, a1 = k1 * (1.0 - k2);
            m.add_arma({a1, a2}, {0.6 * (unif(eng) - 0.5)}, 0.5 + unif(eng));
        }
        auto g = theoretical_acf(m, lags);
        Eigen::MatrixXd T(lags + 1, lags + 1);
        for (int i = 0; i <= lags; ++i)
            for (int j = 0; j <= lags; ++j) T(i, j) = g[static_cast<std::size_t>(std::abs(i - j))];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
        CHECK(es.eigenvalues().minCoeff() >= -1e-8 * es.eigenvalues().maxCoeff());
    }
}

TEST_CASE("model mini-language parses and formats") {
    auto m = ModelSpec::parse("sum(ar1(rho=?,v2=?),wn(s2=?))");
    CHECK(m.components().size() == 2);
    CHECK(m.n_free() == 3);
    CHECK(m.free_names() == std::vector<std::string>{"1.ar1.rho", "1.ar1.v2", "2.wn.s2"});

    auto fixed = ModelSpec::parse("ar1(rho=0.9,v2=1)");
    CHECK(fixed.n_free() == 0);
    CHECK(fixed.fully_specified());
    CHECK(fixed.parameters()[0].value == 0.9);

    auto arma = ModelSpec::parse("arma(rho1=0.5,ma1=-0.1,ma2=0.5,s2=1)");
    CHECK(arma.components()[0].p == 1);
    CHECK(arma.components()[0].q == 2);

    auto mixed = ModelSpec::parse("ar1(rho=?,v2=2.5)");
    CHECK(mixed.n_free() == 1);
    CHECK(mixed.parameters()[1].value == 2.5);

    auto sp = ModelSpec::parse("exp(phi=2,s2=1)");
    CHECK(sp.spatial());

    ModelSpec ssm;
    ssm.add_ar1(0.99, 0.1).add_ar1(0.6, 2.0).add_white_noise(3.0);
    auto round = ModelSpec::parse(ssm.format());
    CHECK(round.format() == ssm.format());

    CHECK_THROWS_AS(ModelSpec::parse("foo(a=1)"), parse_error);
    CHECK_THROWS_AS(ModelSpec::parse("ar1(rho=0.5)"), parse_error);
    CHECK_THROWS_AS(ModelSpec::parse("wn(s2=1)junk"), parse_error);
    CHECK_THROWS_AS(ModelSpec::parse("sum(wn(s2=1),exp(phi=1,s2=1))"), parse_error);
    CHECK_THROWS_AS(ModelSpec::parse("ar1(rho=abc,v2=1)"), parse_error);
}
