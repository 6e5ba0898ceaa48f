#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "rgmwm/rng.hpp"
#include "rgmwm/wavelet.hpp"

using namespace rgmwm;

namespace {

// Independent oracle: literal convolution with the written-out filter taps.
double haar_tap(int j, long l) {
    const long tau = 1L << (j - 1);
    if (l < 0 || l >= 2 * tau) return 0.0;
    return (l < tau ? -1.0 : 1.0) / (2.0 * static_cast<double>(tau));
}

std::vector<double> direct_haar(const std::vector<double>& x, int j) {
    const long tau = 1L << (j - 1), L = 2 * tau;
    std::vector<double> w;
    for (std::size_t t = static_cast<std::size_t>(L) - 1; t < x.size(); ++t) {
        double acc = 0.0;
        for (long l = 0; l < L; ++l) acc += haar_tap(j, l) * x[t - static_cast<std::size_t>(l)];
        w.push_back(acc);
    }
    return w;
}

double direct_haar_2d_at(const LatticeField& f, int j1, int j2, std::size_t r, std::size_t c) {
    const long L1 = 1L << j1, L2 = 1L << j2;
    double acc = 0.0;
    for (long u = 0; u < L1; ++u)
        for (long v = 0; v < L2; ++v)
            acc += haar_tap(j1, u) * haar_tap(j2, v) *
                   f.at(r - static_cast<std::size_t>(u), c - static_cast<std::size_t>(v));
    return acc;
}

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
    auto eng = make_engine(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> x(n);
    for (auto& v : x) v = normal(eng);
    return x;
}

} // namespace

TEST_CASE("max_scales_1d matches the documented scale budget") {
    CHECK(max_scales_1d(1000) == 9);
    CHECK(max_scales_1d(16) == 3);
    CHECK(max_scales_1d(4) == 1);
    CHECK(max_scales_1d(5) == 2);
    CHECK(max_scales_1d(1024) == 9);
    CHECK(max_scales_1d(1025) == 10);
    CHECK_THROWS_AS(max_scales_1d(3), invalid_input);
}

TEST_CASE("max_scale_pairs_2d enumerates the lower-triangular pairs") {
    auto p30 = max_scale_pairs_2d(30, 30);
    CHECK(p30.size() == 10);
    CHECK(p30.front() == ScalePair{1, 1});
    CHECK(p30.back() == ScalePair{4, 4});

    auto p2 = max_scale_pairs_2d(2, 2);
    REQUIRE(p2.size() == 1);
    CHECK(p2[0] == ScalePair{1, 1});

    CHECK(max_scale_pairs_2d(16, 16).size() == 10);
    CHECK(max_scale_pairs_2d(30, 64).size() == 10);  // limited by the smaller side
    CHECK_THROWS_AS(max_scale_pairs_2d(1, 10), invalid_input);
}

TEST_CASE("modwt_haar hand-computed examples") {
    auto cst = modwt_haar(TimeSeries({5, 5, 5, 5}), 1);
    REQUIRE(cst.at_scale(1).size() == 3);
    for (double w : cst.at_scale(1)) CHECK(w == 0.0);

    auto alt = modwt_haar(TimeSeries({1, -1, 1, -1}), 1);
    REQUIRE(alt.at_scale(1) == std::vector<double>{1, -1, 1});

    // linear ramp: every scale-j coefficient equals -tau_j/2
    std::vector<double> ramp(64);
    for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
    auto wr = modwt_haar(TimeSeries(ramp), 4);
    for (int j = 1; j <= 4; ++j) {
        const double expect = -static_cast<double>(haar_tau(j)) / 2.0;
        for (double w : wr.at_scale(j)) CHECK(w == Catch::Approx(expect).margin(1e-12));
    }
}

TEST_CASE("modwt_haar agrees with the direct convolution oracle") {
    auto x = gaussian(97, 42);
    auto coeffs = modwt_haar(TimeSeries(x), max_scales_1d(x.size()));
    for (int j = 1; j <= coeffs.num_scales(); ++j) {
        auto oracle = direct_haar(x, j);
        REQUIRE(coeffs.at_scale(j).size() == oracle.size());
        for (std::size_t i = 0; i < oracle.size(); ++i)
            CHECK(coeffs.at_scale(j)[i] == Catch::Approx(oracle[i]).margin(1e-12));
    }
}

TEST_CASE("coefficient counts match M_j = N - L_j + 1 for all N in 4..64") {
    for (std::size_t n = 4; n <= 64; ++n) {
        auto x = gaussian(n, 1000 + n);
        int J = max_scales_1d(n);
        auto coeffs = modwt_haar(TimeSeries(x), J);
        for (int j = 1; j <= J; ++j) {
            REQUIRE(coeffs.count(j) == n - static_cast<std::size_t>(haar_length(j)) + 1);
            REQUIRE(coeffs.count(j) >= 2);
        }
        if (J > 1) REQUIRE(coeffs.count(J) < coeffs.count(J - 1));
        CHECK(coeffs.min_count() == coeffs.count(J));
    }
}

TEST_CASE("shift covariance: interior coefficients are bitwise identical") {
    auto x = gaussian(80, 7);
    const std::size_t shift = 5;
    std::vector<double> xs(x.begin() + shift, x.end());
    auto full = modwt_haar(TimeSeries(x), 4);
    auto part = modwt_haar(TimeSeries(xs), 4);
    for (int j = 1; j <= 4; ++j) {
        const auto& wf = full.at_scale(j);
        const auto& wp = part.at_scale(j);
        for (std::size_t i = 0; i < wp.size(); ++i) REQUIRE(wp[i] == wf[i + shift]);
    }
}

TEST_CASE("adding a constant annihilates, scaling is equivariant") {
    // dyadic-rational data keeps double arithmetic exact, so equality is exact
    auto eng = make_engine(11);
    std::uniform_int_distribution<int> grid(-4096, 4096);
    std::vector<double> x(50), xc(50), x4(50);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = grid(eng) / 1024.0;
        xc[i] = x[i] + 3.0;
        x4[i] = 4.0 * x[i];
    }
    auto w = modwt_haar(TimeSeries(x), 3);
    auto wc = modwt_haar(TimeSeries(xc), 3);
    auto w4 = modwt_haar(TimeSeries(x4), 3);
    for (int j = 1; j <= 3; ++j)
        for (std::size_t i = 0; i < w.at_scale(j).size(); ++i) {
            REQUIRE(wc.at_scale(j)[i] == w.at_scale(j)[i]);
            REQUIRE(w4.at_scale(j)[i] == 4.0 * w.at_scale(j)[i]);
        }

    // general inputs: same invariances up to roundoff
    auto y = gaussian(60, 13);
    std::vector<double> yc(y), ys(y);
    for (auto& v : yc) v += 17.25;
    for (auto& v : ys) v *= 3.7;
    auto wy = modwt_haar(TimeSeries(y), 3);
    auto wyc = modwt_haar(TimeSeries(yc), 3);
    auto wys = modwt_haar(TimeSeries(ys), 3);
    for (int j = 1; j <= 3; ++j)
        for (std::size_t i = 0; i < wy.at_scale(j).size(); ++i) {
            CHECK(wyc.at_scale(j)[i] == Catch::Approx(wy.at_scale(j)[i]).margin(1e-12));
            CHECK(wys.at_scale(j)[i] == Catch::Approx(3.7 * wy.at_scale(j)[i]).margin(1e-12));
        }
}

TEST_CASE("modwt_haar rejects too many levels") {
    auto x = gaussian(16, 3);
    CHECK_THROWS_AS(modwt_haar(TimeSeries(x), 4), invalid_input);
    CHECK_NOTHROW(modwt_haar(TimeSeries(x), 3));
}

TEST_CASE("modwt2d_haar: constant and checkerboard fields") {
    std::vector<double> cst(36, 2.5);
    auto wc = modwt2d_haar(LatticeField(6, 6, cst), {{1, 1}, {1, 2}, {2, 2}});
    for (const auto& blk : wc.blocks)
        for (double v : blk.v) CHECK(v == 0.0);

    std::vector<double> chk(64);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c) chk[r * 8 + c] = ((r + c) % 2 == 0) ? 1.0 : -1.0;
    auto wk = modwt2d_haar(LatticeField(8, 8, chk), {{1, 1}});
    REQUIRE(wk.blocks[0].rows == 7);
    REQUIRE(wk.blocks[0].cols == 7);
    for (double v : wk.blocks[0].v) CHECK(std::abs(v) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("modwt2d_haar agrees with the tensor-tap oracle on small fields") {
    auto vals = gaussian(64, 21);
    LatticeField f(8, 8, vals);
    auto pairs = max_scale_pairs_2d(8, 8);
    auto w = modwt2d_haar(f, pairs);
    for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
        const auto& blk = w.blocks[pi];
        const long L1 = haar_length(pairs[pi].j1), L2 = haar_length(pairs[pi].j2);
        REQUIRE(blk.rows == 8 - static_cast<std::size_t>(L1) + 1);
        REQUIRE(blk.cols == 8 - static_cast<std::size_t>(L2) + 1);
        for (std::size_t r = 0; r < blk.rows; ++r)
            for (std::size_t c = 0; c < blk.cols; ++c) {
                double oracle = direct_haar_2d_at(f, pairs[pi].j1, pairs[pi].j2,
                                                  r + static_cast<std::size_t>(L1) - 1,
                                                  c + static_cast<std::size_t>(L2) - 1);
                REQUIRE(blk.at(r, c) == Catch::Approx(oracle).margin(1e-12));
            }
    }
}

TEST_CASE("modwt2d_haar rejects invalid pairs") {
    auto vals = gaussian(36, 5);
    LatticeField f(6, 6, vals);
    CHECK_THROWS_AS(modwt2d_haar(f, {{2, 1}}), invalid_input);  // j2 < j1
    CHECK_THROWS_AS(modwt2d_haar(f, {{1, 3}}), invalid_input);  // beyond Jmax=2
}

TEST_CASE("scale-(1,1) white-noise coefficient variance is near 1/4") {
    // sum of squared 2D taps at (1,1) is 1/4; oracle check plus a Monte Carlo run
    double tapsum = 0.0;
    for (long u = 0; u < 2; ++u)
        for (long v = 0; v < 2; ++v) tapsum += haar_tap(1, u) * haar_tap(1, u) * haar_tap(1, v) * haar_tap(1, v);
    // direct 2D tap-square sum
    double s2 = 0.0;
    for (long u = 0; u < 2; ++u)
        for (long v = 0; v < 2; ++v) {
            double t = haar_tap(1, u) * haar_tap(1, v);
            s2 += t * t;
        }
    CHECK(s2 == Catch::Approx(0.25).epsilon(1e-14));

    auto vals = gaussian(900, 99);
    auto w = modwt2d_haar(LatticeField(30, 30, vals), {{1, 1}});
    double mean = 0.0, var = 0.0;
    for (double v : w.blocks[0].v) mean += v;
    mean /= static_cast<double>(w.blocks[0].v.size());
    for (double v : w.blocks[0].v) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.blocks[0].v.size() - 1);
    CHECK(var == Catch::Approx(0.25).margin(0.05));  // ~3 Monte Carlo SEs
    (void)tapsum;
}

TEST_CASE("haar_filter_autocorr closed form matches brute force") {
    for (int j = 1; j <= 5; ++j) {
        const long L = haar_length(j);
        for (long k = 0; k <= L; ++k) {
            double brute = 0.0;
            for (long l = 0; l + k < L; ++l) brute += haar_tap(j, l) * haar_tap(j, l + k);
            CHECK(haar_filter_autocorr(j, k) == Catch::Approx(brute).margin(1e-15));
        }
    }
}
