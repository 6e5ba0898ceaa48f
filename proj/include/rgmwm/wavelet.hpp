#ifndef RGMWM_WAVELET_HPP
#define RGMWM_WAVELET_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rgmwm/errors.hpp"

namespace rgmwm {

// Haar MODWT conventions used throughout:
//   tau_j = 2^(j-1), filter length L_j = 2 tau_j,
//   W_{j,t} = (1/(2 tau_j)) [ sum_{l=tau_j}^{2tau_j-1} x_{t-l}
//                           - sum_{l=0}^{tau_j-1}     x_{t-l} ],
//   t = L_j-1 .. N-1, so only boundary-free coefficients are kept and each
//   scale yields M_j = N - L_j + 1 coefficients.  With this normalization the
//   wavelet variance of white noise sigma^2 is sigma^2 / 2^j.
//
// Block sums are built by dyadic doubling, so every coefficient is a fixed
// expression tree over its own window and interior coefficients are bitwise
// invariant under shifts of the input.

class TimeSeries {
public:
    explicit TimeSeries(std::vector<double> values) : values_(std::move(values)) {
        if (values_.size() < 4)
            throw invalid_input("time series needs at least 4 observations");
        for (double v : values_)
            if (!std::isfinite(v)) throw invalid_input("time series contains a non-finite value");
    }

    const std::vector<double>& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }

private:
    std::vector<double> values_;
};

// Row-major K x M grid.
class LatticeField {
public:
    LatticeField(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), values_(std::move(values)) {
        if (rows_ < 2 || cols_ < 2) throw invalid_input("lattice field needs at least 2x2 cells");
        if (values_.size() != rows_ * cols_)
            throw invalid_input("lattice field data size does not match its dimensions");
        for (double v : values_)
            if (!std::isfinite(v)) throw invalid_input("lattice field contains a non-finite value");
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }

private:
    std::size_t rows_, cols_;
    std::vector<double> values_;
};

// Scale label shared by 1D (j2 == 0) and 2D (1 <= j1 <= j2) estimates.
struct ScaleLabel {
    int j1 = 0;
    int j2 = 0;
    bool is_pair() const noexcept { return j2 > 0; }
    std::string str() const {
        if (is_pair()) return "(" + std::to_string(j1) + "," + std::to_string(j2) + ")";
        return std::to_string(j1);
    }
    friend bool operator==(const ScaleLabel& a, const ScaleLabel& b) {
        return a.j1 == b.j1 && a.j2 == b.j2;
    }
};

struct ScalePair {
    int j1 = 1;
    int j2 = 1;
    friend bool operator==(const ScalePair& a, const ScalePair& b) {
        return a.j1 == b.j1 && a.j2 == b.j2;
    }
};

inline long haar_tau(int j) { return 1L << (j - 1); }
inline long haar_length(int j) { return 1L << j; }

// Largest number of scales with at least two boundary-free coefficients:
// the largest j with 2^j < N.  Delivers J = 9 for N = 1000.
inline int max_scales_1d(std::size_t n) {
    if (n < 4) throw invalid_input("max_scales_1d: series length must be at least 4");
    int j = 0;
    while ((1ULL << (j + 1)) < n) ++j;
    return j;
}

inline int max_scale_2d(std::size_t rows, std::size_t cols) {
    if (rows < 2 || cols < 2) throw invalid_input("max_scale_pairs_2d: dimensions must be at least 2");
    std::size_t m = std::min(rows, cols);
    int j = 0;
    while ((1ULL << (j + 1)) <= m) ++j;
    return j;  // floor(log2(min(K,M)))
}

// All isotropic pairs (j1, j2), 1 <= j1 <= j2 <= floor(log2(min(K,M))).
inline std::vector<ScalePair> max_scale_pairs_2d(std::size_t rows, std::size_t cols) {
    int jmax = max_scale_2d(rows, cols);
    std::vector<ScalePair> pairs;
    pairs.reserve(static_cast<std::size_t>(jmax) * (jmax + 1) / 2);
    for (int j1 = 1; j1 <= jmax; ++j1)
        for (int j2 = j1; j2 <= jmax; ++j2) pairs.push_back({j1, j2});
    return pairs;
}

struct WaveletCoefficients1D {
    std::size_t n = 0;                        // original series length
    std::vector<std::vector<double>> levels;  // levels[j-1], length N - 2^j + 1

    int num_scales() const noexcept { return static_cast<int>(levels.size()); }
    const std::vector<double>& at_scale(int j) const { return levels.at(static_cast<std::size_t>(j - 1)); }
    std::size_t count(int j) const { return at_scale(j).size(); }
    std::size_t min_count() const {
        std::size_t m = levels.empty() ? 0 : levels.back().size();
        for (const auto& l : levels) m = std::min(m, l.size());
        return m;
    }
};

struct WaveletCoefficients2D {
    std::size_t field_rows = 0, field_cols = 0;
    std::vector<ScalePair> pairs;
    struct Block {
        std::size_t rows = 0, cols = 0;
        std::vector<double> v;  // row-major
        double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    };
    std::vector<Block> blocks;

    std::size_t min_count() const {
        std::size_t m = blocks.empty() ? 0 : blocks.front().v.size();
        for (const auto& b : blocks) m = std::min(m, b.v.size());
        return m;
    }
};

namespace detail {

// In-place dyadic doubling of strided block sums: on entry s holds sums of
// block length tau ending at each position, on exit of length 2 tau.
// Descending order keeps the untouched half available.
inline void double_blocks_strided(double* s, std::size_t count, std::size_t stride, long tau) {
    for (std::size_t t = count; t-- > static_cast<std::size_t>(2 * tau) - 1;)
        s[t * stride] += s[(t - static_cast<std::size_t>(tau)) * stride];
}

// Haar coefficients from block sums of length tau: w = (older - recent)/(2 tau).
inline void haar_from_blocks_strided(const double* s, std::size_t count, std::size_t stride, long tau,
                                     double* out, std::size_t out_stride) {
    const std::size_t L = static_cast<std::size_t>(2 * tau);
    const double norm = 1.0 / (2.0 * static_cast<double>(tau));
    for (std::size_t t = L - 1; t < count; ++t)
        out[(t - (L - 1)) * out_stride] =
            norm * (s[(t - static_cast<std::size_t>(tau)) * stride] - s[t * stride]);
}

} // namespace detail

inline WaveletCoefficients1D modwt_haar(const TimeSeries& series, int levels) {
    const std::size_t n = series.size();
    if (levels < 1) throw invalid_input("modwt_haar: need at least one level");
    if (levels > max_scales_1d(n))
        throw invalid_input("modwt_haar: " + std::to_string(levels) + " levels exceed the maximum " +
                            std::to_string(max_scales_1d(n)) + " for N=" + std::to_string(n));
    WaveletCoefficients1D out;
    out.n = n;
    out.levels.resize(static_cast<std::size_t>(levels));
    std::vector<double> blocks = series.values();  // block sums of length tau_j
    for (int j = 1; j <= levels; ++j) {
        const long tau = haar_tau(j);
        if (j > 1) detail::double_blocks_strided(blocks.data(), n, 1, tau / 2);
        auto& w = out.levels[static_cast<std::size_t>(j - 1)];
        w.assign(n - static_cast<std::size_t>(haar_length(j)) + 1, 0.0);
        detail::haar_from_blocks_strided(blocks.data(), n, 1, tau, w.data(), 1);
    }
    return out;
}

// Separable wavelet x wavelet transform: scale j1 down the rows (K direction)
// then scale j2 along the columns (M direction).
inline WaveletCoefficients2D modwt2d_haar(const LatticeField& field,
                                          const std::vector<ScalePair>& pairs) {
    const std::size_t K = field.rows(), M = field.cols();
    const int jmax = max_scale_2d(K, M);
    for (const auto& p : pairs) {
        if (p.j1 < 1 || p.j2 < p.j1 || p.j2 > jmax)
            throw invalid_input("modwt2d_haar: invalid scale pair (" + std::to_string(p.j1) + "," +
                                std::to_string(p.j2) + ") for a " + std::to_string(K) + "x" +
                                std::to_string(M) + " field");
    }
    WaveletCoefficients2D out;
    out.field_rows = K;
    out.field_cols = M;
    out.pairs = pairs;
    out.blocks.resize(pairs.size());

    int last_j1 = -1;
    std::vector<double> rowpass;  // coefficients of the row-direction pass
    std::size_t rp_rows = 0;
    for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
        const int j1 = pairs[pi].j1, j2 = pairs[pi].j2;
        if (j1 != last_j1) {
            const long tau1 = haar_tau(j1);
            std::vector<double> blocks = field.values();
            for (long t = 2; t <= tau1; t *= 2)
                for (std::size_t c = 0; c < M; ++c)
                    detail::double_blocks_strided(blocks.data() + c, K, M, t / 2);
            rp_rows = K - static_cast<std::size_t>(haar_length(j1)) + 1;
            rowpass.assign(rp_rows * M, 0.0);
            for (std::size_t c = 0; c < M; ++c)
                detail::haar_from_blocks_strided(blocks.data() + c, K, M, tau1, rowpass.data() + c, M);
            last_j1 = j1;
        }
        const long tau2 = haar_tau(j2);
        std::vector<double> colblocks = rowpass;
        for (long t = 2; t <= tau2; t *= 2)
            for (std::size_t r = 0; r < rp_rows; ++r)
                detail::double_blocks_strided(colblocks.data() + r * M, M, 1, t / 2);
        auto& blk = out.blocks[pi];
        blk.rows = rp_rows;
        blk.cols = M - static_cast<std::size_t>(haar_length(j2)) + 1;
        blk.v.assign(blk.rows * blk.cols, 0.0);
        for (std::size_t r = 0; r < rp_rows; ++r)
            detail::haar_from_blocks_strided(colblocks.data() + r * M, M, 1, tau2,
                                             blk.v.data() + r * blk.cols, 1);
    }
    return out;
}

// Autocorrelation of the level-j Haar filter, rho_h(k) = sum_l h_l h_{l+|k|};
// closed form, nonzero for |k| <= L_j - 1.  rho_h(0) = 2^-j.
inline double haar_filter_autocorr(int j, long k) {
    const long tau = haar_tau(j);
    k = std::labs(k);
    if (k >= 2 * tau) return 0.0;
    const double a2 = 1.0 / (4.0 * static_cast<double>(tau) * static_cast<double>(tau));
    if (k <= tau) return a2 * static_cast<double>(2 * tau - 3 * k);
    return -a2 * static_cast<double>(2 * tau - k);
}

} // namespace rgmwm

#endif
