// Low-level numeric kernels shared by every other module: dense vector and
// matrix storage, stable reductions, nearest-rank percentiles, and a seedable
// deterministic random stream whose draw sequence is identical across
// platforms (the standard library engines are specified bit-for-bit, the
// distributions are not, so the transforms live here).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gcdg {

using Vec64 = std::vector<double>;

// Row-major dense matrix of 64-bit floats.
struct Mat64 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec64 values;

    Mat64() = default;
    Mat64(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), values(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

// Runtime numeric failure (divergence, underflow); distinct from usage and
// I/O errors so callers can map it to its own exit code.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require_same_dim(std::size_t a, std::size_t b, const std::string& where) {
    if (a != b) {
        throw std::invalid_argument(where + ": dimension mismatch (" + std::to_string(a) +
                                    " vs " + std::to_string(b) + ")");
    }
}

// log(sum_i exp(x_i)) via the max-shift form; safe for inputs up to ~1e308 in
// log-space since only differences are exponentiated.
inline double log_sum_exp(std::span<const double> xs) {
    require(!xs.empty(), "log_sum_exp: empty input");
    double m = *std::max_element(xs.begin(), xs.end());
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - m);
    return m + std::log(acc);
}

inline double log_sum_exp(const Vec64& xs) {
    return log_sum_exp(std::span<const double>(xs));
}

// Nearest-rank percentile: sorts a copy ascending and returns the element at
// 1-indexed rank ceil(q*n/100). Deterministic for ties. The small epsilon
// keeps an exactly-integral rank from drifting upward in floating point.
inline double percentile_nearest_rank(std::span<const double> xs, double q) {
    require(!xs.empty(), "percentile_nearest_rank: empty input");
    require(q > 0.0 && q < 100.0, "percentile_nearest_rank: q must be in (0,100)");
    Vec64 sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    const double raw = q * static_cast<double>(sorted.size()) / 100.0;
    auto rank = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

inline double percentile_nearest_rank(const Vec64& xs, double q) {
    return percentile_nearest_rank(std::span<const double>(xs), q);
}

// 1-indexed rank used by percentile_nearest_rank; exposed for mask building.
inline std::size_t nearest_rank(std::size_t n, double q) {
    require(q > 0.0 && q < 100.0, "nearest_rank: q must be in (0,100)");
    const double raw = q * static_cast<double>(n) / 100.0;
    auto rank = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    return std::clamp<std::size_t>(rank, 1, n);
}

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
}  // namespace detail

// Deterministic random stream. (seed, stream) pairs give independent
// sequences, so e.g. toggling the pairing stream does not perturb data
// generation. All draws go through explicitly coded transforms of the
// mt19937_64 output, which is fully specified by the standard; the sequence
// is therefore reproducible everywhere.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        std::uint64_t s = seed;
        std::uint64_t mixed = detail::splitmix64(s);
        s ^= (stream + 1) * 0x9E3779B97F4A7C15ULL;
        mixed ^= detail::splitmix64(s);
        gen_.seed(mixed);
    }

    // Uniform in [0,1), 53-bit resolution.
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller. The sine mate is discarded so the
    // stream state stays a pure function of the engine (serializable).
    double normal() {
        const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double gaussian(double mean, double std_dev) {
        require(std_dev >= 0.0, "gaussian: std must be non-negative");
        if (std_dev == 0.0) return mean;
        return mean + std_dev * normal();
    }

    // Uniform integer in [0, bound) by rejection; unbiased.
    std::uint64_t below(std::uint64_t bound) {
        require(bound > 0, "Rng::below: bound must be positive");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % bound;
    }

    // Fisher-Yates; std::shuffle's draw order is implementation-defined.
    template <class T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::swap(v[i], v[static_cast<std::size_t>(below(i + 1))]);
        }
    }

    std::string save_state() const {
        std::ostringstream os;
        os << gen_;
        return os.str();
    }

    void load_state(const std::string& text) {
        std::istringstream is(text);
        is >> gen_;
        if (is.fail()) throw std::runtime_error("Rng::load_state: malformed state text");
    }

    bool operator==(const Rng& other) const { return gen_ == other.gen_; }

  private:
    std::mt19937_64 gen_;
};

inline double gaussian_draw(Rng& rng, double mean, double std_dev) {
    return rng.gaussian(mean, std_dev);
}

// y += A x
inline void matvec_acc(const Mat64& a, std::span<const double> x, std::span<double> y) {
    require_same_dim(a.cols, x.size(), "matvec");
    require_same_dim(a.rows, y.size(), "matvec");
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* row = a.values.data() + r * a.cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < a.cols; ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
}

// y += A^T x
inline void matvec_transposed_acc(const Mat64& a, std::span<const double> x, std::span<double> y) {
    require_same_dim(a.rows, x.size(), "matvec_transposed");
    require_same_dim(a.cols, y.size(), "matvec_transposed");
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* row = a.values.data() + r * a.cols;
        const double xr = x[r];
        for (std::size_t c = 0; c < a.cols; ++c) y[c] += row[c] * xr;
    }
}

// A += alpha * u v^T
inline void outer_acc(Mat64& a, double alpha, std::span<const double> u, std::span<const double> v) {
    require_same_dim(a.rows, u.size(), "outer_acc");
    require_same_dim(a.cols, v.size(), "outer_acc");
    for (std::size_t r = 0; r < a.rows; ++r) {
        double* row = a.values.data() + r * a.cols;
        const double ur = alpha * u[r];
        for (std::size_t c = 0; c < a.cols; ++c) row[c] += ur * v[c];
    }
}

}  // namespace gcdg
