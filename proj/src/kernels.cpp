#include "coa/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include "coa/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace coa::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::Parallel};
std::atomic<int> g_threads{0};

inline double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Box-Muller from two counter-based uniforms; element i is independent of
// every other element, so threading cannot change the stream.
inline double gaussian_at(uint64_t seed, uint64_t index) {
    const uint64_t h1 = splitmix64(splitmix64(seed) ^ (2 * index + 1));
    const uint64_t h2 = splitmix64(splitmix64(seed) ^ (2 * index + 2));
    const double u1 = std::max(unit_double(h1), 0x1.0p-60);
    const double u2 = unit_double(h2);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

Backend active_backend() { return g_backend.load(); }
void set_backend(Backend b) { g_backend.store(b); }
int parallel_threads() { return g_threads.load(); }
void set_parallel_threads(int n) { g_threads.store(n < 0 ? 0 : n); }

bool openmp_compiled() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

namespace serial {

void add_clamp01(std::span<const double> image, std::span<const double> delta,
                 std::span<double> out) {
    for (std::size_t i = 0; i < image.size(); ++i)
        out[i] = clamp01(image[i] + delta[i]);
}

void clamp_box(std::span<const double> values, double bound, std::span<double> out) {
    for (std::size_t i = 0; i < values.size(); ++i)
        out[i] = std::min(bound, std::max(-bound, values[i]));
}

void sign_step_clamp(std::span<const double> delta, std::span<const double> grad,
                     double eta, double bound, std::span<double> out) {
    for (std::size_t i = 0; i < delta.size(); ++i) {
        const double s = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
        out[i] = std::min(bound, std::max(-bound, delta[i] + eta * s));
    }
}

void uniform_fill(std::span<double> out, double lo, double hi, uint64_t seed) {
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = uniform_at(seed, i, lo, hi);
}

void gaussian_add_clamp01(std::span<const double> image, double stddev,
                          uint64_t seed, std::span<double> out) {
    for (std::size_t i = 0; i < image.size(); ++i)
        out[i] = clamp01(image[i] + stddev * gaussian_at(seed, i));
}

void matvec(std::span<const double> matrix, std::span<const double> x,
            std::span<double> out, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = matrix.data() + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        out[r] = acc;
    }
}

void matvec_transpose(std::span<const double> matrix, std::span<const double> cotangent,
                      std::span<double> out, std::size_t rows, std::size_t cols) {
    // Column-at-a-time so each output element is one ordered dot product.
    for (std::size_t c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < rows; ++r) acc += matrix[r * cols + c] * cotangent[r];
        out[c] = acc;
    }
}

double max_abs(std::span<const double> values) {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace serial

namespace omp {

#ifdef _OPENMP
#define COA_OMP_FOR _Pragma("omp parallel for schedule(static)")
#else
#define COA_OMP_FOR
#endif

void add_clamp01(std::span<const double> image, std::span<const double> delta,
                 std::span<double> out) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(image.size());
    COA_OMP_FOR
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[i] = clamp01(image[i] + delta[i]);
}

void clamp_box(std::span<const double> values, double bound, std::span<double> out) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(values.size());
    COA_OMP_FOR
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[i] = std::min(bound, std::max(-bound, values[i]));
}

void sign_step_clamp(std::span<const double> delta, std::span<const double> grad,
                     double eta, double bound, std::span<double> out) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(delta.size());
    COA_OMP_FOR
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const double s = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
        out[i] = std::min(bound, std::max(-bound, delta[i] + eta * s));
    }
}

void uniform_fill(std::span<double> out, double lo, double hi, uint64_t seed) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(out.size());
    COA_OMP_FOR
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[i] = uniform_at(seed, static_cast<uint64_t>(i), lo, hi);
}

void gaussian_add_clamp01(std::span<const double> image, double stddev,
                          uint64_t seed, std::span<double> out) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(image.size());
    COA_OMP_FOR
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[i] = clamp01(image[i] + stddev * gaussian_at(seed, static_cast<uint64_t>(i)));
}

void matvec(std::span<const double> matrix, std::span<const double> x,
            std::span<double> out, std::size_t rows, std::size_t cols) {
    const std::ptrdiff_t nr = static_cast<std::ptrdiff_t>(rows);
    COA_OMP_FOR
    for (std::ptrdiff_t r = 0; r < nr; ++r) {
        const double* row = matrix.data() + static_cast<std::size_t>(r) * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        out[r] = acc;
    }
}

void matvec_transpose(std::span<const double> matrix, std::span<const double> cotangent,
                      std::span<double> out, std::size_t rows, std::size_t cols) {
    const std::ptrdiff_t nc = static_cast<std::ptrdiff_t>(cols);
    COA_OMP_FOR
    for (std::ptrdiff_t c = 0; c < nc; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < rows; ++r)
            acc += matrix[r * cols + static_cast<std::size_t>(c)] * cotangent[r];
        out[c] = acc;
    }
}

double max_abs(std::span<const double> values) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(values.size());
    double m = 0.0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(max : m)
#endif
    for (std::ptrdiff_t i = 0; i < n; ++i) m = std::max(m, std::abs(values[i]));
    return m;
}

#undef COA_OMP_FOR

}  // namespace omp

namespace {

struct ThreadScope {
    // Applies the configured cap for the duration of one kernel call.
#ifdef _OPENMP
    int saved = 0;
    ThreadScope() {
        const int cap = g_threads.load();
        if (cap > 0) {
            saved = omp_get_max_threads();
            omp_set_num_threads(cap);
        }
    }
    ~ThreadScope() {
        if (saved > 0) omp_set_num_threads(saved);
    }
#endif
};

inline bool use_parallel() { return g_backend.load() == Backend::Parallel; }

}  // namespace

void add_clamp01(std::span<const double> image, std::span<const double> delta,
                 std::span<double> out) {
    if (use_parallel()) {
        ThreadScope ts;
        omp::add_clamp01(image, delta, out);
    } else {
        serial::add_clamp01(image, delta, out);
    }
}

void clamp_box(std::span<const double> values, double bound, std::span<double> out) {
    if (use_parallel()) {
        ThreadScope ts;
        omp::clamp_box(values, bound, out);
    } else {
        serial::clamp_box(values, bound, out);
    }
}

void sign_step_clamp(std::span<const double> delta, std::span<const double> grad,
                     double eta, double bound, std::span<double> out) {
    if (use_parallel()) {
        ThreadScope ts;
        omp::sign_step_clamp(delta, grad, eta, bound, out);
    } else {
        serial::sign_step_clamp(delta, grad, eta, bound, out);
    }
}

void uniform_fill(std::span<double> out, double lo, double hi, uint64_t seed) {
    if (use_parallel()) {
        ThreadScope ts;
        omp::uniform_fill(out, lo, hi, seed);
    } else {
        serial::uniform_fill(out, lo, hi, seed);
    }
}

void gaussian_add_clamp01(std::span<const double> image, double stddev,
                          uint64_t seed, std::span<double> out) {
    if (use_parallel()) {
        ThreadScope ts;
        omp::gaussian_add_clamp01(image, stddev, seed, out);
    } else {
        serial::gaussian_add_clamp01(image, stddev, seed, out);
    }
}

void matvec(std::span<const double> matrix, std::span<const double> x,
            std::span<double> out, std::size_t rows, std::size_t cols) {
    if (use_parallel()) {
        ThreadScope ts;
        omp::matvec(matrix, x, out, rows, cols);
    } else {
        serial::matvec(matrix, x, out, rows, cols);
    }
}

void matvec_transpose(std::span<const double> matrix, std::span<const double> cotangent,
                      std::span<double> out, std::size_t rows, std::size_t cols) {
    if (use_parallel()) {
        ThreadScope ts;
        omp::matvec_transpose(matrix, cotangent, out, rows, cols);
    } else {
        serial::matvec_transpose(matrix, cotangent, out, rows, cols);
    }
}

double max_abs(std::span<const double> values) {
    if (use_parallel()) {
        ThreadScope ts;
        return omp::max_abs(values);
    }
    return serial::max_abs(values);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace coa::kernels
