#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace coa::kernels {

// Which implementation the dispatching wrappers below call into. Serial is
// the reference; Parallel uses OpenMP when the library was built with it and
// produces bit-identical results (row-parallel matvecs, counter-based RNG,
// elementwise maps only).
enum class Backend { Serial, Parallel };

Backend active_backend();
void set_backend(Backend b);

// Thread cap for the Parallel backend. 0 means the OpenMP default.
int parallel_threads();
void set_parallel_threads(int n);

// True when the library was compiled with OpenMP support.
bool openmp_compiled();

namespace serial {

void add_clamp01(std::span<const double> image, std::span<const double> delta,
                 std::span<double> out);
void clamp_box(std::span<const double> values, double bound, std::span<double> out);
void sign_step_clamp(std::span<const double> delta, std::span<const double> grad,
                     double eta, double bound, std::span<double> out);
void uniform_fill(std::span<double> out, double lo, double hi, uint64_t seed);
void gaussian_add_clamp01(std::span<const double> image, double stddev,
                          uint64_t seed, std::span<double> out);
// matrix is rows x cols, row-major; out = matrix * x.
void matvec(std::span<const double> matrix, std::span<const double> x,
            std::span<double> out, std::size_t rows, std::size_t cols);
// out = matrix^T * cotangent (cols-sized output).
void matvec_transpose(std::span<const double> matrix, std::span<const double> cotangent,
                      std::span<double> out, std::size_t rows, std::size_t cols);
double max_abs(std::span<const double> values);

}  // namespace serial

namespace omp {

void add_clamp01(std::span<const double> image, std::span<const double> delta,
                 std::span<double> out);
void clamp_box(std::span<const double> values, double bound, std::span<double> out);
void sign_step_clamp(std::span<const double> delta, std::span<const double> grad,
                     double eta, double bound, std::span<double> out);
void uniform_fill(std::span<double> out, double lo, double hi, uint64_t seed);
void gaussian_add_clamp01(std::span<const double> image, double stddev,
                          uint64_t seed, std::span<double> out);
void matvec(std::span<const double> matrix, std::span<const double> x,
            std::span<double> out, std::size_t rows, std::size_t cols);
void matvec_transpose(std::span<const double> matrix, std::span<const double> cotangent,
                      std::span<double> out, std::size_t rows, std::size_t cols);
double max_abs(std::span<const double> values);

}  // namespace omp

// Dispatchers honoring the active backend.
void add_clamp01(std::span<const double> image, std::span<const double> delta,
                 std::span<double> out);
void clamp_box(std::span<const double> values, double bound, std::span<double> out);
void sign_step_clamp(std::span<const double> delta, std::span<const double> grad,
                     double eta, double bound, std::span<double> out);
void uniform_fill(std::span<double> out, double lo, double hi, uint64_t seed);
void gaussian_add_clamp01(std::span<const double> image, double stddev,
                          uint64_t seed, std::span<double> out);
void matvec(std::span<const double> matrix, std::span<const double> x,
            std::span<double> out, std::size_t rows, std::size_t cols);
void matvec_transpose(std::span<const double> matrix, std::span<const double> cotangent,
                      std::span<double> out, std::size_t rows, std::size_t cols);
double max_abs(std::span<const double> values);

// Order-sensitive reductions stay serial regardless of backend; embedding
// dimensions are small and a fixed summation order keeps runs reproducible.
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

}  // namespace coa::kernels
