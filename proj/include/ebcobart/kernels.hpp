#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

// Data-parallel inner loops used by the sampler and the criteria code.
// Every kernel has a scalar reference implementation and, on x86-64 with
// AVX2, a vector variant selected once at startup (overridable through
// EBCOBART_SIMD=scalar|avx2 or set_backend()). Variants are equivalence-
// tested against each other; reductions may differ by rounding only.

namespace ebcobart::kernels {

enum class Backend { scalar, avx2 };

Backend active_backend();
void set_backend(Backend b);       // throws if unsupported on this CPU
std::string backend_name();

// reductions
double sum(const double* x, std::size_t n);
double sumsq(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double mse(const double* a, const double* b, std::size_t n);  // mean((a-b)^2)
double max(const double* x, std::size_t n);                   // n >= 1
double sum_exp(const double* x, double shift, std::size_t n); // sum exp(x-shift)

// elementwise
void add(double* dst, const double* a, const double* b, std::size_t n);
void sub(double* dst, const double* a, const double* b, std::size_t n);

// dst[i] +=/-= values[idx[i]] (leaf-value accumulation along a row->node map)
void gather_add(double* dst, const double* values, const std::int32_t* idx,
                std::size_t n);
void gather_sub(double* dst, const double* values, const std::int32_t* idx,
                std::size_t n);

// span conveniences
inline double sum(std::span<const double> x) { return sum(x.data(), x.size()); }
inline double sumsq(std::span<const double> x) { return sumsq(x.data(), x.size()); }
inline double dot(std::span<const double> x, std::span<const double> y) {
  return dot(x.data(), y.data(), x.size());
}
inline double mse(std::span<const double> a, std::span<const double> b) {
  return mse(a.data(), b.data(), a.size());
}

}  // namespace ebcobart::kernels
