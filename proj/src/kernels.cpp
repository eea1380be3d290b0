#include "ebcobart/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace ebcobart::kernels {

namespace scalar {

double sum(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double sumsq(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double mse(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

double max(const double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

double sum_exp(const double* x, double shift, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - shift);
  return s;
}

void add(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] - b[i];
}

void gather_add(double* dst, const double* values, const std::int32_t* idx,
                std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += values[idx[i]];
}

void gather_sub(double* dst, const double* values, const std::int32_t* idx,
                std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] -= values[idx[i]];
}

}  // namespace scalar

#if defined(__x86_64__)
namespace avx2 {
// defined in kernels_avx2.cpp, compiled with -mavx2 -mfma
double sum(const double* x, std::size_t n);
double sumsq(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double mse(const double* a, const double* b, std::size_t n);
double max(const double* x, std::size_t n);
double sum_exp(const double* x, double shift, std::size_t n);
void add(double* dst, const double* a, const double* b, std::size_t n);
void sub(double* dst, const double* a, const double* b, std::size_t n);
void gather_add(double* dst, const double* values, const std::int32_t* idx,
                std::size_t n);
void gather_sub(double* dst, const double* values, const std::int32_t* idx,
                std::size_t n);
}  // namespace avx2
#endif

namespace {

struct Vtable {
  double (*sum)(const double*, std::size_t);
  double (*sumsq)(const double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  double (*mse)(const double*, const double*, std::size_t);
  double (*max)(const double*, std::size_t);
  double (*sum_exp)(const double*, double, std::size_t);
  void (*add)(double*, const double*, const double*, std::size_t);
  void (*sub)(double*, const double*, const double*, std::size_t);
  void (*gather_add)(double*, const double*, const std::int32_t*, std::size_t);
  void (*gather_sub)(double*, const double*, const std::int32_t*, std::size_t);
};

constexpr Vtable kScalar = {scalar::sum,     scalar::sumsq, scalar::dot,
                            scalar::mse,     scalar::max,   scalar::sum_exp,
                            scalar::add,     scalar::sub,   scalar::gather_add,
                            scalar::gather_sub};

#if defined(__x86_64__)
constexpr Vtable kAvx2 = {avx2::sum,     avx2::sumsq, avx2::dot,
                          avx2::mse,     avx2::max,   avx2::sum_exp,
                          avx2::add,     avx2::sub,   avx2::gather_add,
                          avx2::gather_sub};
#endif

bool cpu_has_avx2() {
#if defined(__x86_64__)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

Backend pick_initial() {
  if (const char* env = std::getenv("EBCOBART_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Backend::scalar;
    if (v == "avx2" && cpu_has_avx2()) return Backend::avx2;
    return Backend::scalar;
  }
  return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

struct Dispatch {
  Backend backend;
  const Vtable* table;
  Dispatch() : backend(pick_initial()), table(&kScalar) {
#if defined(__x86_64__)
    if (backend == Backend::avx2) table = &kAvx2;
#endif
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

Backend active_backend() { return dispatch().backend; }

std::string backend_name() {
  return dispatch().backend == Backend::avx2 ? "avx2" : "scalar";
}

void set_backend(Backend b) {
  if (b == Backend::avx2) {
    if (!cpu_has_avx2()) throw std::runtime_error("AVX2 not supported on this CPU");
#if defined(__x86_64__)
    dispatch().backend = Backend::avx2;
    dispatch().table = &kAvx2;
    return;
#endif
  }
  dispatch().backend = Backend::scalar;
  dispatch().table = &kScalar;
}

double sum(const double* x, std::size_t n) { return dispatch().table->sum(x, n); }
double sumsq(const double* x, std::size_t n) { return dispatch().table->sumsq(x, n); }
double dot(const double* x, const double* y, std::size_t n) {
  return dispatch().table->dot(x, y, n);
}
double mse(const double* a, const double* b, std::size_t n) {
  return dispatch().table->mse(a, b, n);
}
double max(const double* x, std::size_t n) { return dispatch().table->max(x, n); }
double sum_exp(const double* x, double shift, std::size_t n) {
  return dispatch().table->sum_exp(x, shift, n);
}
void add(double* dst, const double* a, const double* b, std::size_t n) {
  dispatch().table->add(dst, a, b, n);
}
void sub(double* dst, const double* a, const double* b, std::size_t n) {
  dispatch().table->sub(dst, a, b, n);
}
void gather_add(double* dst, const double* values, const std::int32_t* idx,
                std::size_t n) {
  dispatch().table->gather_add(dst, values, idx, n);
}
void gather_sub(double* dst, const double* values, const std::int32_t* idx,
                std::size_t n) {
  dispatch().table->gather_sub(dst, values, idx, n);
}

}  // namespace ebcobart::kernels
