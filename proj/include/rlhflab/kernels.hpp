#pragma once

#include <cstddef>

// Data-parallel reduction kernels behind the enumeration and estimator code.
// Every kernel has a scalar reference implementation and an AVX2 variant;
// the unqualified entry points dispatch once at startup (cpuid, overridable
// with RLHFLAB_SIMD=scalar|avx2). Scalar and SIMD results may differ by
// summation-order rounding only; the equivalence suite pins that down.
//
// Clipping convention throughout: clip(x, tau) = min(max(x, -tau), tau),
// well-defined for tau = +infinity (identity).

namespace rlhflab::kern {

enum class Backend { kScalar, kAvx2 };

Backend active_backend();
const char* backend_name();

double sum(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
// sum_i w[i] * clip(v[i], tau)
double clipped_dot(const double* w, const double* v, std::size_t n, double tau);
// sum_i clip(v[i], tau)
double clipped_sum(const double* v, std::size_t n, double tau);
// sum_i (r[i] - beta * clip(ell[i], tau))
double clipped_term_sum(const double* r, const double* ell, std::size_t n,
                        double beta, double tau);
// sum_i w[i] * max(|v[i]| - tau, 0)
double excess_dot(const double* w, const double* v, std::size_t n, double tau);
// sum_i w[i] * (a[i] - b[i])^2
double sq_err_dot(const double* w, const double* a, const double* b, std::size_t n);
// sum_i w[i] * (v[i] - c)^2
double sq_dev_dot(const double* w, const double* v, double c, std::size_t n);
// sum over {i : p[i] > 0} of (q[i] - p[i])^2 / p[i]
double chi_sq_sum(const double* q, const double* p, std::size_t n);
// sum over {i : p[i] > 0} of q[i]^2 / p[i]
double ratio_sq_sum(const double* q, const double* p, std::size_t n);
double max_abs(const double* x, std::size_t n);

namespace scalar {
double sum(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double clipped_dot(const double* w, const double* v, std::size_t n, double tau);
double clipped_sum(const double* v, std::size_t n, double tau);
double clipped_term_sum(const double* r, const double* ell, std::size_t n,
                        double beta, double tau);
double excess_dot(const double* w, const double* v, std::size_t n, double tau);
double sq_err_dot(const double* w, const double* a, const double* b, std::size_t n);
double sq_dev_dot(const double* w, const double* v, double c, std::size_t n);
double chi_sq_sum(const double* q, const double* p, std::size_t n);
double ratio_sq_sum(const double* q, const double* p, std::size_t n);
double max_abs(const double* x, std::size_t n);
}  // namespace scalar

namespace avx2 {
bool supported();
double sum(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double clipped_dot(const double* w, const double* v, std::size_t n, double tau);
double clipped_sum(const double* v, std::size_t n, double tau);
double clipped_term_sum(const double* r, const double* ell, std::size_t n,
                        double beta, double tau);
double excess_dot(const double* w, const double* v, std::size_t n, double tau);
double sq_err_dot(const double* w, const double* a, const double* b, std::size_t n);
double sq_dev_dot(const double* w, const double* v, double c, std::size_t n);
double chi_sq_sum(const double* q, const double* p, std::size_t n);
double ratio_sq_sum(const double* q, const double* p, std::size_t n);
double max_abs(const double* x, std::size_t n);
}  // namespace avx2

}  // namespace rlhflab::kern
