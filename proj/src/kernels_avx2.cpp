#include "rlhflab/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__) || defined(_M_IX86)
#define RLHFLAB_X86 1
#include <immintrin.h>
#endif

#include <algorithm>
#include <cmath>

namespace rlhflab::kern::avx2 {

#ifdef RLHFLAB_X86

bool supported() { return __builtin_cpu_supports("avx2"); }

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_max_sd(lo, swapped));
}

inline __m256d clip4(__m256d v, __m256d lo, __m256d hi) {
  return _mm256_min_pd(_mm256_max_pd(v, lo), hi);
}

const __m256d kAbsMask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));

}  // namespace

double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double r = hsum(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  double r = hsum(acc);
  for (; i < n; ++i) r += x[i] * y[i];
  return r;
}

double clipped_dot(const double* w, const double* v, std::size_t n, double tau) {
  const __m256d hi = _mm256_set1_pd(tau);
  const __m256d lo = _mm256_set1_pd(-tau);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(w + i), clip4(_mm256_loadu_pd(v + i), lo, hi), acc);
  double r = hsum(acc);
  for (; i < n; ++i) r += w[i] * std::min(std::max(v[i], -tau), tau);
  return r;
}

double clipped_sum(const double* v, std::size_t n, double tau) {
  const __m256d hi = _mm256_set1_pd(tau);
  const __m256d lo = _mm256_set1_pd(-tau);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, clip4(_mm256_loadu_pd(v + i), lo, hi));
  double r = hsum(acc);
  for (; i < n; ++i) r += std::min(std::max(v[i], -tau), tau);
  return r;
}

double clipped_term_sum(const double* r, const double* ell, std::size_t n,
                        double beta, double tau) {
  const __m256d hi = _mm256_set1_pd(tau);
  const __m256d lo = _mm256_set1_pd(-tau);
  const __m256d nb = _mm256_set1_pd(-beta);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d term = _mm256_fmadd_pd(nb, clip4(_mm256_loadu_pd(ell + i), lo, hi),
                                   _mm256_loadu_pd(r + i));
    acc = _mm256_add_pd(acc, term);
  }
  double out = hsum(acc);
  for (; i < n; ++i) out += r[i] - beta * std::min(std::max(ell[i], -tau), tau);
  return out;
}

double excess_dot(const double* w, const double* v, std::size_t n, double tau) {
  const __m256d t = _mm256_set1_pd(tau);
  const __m256d zero = _mm256_setzero_pd();
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d a = _mm256_and_pd(_mm256_loadu_pd(v + i), kAbsMask);
    __m256d ex = _mm256_max_pd(_mm256_sub_pd(a, t), zero);
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(w + i), ex, acc);
  }
  double r = hsum(acc);
  for (; i < n; ++i) r += w[i] * std::max(std::fabs(v[i]) - tau, 0.0);
  return r;
}

double sq_err_dot(const double* w, const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(w + i), _mm256_mul_pd(d, d), acc);
  }
  double r = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    r += w[i] * d * d;
  }
  return r;
}

double sq_dev_dot(const double* w, const double* v, double c, std::size_t n) {
  const __m256d cc = _mm256_set1_pd(c);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(v + i), cc);
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(w + i), _mm256_mul_pd(d, d), acc);
  }
  double r = hsum(acc);
  for (; i < n; ++i) {
    const double d = v[i] - c;
    r += w[i] * d * d;
  }
  return r;
}

double chi_sq_sum(const double* q, const double* p, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d pv = _mm256_loadu_pd(p + i);
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(q + i), pv);
    __m256d quot = _mm256_div_pd(_mm256_mul_pd(d, d), pv);
    // lanes with p == 0 are masked off; zeroed bits make the inf/nan harmless
    __m256d mask = _mm256_cmp_pd(pv, zero, _CMP_GT_OQ);
    acc = _mm256_add_pd(acc, _mm256_and_pd(quot, mask));
  }
  double r = hsum(acc);
  for (; i < n; ++i) {
    if (p[i] > 0.0) {
      const double d = q[i] - p[i];
      r += d * d / p[i];
    }
  }
  return r;
}

double ratio_sq_sum(const double* q, const double* p, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d pv = _mm256_loadu_pd(p + i);
    __m256d qv = _mm256_loadu_pd(q + i);
    __m256d quot = _mm256_div_pd(_mm256_mul_pd(qv, qv), pv);
    __m256d mask = _mm256_cmp_pd(pv, zero, _CMP_GT_OQ);
    acc = _mm256_add_pd(acc, _mm256_and_pd(quot, mask));
  }
  double r = hsum(acc);
  for (; i < n; ++i) {
    if (p[i] > 0.0) r += q[i] * q[i] / p[i];
  }
  return r;
}

double max_abs(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_max_pd(acc, _mm256_and_pd(_mm256_loadu_pd(x + i), kAbsMask));
  double r = hmax(acc);
  for (; i < n; ++i) r = std::max(r, std::fabs(x[i]));
  return r;
}

#else  // non-x86 fallback: never selected by the dispatcher

bool supported() { return false; }
double sum(const double* x, std::size_t n) { return scalar::sum(x, n); }
double dot(const double* x, const double* y, std::size_t n) { return scalar::dot(x, y, n); }
double clipped_dot(const double* w, const double* v, std::size_t n, double tau) {
  return scalar::clipped_dot(w, v, n, tau);
}
double clipped_sum(const double* v, std::size_t n, double tau) {
  return scalar::clipped_sum(v, n, tau);
}
double clipped_term_sum(const double* r, const double* ell, std::size_t n, double beta,
                        double tau) {
  return scalar::clipped_term_sum(r, ell, n, beta, tau);
}
double excess_dot(const double* w, const double* v, std::size_t n, double tau) {
  return scalar::excess_dot(w, v, n, tau);
}
double sq_err_dot(const double* w, const double* a, const double* b, std::size_t n) {
  return scalar::sq_err_dot(w, a, b, n);
}
double sq_dev_dot(const double* w, const double* v, double c, std::size_t n) {
  return scalar::sq_dev_dot(w, v, c, n);
}
double chi_sq_sum(const double* q, const double* p, std::size_t n) {
  return scalar::chi_sq_sum(q, p, n);
}
double ratio_sq_sum(const double* q, const double* p, std::size_t n) {
  return scalar::ratio_sq_sum(q, p, n);
}
double max_abs(const double* x, std::size_t n) { return scalar::max_abs(x, n); }

#endif

}  // namespace rlhflab::kern::avx2
