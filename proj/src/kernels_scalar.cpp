#include "rlhflab/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace rlhflab::kern::scalar {

namespace {
inline double clip(double x, double tau) { return std::min(std::max(x, -tau), tau); }
}  // namespace

double sum(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double clipped_dot(const double* w, const double* v, std::size_t n, double tau) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += w[i] * clip(v[i], tau);
  return acc;
}

double clipped_sum(const double* v, std::size_t n, double tau) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += clip(v[i], tau);
  return acc;
}

double clipped_term_sum(const double* r, const double* ell, std::size_t n,
                        double beta, double tau) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += r[i] - beta * clip(ell[i], tau);
  return acc;
}

double excess_dot(const double* w, const double* v, std::size_t n, double tau) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += w[i] * std::max(std::fabs(v[i]) - tau, 0.0);
  return acc;
}

double sq_err_dot(const double* w, const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += w[i] * d * d;
  }
  return acc;
}

double sq_dev_dot(const double* w, const double* v, double c, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = v[i] - c;
    acc += w[i] * d * d;
  }
  return acc;
}

double chi_sq_sum(const double* q, const double* p, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p[i] > 0.0) {
      const double d = q[i] - p[i];
      acc += d * d / p[i];
    }
  }
  return acc;
}

double ratio_sq_sum(const double* q, const double* p, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p[i] > 0.0) acc += q[i] * q[i] / p[i];
  }
  return acc;
}

double max_abs(const double* x, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(x[i]));
  return m;
}

}  // namespace rlhflab::kern::scalar
