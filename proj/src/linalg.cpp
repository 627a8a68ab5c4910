#include "rlhflab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rlhflab/error.hpp"

namespace rlhflab {

std::optional<Matrix> cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) return std::nullopt;
  Matrix chol(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = a(i, j);
      for (std::size_t k = 0; k < j; ++k) sum -= chol(i, k) * chol(j, k);
      if (i == j) {
        if (!(sum > 0.0)) return std::nullopt;
        chol(i, j) = std::sqrt(sum);
      } else {
        chol(i, j) = sum / chol(j, j);
      }
    }
  }
  return chol;
}

Vector cholesky_solve(const Matrix& chol, const Vector& b) {
  const std::size_t n = chol.rows();
  if (b.size() != n) throw Error("cholesky_solve: size mismatch");
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = b[i];
    for (std::size_t k = 0; k < i; ++k) sum -= chol(i, k) * y[k];
    y[i] = sum / chol(i, i);
  }
  Vector x(n);
  for (std::size_t i = n; i-- > 0;) {
    double sum = y[i];
    for (std::size_t k = i + 1; k < n; ++k) sum -= chol(k, i) * x[k];
    x[i] = sum / chol(i, i);
  }
  return x;
}

double cholesky_logdet(const Matrix& chol) {
  double logdet = 0.0;
  for (std::size_t i = 0; i < chol.rows(); ++i) logdet += std::log(chol(i, i));
  return 2.0 * logdet;
}

EigenDecomposition jacobi_eigh(const Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw Error("jacobi_eigh: matrix not square");
  Matrix work = a;
  Matrix vecs(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) vecs(i, i) = 1.0;

  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += work(p, q) * work(p, q);
    if (off <= 1e-300) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = work(p, q);
        if (apq == 0.0) continue;
        const double theta = (work(q, q) - work(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = work(k, p);
          const double akq = work(k, q);
          work(k, p) = c * akp - s * akq;
          work(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = work(p, k);
          const double aqk = work(q, k);
          work(p, k) = c * apk - s * aqk;
          work(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vecs(k, p);
          const double vkq = vecs(k, q);
          vecs(k, p) = c * vkp - s * vkq;
          vecs(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  EigenDecomposition out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = work(i, i);

  // sort ascending, permuting eigenvector columns alongside
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return out.values[i] < out.values[j]; });
  Vector sorted_values(n);
  Matrix sorted_vectors(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    sorted_values[j] = out.values[order[j]];
    for (std::size_t i = 0; i < n; ++i) sorted_vectors(i, j) = vecs(i, order[j]);
  }
  out.values = std::move(sorted_values);
  out.vectors = std::move(sorted_vectors);
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error("matmul: shape mismatch");
  Matrix out(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

double max_abs_entry(const Matrix& a) {
  double peak = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) peak = std::max(peak, std::fabs(a.data()[i]));
  return peak;
}

}  // namespace rlhflab
