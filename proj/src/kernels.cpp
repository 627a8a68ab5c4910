#include "rlhflab/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace rlhflab::kern {

namespace {

Backend resolve() {
  const char* env = std::getenv("RLHFLAB_SIMD");
  if (env != nullptr) {
    if (std::strcmp(env, "scalar") == 0) return Backend::kScalar;
    if (std::strcmp(env, "avx2") == 0 && avx2::supported()) return Backend::kAvx2;
    return Backend::kScalar;
  }
  return avx2::supported() ? Backend::kAvx2 : Backend::kScalar;
}

}  // namespace

Backend active_backend() {
  static const Backend b = resolve();
  return b;
}

const char* backend_name() {
  return active_backend() == Backend::kAvx2 ? "avx2" : "scalar";
}

#define RLHFLAB_DISPATCH(call) \
  return active_backend() == Backend::kAvx2 ? avx2::call : scalar::call

double sum(const double* x, std::size_t n) { RLHFLAB_DISPATCH(sum(x, n)); }

double dot(const double* x, const double* y, std::size_t n) { RLHFLAB_DISPATCH(dot(x, y, n)); }

double clipped_dot(const double* w, const double* v, std::size_t n, double tau) {
  RLHFLAB_DISPATCH(clipped_dot(w, v, n, tau));
}

double clipped_sum(const double* v, std::size_t n, double tau) {
  RLHFLAB_DISPATCH(clipped_sum(v, n, tau));
}

double clipped_term_sum(const double* r, const double* ell, std::size_t n, double beta,
                        double tau) {
  RLHFLAB_DISPATCH(clipped_term_sum(r, ell, n, beta, tau));
}

double excess_dot(const double* w, const double* v, std::size_t n, double tau) {
  RLHFLAB_DISPATCH(excess_dot(w, v, n, tau));
}

double sq_err_dot(const double* w, const double* a, const double* b, std::size_t n) {
  RLHFLAB_DISPATCH(sq_err_dot(w, a, b, n));
}

double sq_dev_dot(const double* w, const double* v, double c, std::size_t n) {
  RLHFLAB_DISPATCH(sq_dev_dot(w, v, c, n));
}

double chi_sq_sum(const double* q, const double* p, std::size_t n) {
  RLHFLAB_DISPATCH(chi_sq_sum(q, p, n));
}

double ratio_sq_sum(const double* q, const double* p, std::size_t n) {
  RLHFLAB_DISPATCH(ratio_sq_sum(q, p, n));
}

double max_abs(const double* x, std::size_t n) { RLHFLAB_DISPATCH(max_abs(x, n)); }

#undef RLHFLAB_DISPATCH

}  // namespace rlhflab::kern
