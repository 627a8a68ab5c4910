#include "rlhflab/rng.hpp"

#include <cmath>

namespace rlhflab {

double Rng::normal() {
  // Marsaglia polar method with one cached deviate.
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  have_spare_ = true;
  return u * factor;
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw Error("gamma shape must be positive");
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a+1) * U^(1/a)
    const double boost = gamma(shape + 1.0);
    return boost * std::pow(uniform01(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01();
    if (u < 1.0 - 0.0331 * (x * x) * (x * x)) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

void Rng::dirichlet(double alpha, std::span<double> out) {
  double total = 0.0;
  for (auto& value : out) {
    value = gamma(alpha);
    total += value;
  }
  if (total <= 0.0) {
    // all gammas underflowed (tiny alpha); fall back to a uniform simplex point
    const double p = 1.0 / static_cast<double>(out.size());
    for (auto& value : out) value = p;
    return;
  }
  for (auto& value : out) value /= total;
}

std::size_t Rng::categorical(std::span<const double> probs) {
  if (probs.empty()) throw Error("categorical over empty alphabet");
  const double u = uniform01();
  double cdf = 0.0;
  std::size_t last_positive = probs.size() - 1;
  bool seen_positive = false;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] > 0.0) {
      last_positive = j;
      seen_positive = true;
      cdf += probs[j];
      if (u < cdf) return j;
    }
  }
  if (!seen_positive) throw Error("categorical over all-zero weights");
  return last_positive;  // u landed in the rounding gap at the top
}

}  // namespace rlhflab
