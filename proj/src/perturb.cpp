#include "defgate/perturb.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace defgate {

void validate_prediction(const Prediction& p) {
  if (p.size() < 2) throw std::invalid_argument("prediction needs at least 2 classes");
  double sum = 0;
  for (double v : p) {
    if (!(v >= 0) || !std::isfinite(v)) throw std::invalid_argument("prediction has a negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("prediction probabilities sum to " + std::to_string(sum) + ", expected 1");
}

Prediction perturb(const Prediction& p, double r) {
  validate_prediction(p);
  if (!(r >= 0)) throw std::invalid_argument("perturbation value must be non-negative");
  if (r == 0.0) return p;
  double denom = 0;
  for (double v : p) denom += v + r;
  Prediction out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = (p[i] + r) / denom;
  return out;
}

std::vector<Prediction> perturb_batch(std::span<const Prediction> ps, double r) {
  std::vector<Prediction> out;
  out.reserve(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    try {
      out.push_back(perturb(ps[i], r));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("prediction " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace defgate
