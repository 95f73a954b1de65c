#pragma once

#include <span>
#include <vector>

namespace defgate {

// A k-class probability vector: p_i >= 0, sum within 1e-6 of 1, k >= 2.
using Prediction = std::vector<double>;

// Throws std::invalid_argument if p is not a valid prediction.
void validate_prediction(const Prediction& p);

// Adds the same offset r to every class probability and renormalizes by the
// actual sum, i.e. p_i'' = (p_i + r) / sum_j(p_j + r). Equivalent to mixing
// with the uniform distribution at weight kr/(1+kr); the full class ranking,
// ties included, is preserved. r = 0 returns the input unchanged.
Prediction perturb(const Prediction& p, double r);

// Element-wise perturb; errors carry the offending index.
std::vector<Prediction> perturb_batch(std::span<const Prediction> ps, double r);

}  // namespace defgate
