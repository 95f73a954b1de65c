#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "defgate/perturb.hpp"
#include "defgate/rng.hpp"

using namespace defgate;

namespace {

Prediction random_prediction(Rng& rng, int k) {
  Prediction p(k);
  double sum = 0;
  for (auto& v : p) {
    v = -std::log(1.0 - rng.uniform());  // exponential draws give a Dirichlet(1) point
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

double entropy(const Prediction& p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

}  // namespace

TEST_CASE("worked perturbation value") {
  const Prediction out = perturb({0.7, 0.2, 0.1}, 0.5);
  CHECK(std::abs(out[0] - 0.48) < 1e-12);
  CHECK(std::abs(out[1] - 0.28) < 1e-12);
  CHECK(std::abs(out[2] - 0.24) < 1e-12);
}

TEST_CASE("r = 0 is the identity") {
  const Prediction p = {0.5, 0.3, 0.2};
  CHECK(perturb(p, 0.0) == p);
}

TEST_CASE("the uniform prediction is a fixed point") {
  const Prediction p = {0.25, 0.25, 0.25, 0.25};
  const Prediction out = perturb(p, 1.7);
  for (double v : out) CHECK(std::abs(v - 0.25) < 1e-12);
}

TEST_CASE("invalid inputs are rejected") {
  CHECK_THROWS_AS(perturb({0.7, 0.2, 0.1}, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(perturb({0.7, 0.4, 0.1}, 0.5), std::invalid_argument);   // sums to 1.2
  CHECK_THROWS_AS(perturb({1.2, -0.2}, 0.5), std::invalid_argument);       // negative entry
  CHECK_THROWS_AS(perturb({1.0}, 0.5), std::invalid_argument);             // k < 2
}

TEST_CASE("perturb_batch maps element-wise and reports the failing index") {
  CHECK(perturb_batch(std::vector<Prediction>{}, 0.5).empty());
  const Prediction p = {0.6, 0.4};
  const auto out = perturb_batch(std::vector<Prediction>{p, p}, 0.5);
  REQUIRE(out.size() == 2);
  CHECK(out[0] == perturb(p, 0.5));
  CHECK(out[1] == perturb(p, 0.5));

  const std::vector<Prediction> bad = {p, {0.9, 0.9}};
  CHECK_THROWS_WITH_AS(perturb_batch(bad, 0.5), doctest::Contains("prediction 1"), std::invalid_argument);
}

TEST_CASE("perturbation algebra holds over seeded random predictions") {
  Rng rng(2024);
  const std::vector<double> rs = {0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0};
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + rng.uniform_int(19);
    const Prediction p = random_prediction(rng, k);
    const double r = rs[trial % rs.size()];
    const Prediction q = perturb(p, r);

    // Sum exactly renormalized.
    const double sum = std::accumulate(q.begin(), q.end(), 0.0);
    CHECK(std::abs(sum - 1.0) <= 1e-9);

    // Mixture form: q_i = λ p_i + (1-λ)/k with λ = 1/(1+kr).
    const double lambda = 1.0 / (1.0 + k * r);
    for (int i = 0; i < k; ++i) {
      CHECK(std::abs(q[i] - (lambda * p[i] + (1.0 - lambda) / k)) <= 1e-12);
    }

    // Pairwise gaps contract by exactly 1/(1+kr).
    for (int i = 0; i < std::min(k, 6); ++i)
      for (int j = i + 1; j < std::min(k, 6); ++j)
        CHECK(std::abs((q[i] - q[j]) - (p[i] - p[j]) / (1.0 + k * r)) <= 1e-9);

    // Ranking with ties is preserved.
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        if (p[i] < p[j]) CHECK(q[i] < q[j]);
        if (p[i] == p[j]) CHECK(q[i] == q[j]);
      }
    CHECK(std::distance(q.begin(), std::max_element(q.begin(), q.end())) ==
          std::distance(p.begin(), std::max_element(p.begin(), p.end())));

    // Entropy never decreases.
    CHECK(entropy(q) >= entropy(p) - 1e-12);
  }
}

TEST_CASE("larger r moves predictions closer to uniform") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Prediction p = random_prediction(rng, 5);
    double prev_gap = 2.0;
    for (double r : {0.05, 0.2, 0.5, 1.0, 2.0}) {
      const Prediction q = perturb(p, r);
      const auto [mn, mx] = std::minmax_element(q.begin(), q.end());
      const double gap = *mx - *mn;
      CHECK(gap <= prev_gap + 1e-12);
      prev_gap = gap;
    }
  }
}
