#include <doctest.h>

#include <cmath>
#include <cstring>

#include "defgate/autodiff.hpp"
#include "defgate/checkpoint.hpp"
#include "defgate/fd_check.hpp"
#include "defgate/net.hpp"
#include "defgate/rng.hpp"
#include "defgate/train.hpp"

using namespace defgate;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.uniform_f(lo, hi);
  return t;
}

// |a-b| <= max(rtol*max(|a|,|b|), atol), elementwise, skipping flagged kinks.
void check_close(const Tensor& a, const Tensor& b, double rtol, double atol,
                 const std::vector<std::uint8_t>* skip = nullptr) {
  REQUIRE(a.shape == b.shape);
  int checked = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if (skip && (*skip)[i]) continue;
    const double x = a.data[i], y = b.data[i];
    const double tol = std::max(rtol * std::max(std::abs(x), std::abs(y)), atol);
    INFO("element ", i, ": ", x, " vs ", y);
    CHECK(std::abs(x - y) <= tol);
    ++checked;
  }
  CHECK(checked > 0);
}

void check_grad_matches_oracle(const Network& net, const Tensor& x, double h = 1e-3, double rtol = 1e-3,
                               double atol = 1e-6) {
  const Tensor analytic = input_gradient(net, x);
  const FdCheck fd = finite_difference_check(net, x, h);
  check_close(analytic, fd.grad, rtol, atol, &fd.kink);
}

}  // namespace

TEST_CASE("dense layer with identity weights is the identity map") {
  Network net = Network::init({{3}, {Dense{3, 3}}}, 0);
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 3; ++i) net.params[0].w.data[o * 3 + i] = (o == i) ? 1.0f : 0.0f;
  Tensor x({3}, {1, 2, 3});
  const Tensor y = forward(net, x);
  CHECK(y.data == std::vector<float>{1, 2, 3});
}

TEST_CASE("relu clamps negatives to zero") {
  Network net = Network::init({{3}, {Relu{}}}, 0);
  const Tensor y = forward(net, Tensor({3}, {-1, 0, 2}));
  CHECK(y.data == std::vector<float>{0, 0, 2});
}

TEST_CASE("conv2d matches a hand-computed map") {
  // 3x3 input, 2x2 kernel [[1,0],[0,-1]]: out[y][x] = in[y][x] - in[y+1][x+1].
  Network net = Network::init({{1, 3, 3}, {Conv2d{1, 1, 2, 1, 0}}}, 0);
  net.params[0].w.data = {1, 0, 0, -1};
  net.params[0].b.data = {0};
  Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor y = forward(net, x);
  CHECK(y.shape == std::vector<int>{1, 2, 2});
  CHECK(y.data == std::vector<float>{-4, -4, -4, -4});
}

TEST_CASE("forward is pure") {
  Rng rng(7);
  Network net = Network::init({{3, 8, 8}, {Conv2d{3, 4, 3, 2, 1}, LeakyRelu{0.2f}, Flatten{}, Dense{64, 5}}}, 7);
  const Tensor x = random_tensor({3, 8, 8}, rng);
  const Tensor y1 = forward(net, x);
  const Tensor y2 = forward(net, x);
  CHECK(y1.data == y2.data);
}

TEST_CASE("batched forward equals per-sample forward") {
  Rng rng(11);
  Network net = Network::init({{2, 6, 6}, {Conv2d{2, 3, 3, 1, 1}, Relu{}, AvgPool{2}, Flatten{}, Dense{27, 4}}}, 11);
  Tensor batch = Tensor::zeros({3, 2, 6, 6});
  std::vector<Tensor> singles;
  for (int s = 0; s < 3; ++s) {
    Tensor x = random_tensor({2, 6, 6}, rng);
    std::copy(x.data.begin(), x.data.end(), batch.data.begin() + s * 72);
    singles.push_back(std::move(x));
  }
  const Tensor out = forward(net, batch);
  CHECK(out.shape == std::vector<int>{3, 4});
  for (int s = 0; s < 3; ++s) {
    const Tensor y = forward(net, singles[s]);
    for (int i = 0; i < 4; ++i) CHECK(out.data[s * 4 + i] == y.data[i]);
  }
}

TEST_CASE("shape mismatches are rejected with the offending layer named") {
  const NetworkSpec bad_channels{{3, 8, 8}, {Conv2d{4, 8, 3, 1, 1}}};
  CHECK_THROWS_WITH_AS(bad_channels.validate(), doctest::Contains("layer 0"), std::invalid_argument);
  const NetworkSpec early_softmax{{8}, {Dense{8, 4}, Softmax{}, Relu{}}};
  CHECK_THROWS_WITH_AS(early_softmax.validate(), doctest::Contains("softmax"), std::invalid_argument);
  Network net = Network::init({{2, 4, 4}, {Conv2d{2, 2, 3, 1, 1}}}, 0);
  CHECK_THROWS_AS(forward(net, Tensor::zeros({2, 5, 5})), std::invalid_argument);
}

TEST_CASE("softmax outputs form a probability vector") {
  Rng rng(3);
  Network net = Network::init({{6}, {Dense{6, 5}, Softmax{}}}, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor y = forward(net, random_tensor({6}, rng, -4.0f, 4.0f));
    float sum = 0;
    for (float v : y.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0f) < 1e-6f);
  }
}

TEST_CASE("input gradient of a linear map is the column sums of W") {
  Network net = Network::init({{4}, {Dense{4, 3}}}, 0);
  // Integer weights so the expected sums are exact in float.
  for (std::size_t i = 0; i < net.params[0].w.data.size(); ++i)
    net.params[0].w.data[i] = static_cast<float>((static_cast<int>(i) % 7) - 3);
  const Tensor g = input_gradient(net, Tensor::zeros({4}));
  for (int i = 0; i < 4; ++i) {
    float want = 0;
    for (int o = 0; o < 3; ++o) want += net.params[0].w.data[o * 4 + i];
    CHECK(g.data[i] == want);
  }
}

TEST_CASE("input gradient of a 2-layer relu net matches finite differences") {
  Rng rng(42);
  Network net = Network::init({{8}, {Dense{8, 16}, Relu{}, Dense{16, 4}}}, 42);
  const Tensor x = random_tensor({8}, rng);
  check_grad_matches_oracle(net, x);
}

TEST_CASE("input gradient through a softmax head is the zero vector") {
  Rng rng(5);
  Network net = Network::init({{6}, {Dense{6, 4}, Softmax{}}}, 5);
  const Tensor g = input_gradient(net, random_tensor({6}, rng));
  for (float v : g.data) CHECK(std::abs(v) <= 1e-6f);
}

TEST_CASE("finite differences agree with the analytic gradient for every layer kind") {
  struct Case {
    const char* name;
    NetworkSpec spec;
  };
  const std::vector<Case> cases = {
      {"conv", {{2, 8, 8}, {Conv2d{2, 3, 3, 1, 1}}}},
      {"conv_strided", {{2, 9, 9}, {Conv2d{2, 3, 3, 2, 0}}}},
      {"tconv", {{2, 4, 4}, {TConv2d{2, 3, 3, 2, 1, 1}}}},
      {"tconv_k4", {{2, 4, 4}, {TConv2d{2, 3, 4, 2, 1, 0}}}},
      {"dense", {{12}, {Dense{12, 7}}}},
      {"relu_deep", {{2, 6, 6}, {Conv2d{2, 4, 3, 1, 1}, Relu{}, Conv2d{4, 2, 3, 1, 1}}}},
      {"leaky", {{2, 6, 6}, {Conv2d{2, 4, 3, 1, 1}, LeakyRelu{0.2f}, Conv2d{4, 2, 3, 1, 1}}}},
      {"avg_pool", {{2, 8, 8}, {AvgPool{2}}}},
      {"flatten_dense", {{2, 4, 4}, {Flatten{}, Dense{32, 5}}}},
      {"softmax", {{6}, {Dense{6, 4}, Softmax{}}}},
      {"mixed", {{3, 8, 8}, {Conv2d{3, 4, 3, 2, 1}, LeakyRelu{0.1f}, TConv2d{4, 2, 3, 2, 1, 1}, Relu{}, AvgPool{2},
                             Flatten{}, Dense{32, 6}}}},
  };
  int seed = 100;
  for (const auto& c : cases) {
    INFO("layer case ", c.name);
    Rng rng(seed);
    Network net = Network::init(c.spec, seed++);
    const Tensor x = random_tensor(c.spec.input_shape, rng);
    check_grad_matches_oracle(net, x);
  }
}

TEST_CASE("oracle is exact for a linear network") {
  Rng rng(9);
  Network net = Network::init({{6}, {Dense{6, 5}}}, 9);
  const Tensor x = random_tensor({6}, rng);
  const Tensor fd = finite_difference_oracle(net, x, 1e-3);
  const Tensor analytic = input_gradient(net, x);
  check_close(fd, analytic, 0.0, 1e-6);
}

TEST_CASE("oracle at a relu kink: elements with |x_i| < 10h are excluded") {
  Network net = Network::init({{5}, {Relu{}}}, 0);
  const double h = 1e-3;
  Tensor x({5}, {0.5f, 0.0005f, -0.0005f, -0.5f, 0.0f});
  const Tensor fd = finite_difference_oracle(net, x, h);
  const Tensor analytic = input_gradient(net, x);
  for (int i = 0; i < 5; ++i) {
    if (std::abs(x.data[i]) < 10 * h) continue;  // documented kink exclusion
    CHECK(std::abs(fd.data[i] - analytic.data[i]) < 1e-6);
  }
  // The sign-change detector flags exactly the near-zero elements.
  const FdCheck chk = finite_difference_check(net, x, h);
  CHECK(chk.kink == std::vector<std::uint8_t>{0, 1, 1, 0, 1});
}

TEST_CASE("oracle rejects a non-positive step") {
  Network net = Network::init({{3}, {Dense{3, 2}}}, 0);
  CHECK_THROWS_AS(finite_difference_oracle(net, Tensor::zeros({3}), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(finite_difference_oracle(net, Tensor::zeros({3}), -1e-3), std::invalid_argument);
}

namespace {

// Two well-separated 2-D blobs, 100 points each.
Dataset separable_toy_set(std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  for (int i = 0; i < 200; ++i) {
    const int label = i % 2;
    const float cx = label ? 2.0f : -2.0f;
    Tensor x({2}, {cx + rng.normal_f() * 0.5f, cx + rng.normal_f() * 0.5f});
    ds.push_back({std::move(x), label});
  }
  return ds;
}

// Plain gradient-descent logistic regression, the independent separability
// oracle for the toy set.
double logreg_accuracy(const Dataset& ds) {
  double w0 = 0, w1 = 0, b = 0;
  for (int it = 0; it < 2000; ++it) {
    double g0 = 0, g1 = 0, gb = 0;
    for (const auto& rec : ds) {
      const double z = w0 * rec.image.data[0] + w1 * rec.image.data[1] + b;
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double d = p - rec.label;
      g0 += d * rec.image.data[0];
      g1 += d * rec.image.data[1];
      gb += d;
    }
    w0 -= 0.1 * g0 / ds.size();
    w1 -= 0.1 * g1 / ds.size();
    b -= 0.1 * gb / ds.size();
  }
  int correct = 0;
  for (const auto& rec : ds) {
    const double z = w0 * rec.image.data[0] + w1 * rec.image.data[1] + b;
    if ((z > 0) == (rec.label == 1)) ++correct;
  }
  return static_cast<double>(correct) / ds.size();
}

}  // namespace

TEST_CASE("supervised training fits a linearly separable toy set") {
  const Dataset ds = separable_toy_set(42);
  REQUIRE(logreg_accuracy(ds) == 1.0);  // oracle: the set is separable

  Network net = Network::init({{2}, {Dense{2, 8}, Relu{}, Dense{8, 2}, Softmax{}}}, 42);
  TrainConfig cfg;
  cfg.lr = 5e-3f;
  cfg.epochs = 30;
  cfg.batch_size = 32;
  cfg.seed = 42;
  train_supervised(net, ds, cfg);
  CHECK(evaluate_classifier(net, ds).accuracy >= 0.99);
}

TEST_CASE("training rejects bad configs and data") {
  Network net = Network::init({{2}, {Dense{2, 2}, Softmax{}}}, 0);
  Dataset ds = {{Tensor({2}, {0, 1}), 0}, {Tensor({2}, {1, 0}), 1}};
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train_supervised(net, ds, cfg), std::invalid_argument);
  cfg.epochs = 1;
  CHECK_THROWS_AS(train_supervised(net, Dataset{}, cfg), std::invalid_argument);
  Dataset bad = {{Tensor({2}, {0, 1}), 2}};
  CHECK_THROWS_AS(train_supervised(net, bad, cfg), std::invalid_argument);
}

TEST_CASE("training with a fixed seed is bit-reproducible") {
  const Dataset ds = separable_toy_set(1);
  TrainConfig cfg;
  cfg.lr = 5e-3f;
  cfg.epochs = 8;
  cfg.seed = 9;
  cfg.augment_crop = cfg.augment_flip = false;

  Network a = Network::init({{2}, {Dense{2, 4}, Relu{}, Dense{4, 2}, Softmax{}}}, 9);
  Network b = Network::init({{2}, {Dense{2, 4}, Relu{}, Dense{4, 2}, Softmax{}}}, 9);
  const TrainResult ra = train_supervised(a, ds, cfg);
  const TrainResult rb = train_supervised(b, ds, cfg);
  CHECK(ra.loss_history == rb.loss_history);
  CHECK(a.flat_weights() == b.flat_weights());
  CHECK(ra.loss_history.size() == 8);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  Network net = Network::init({{3, 8, 8}, {Conv2d{3, 4, 3, 2, 1}, Relu{}, Flatten{}, Dense{64, 4}, Softmax{}}}, 77);
  CheckpointMeta meta{77, 12, 0.25f, "unit"};
  const auto bytes = save_checkpoint(net, meta);
  const LoadedCheckpoint lc = load_checkpoint(bytes);
  CHECK(lc.net.flat_weights() == net.flat_weights());
  CHECK(lc.meta.seed == 77);
  CHECK(lc.meta.epochs == 12);
  CHECK(lc.meta.name == "unit");
  CHECK(network_spec_to_json(lc.net.spec) == network_spec_to_json(net.spec));
}

TEST_CASE("checkpoint loader reports distinct failure kinds") {
  Network net = Network::init({{4}, {Dense{4, 2}}}, 1);
  auto bytes = save_checkpoint(net, {});

  SUBCASE("truncated by one byte") {
    bytes.pop_back();
    try {
      load_checkpoint(bytes);
      FAIL("expected truncation error");
    } catch (const CheckpointError& e) {
      CHECK(e.kind() == CheckpointError::Kind::Truncated);
    }
  }
  SUBCASE("wrong magic") {
    bytes[0] = 'X';
    try {
      load_checkpoint(bytes);
      FAIL("expected magic error");
    } catch (const CheckpointError& e) {
      CHECK(e.kind() == CheckpointError::Kind::BadMagic);
    }
  }
  SUBCASE("wrong version") {
    bytes[4] = 9;
    try {
      load_checkpoint(bytes);
      FAIL("expected version error");
    } catch (const CheckpointError& e) {
      CHECK(e.kind() == CheckpointError::Kind::BadVersion);
    }
  }
  SUBCASE("weight count mismatch") {
    // Patch the little-endian u64 weight count that follows the header.
    std::uint32_t header_len = 0;
    std::memcpy(&header_len, bytes.data() + 6, 4);
    const std::size_t count_off = 10 + header_len;
    bytes[count_off] = static_cast<std::uint8_t>(bytes[count_off] + 1);
    try {
      load_checkpoint(bytes);
      FAIL("expected weight count error");
    } catch (const CheckpointError& e) {
      CHECK(e.kind() == CheckpointError::Kind::WeightCountMismatch);
    }
  }
}

TEST_CASE("augmentations keep shape and stay deterministic per seed") {
  Rng rng_img(4);
  const Tensor img = random_tensor({3, 8, 8}, rng_img, 0.0f, 1.0f);
  TrainConfig cfg;
  cfg.augment_crop = cfg.augment_flip = cfg.augment_blur = cfg.augment_quantize = true;
  Rng r1(5), r2(5);
  const Tensor a = augment_image(img, cfg, r1);
  const Tensor b = augment_image(img, cfg, r2);
  CHECK(a.shape == img.shape);
  CHECK(a.data == b.data);
}
