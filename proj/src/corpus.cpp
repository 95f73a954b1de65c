#include "defgate/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "defgate/autodiff.hpp"
#include "defgate/rng.hpp"
#include "defgate/train.hpp"
#include "defgate/zoo.hpp"

namespace defgate {

namespace {

constexpr int kSize = 32;

struct Vec2 {
  float x, y;
};

float sd_disc(Vec2 p, float r) { return std::sqrt(p.x * p.x + p.y * p.y) - r; }

float sd_square(Vec2 p, float r, float rot) {
  const float c = std::cos(rot), s = std::sin(rot);
  const Vec2 q{c * p.x + s * p.y, -s * p.x + c * p.y};
  return std::max(std::abs(q.x), std::abs(q.y)) - r;
}

float sd_triangle(Vec2 p, float r, float rot) {
  const float c = std::cos(rot), s = std::sin(rot);
  Vec2 q{c * p.x + s * p.y, -s * p.x + c * p.y};
  const float k = std::sqrt(3.0f);
  q.x = std::abs(q.x) - r;
  q.y = q.y + r / k;
  if (q.x + k * q.y > 0.0f) q = Vec2{(q.x - k * q.y) / 2.0f, (-k * q.x - q.y) / 2.0f};
  q.x -= std::clamp(q.x, -2.0f * r, 0.0f);
  return -std::sqrt(q.x * q.x + q.y * q.y) * (q.y > 0 ? 1.0f : -1.0f);
}

float sd_cross(Vec2 p, float r, float rot) {
  const float c = std::cos(rot), s = std::sin(rot);
  const Vec2 q{c * p.x + s * p.y, -s * p.x + c * p.y};
  const float w = 0.35f * r;
  const float bar_h = std::max(std::abs(q.x) - r, std::abs(q.y) - w);
  const float bar_v = std::max(std::abs(q.y) - r, std::abs(q.x) - w);
  return std::min(bar_h, bar_v);
}

float shape_sdf(int cls, Vec2 p, float r, float rot) {
  switch (cls) {
    case 0: return sd_disc(p, r);
    case 1: return sd_square(p, r, rot);
    case 2: return sd_triangle(p, r, rot);
    default: return sd_cross(p, r, rot);
  }
}

struct Shape {
  int cls;
  float cx, cy, r, rot;
  float color[3];
};

void composite_shape(Tensor& img, const Shape& sh) {
  // Anti-aliased analytic coverage, one pixel of edge smoothing.
  for (int y = 0; y < kSize; ++y) {
    for (int x = 0; x < kSize; ++x) {
      const Vec2 p{static_cast<float>(x) + 0.5f - sh.cx, static_cast<float>(y) + 0.5f - sh.cy};
      const float d = shape_sdf(sh.cls, p, sh.r, sh.rot);
      const float alpha = std::clamp(0.5f - d, 0.0f, 1.0f);
      if (alpha <= 0.0f) continue;
      for (int c = 0; c < 3; ++c) {
        float& v = img.data[(static_cast<std::size_t>(c) * kSize + y) * kSize + x];
        v = v + alpha * (sh.color[c] - v);
      }
    }
  }
}

void clamp01(Tensor& t) {
  for (auto& v : t.data) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace

std::string generator_kind_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::ProceduralReal: return "procedural_real";
    case GeneratorKind::AttackGeneratorS1: return "attack_generator_S1";
    case GeneratorKind::GanLikeS2: return "gan_like_S2";
    default: return "diffusion_like_S3";
  }
}

LabeledImage render_scene(std::uint64_t seed, std::uint64_t index) {
  Rng rng = Rng(seed).child(index);

  // 1/f-spectrum background: a base color plus random-phase plane waves with
  // amplitude falling off as 1/|f|, all evaluated per pixel at native
  // resolution (nothing is rendered coarse and upsampled).
  float base[3];
  for (auto& b : base) b = rng.uniform_f(0.15f, 0.85f);
  constexpr int kWaves = 14;
  struct Wave {
    float fx, fy, phase, amp, dir[3];
  };
  Wave waves[kWaves];
  for (auto& w : waves) {
    const float mag = rng.uniform_f(0.7f, 8.0f);
    const float ang = rng.uniform_f(0.0f, 2.0f * static_cast<float>(M_PI));
    w.fx = mag * std::cos(ang);
    w.fy = mag * std::sin(ang);
    w.phase = rng.uniform_f(0.0f, 2.0f * static_cast<float>(M_PI));
    w.amp = rng.uniform_f(0.04f, 0.12f) / mag;
    for (auto& d : w.dir) d = rng.uniform_f(-1.0f, 1.0f);
  }

  Tensor img = Tensor::zeros({3, kSize, kSize});
  for (int y = 0; y < kSize; ++y) {
    for (int x = 0; x < kSize; ++x) {
      float px[3] = {base[0], base[1], base[2]};
      for (const auto& w : waves) {
        const float s =
            std::sin(2.0f * static_cast<float>(M_PI) * (w.fx * x + w.fy * y) / static_cast<float>(kSize) + w.phase);
        for (int c = 0; c < 3; ++c) px[c] += w.amp * w.dir[c] * s;
      }
      for (int c = 0; c < 3; ++c) img.data[(static_cast<std::size_t>(c) * kSize + y) * kSize + x] = px[c];
    }
  }

  auto pick_contrasting_color = [&](float out[3]) {
    for (int attempt = 0; attempt < 16; ++attempt) {
      float dist = 0;
      for (int c = 0; c < 3; ++c) {
        out[c] = rng.uniform_f(0.0f, 1.0f);
        const float d = out[c] - base[c];
        dist += d * d;
      }
      if (dist > 0.16f) return;
    }
  };

  // Small distractors first, dominant shape on top. The label is the class of
  // the dominant shape, which is at least twice the radius of any distractor.
  const int label = rng.uniform_int(4);
  const int distractors = rng.uniform_int(3);
  for (int i = 0; i < distractors; ++i) {
    Shape d;
    d.cls = rng.uniform_int(4);
    d.cx = rng.uniform_f(4.0f, 28.0f);
    d.cy = rng.uniform_f(4.0f, 28.0f);
    d.r = rng.uniform_f(1.5f, 3.0f);
    d.rot = rng.uniform_f(0.0f, 2.0f * static_cast<float>(M_PI));
    pick_contrasting_color(d.color);
    composite_shape(img, d);
  }
  Shape main;
  main.cls = label;
  main.cx = rng.uniform_f(11.0f, 21.0f);
  main.cy = rng.uniform_f(11.0f, 21.0f);
  main.r = rng.uniform_f(6.0f, 10.0f);
  main.rot = rng.uniform_f(0.0f, 2.0f * static_cast<float>(M_PI));
  pick_contrasting_color(main.color);
  composite_shape(img, main);

  clamp01(img);
  return {std::move(img), label};
}

Dataset gen_real(std::uint64_t seed, int n) {
  if (n < 0) throw std::invalid_argument("sample count must be non-negative");
  Dataset out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(render_scene(seed, static_cast<std::uint64_t>(i)));
  return out;
}

namespace {

Tensor noise_batch(const std::vector<int>& sample_shape, int n, Rng& rng) {
  std::vector<int> shape = {n};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Tensor z = Tensor::zeros(shape);
  for (auto& v : z.data) v = rng.normal_f();
  return z;
}

Tensor stack_images(std::span<const LabeledImage> set, std::span<const int> idx) {
  const auto& s = set[idx[0]].image.shape;
  std::vector<int> shape = {static_cast<int>(idx.size())};
  shape.insert(shape.end(), s.begin(), s.end());
  Tensor out = Tensor::zeros(shape);
  const std::int64_t n = shape_numel(s);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(set[idx[i]].image.data.begin(), set[idx[i]].image.data.end(), out.data.begin() + i * n);
  return out;
}

float sigmoid(float x) { return x >= 0 ? 1.0f / (1.0f + std::exp(-x)) : std::exp(x) / (1.0f + std::exp(x)); }

}  // namespace

GanArtifacts train_gan_like(std::span<const LabeledImage> reals, std::uint64_t seed, const GanTrainOptions& opt) {
  if (reals.size() < 500) {
    throw std::invalid_argument("gan-like training needs at least 500 real images, got " +
                                std::to_string(reals.size()));
  }
  Network gen = Network::init(generator_spec(), splitmix64(seed ^ 0x6A11));
  Network disc = Network::init(discriminator_spec(), splitmix64(seed ^ 0xD15C));
  Adam opt_g(gen), opt_d(disc);
  Rng rng(seed);

  const auto noise_shape = generator_noise_shape();
  std::vector<int> order(reals.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
    for (std::size_t start = 0; start + opt.batch_size <= order.size(); start += opt.batch_size) {
      const int n = opt.batch_size;
      const Tensor real = stack_images(reals, std::span(order).subspan(start, n));
      Tensor z = noise_batch(noise_shape, n, rng);

      // Generator forward; samples are clamped to [0,1] before the
      // discriminator sees them, so the clamp mask gates the G update below.
      Trace gtrace = forward_trace(gen, z);
      Tensor fake = gtrace.output();
      std::vector<std::uint8_t> in_range(fake.data.size());
      for (std::size_t i = 0; i < fake.data.size(); ++i) {
        in_range[i] = fake.data[i] > 0.0f && fake.data[i] < 1.0f;
        fake.data[i] = std::clamp(fake.data[i], 0.0f, 1.0f);
      }

      // Discriminator step: logistic loss, real -> 1, fake -> 0.
      {
        Trace tr = forward_trace(disc, real);
        Tensor gr = Tensor::zeros(tr.output().shape);
        for (int s = 0; s < n; ++s) gr.data[s] = (sigmoid(tr.output().data[s]) - 1.0f) / static_cast<float>(2 * n);
        Grads greal = backward(disc, tr, gr, false, true);

        Trace tf = forward_trace(disc, fake);
        Tensor gf = Tensor::zeros(tf.output().shape);
        for (int s = 0; s < n; ++s) gf.data[s] = sigmoid(tf.output().data[s]) / static_cast<float>(2 * n);
        Grads gfake = backward(disc, tf, gf, false, true);

        for (std::size_t li = 0; li < greal.params.size(); ++li) {
          for (std::size_t k = 0; k < greal.params[li].w.data.size(); ++k)
            greal.params[li].w.data[k] += gfake.params[li].w.data[k];
          for (std::size_t k = 0; k < greal.params[li].b.data.size(); ++k)
            greal.params[li].b.data[k] += gfake.params[li].b.data[k];
        }
        opt_d.step(disc, greal.params, opt.lr);
      }

      // Generator step: non-saturating loss against the updated discriminator.
      {
        Trace tf = forward_trace(disc, fake);
        Tensor gl = Tensor::zeros(tf.output().shape);
        for (int s = 0; s < n; ++s) gl.data[s] = (sigmoid(tf.output().data[s]) - 1.0f) / static_cast<float>(n);
        Grads dins = backward(disc, tf, gl, true, false);
        Tensor gimg = std::move(*dins.input);
        for (std::size_t i = 0; i < gimg.data.size(); ++i)
          if (!in_range[i]) gimg.data[i] = 0.0f;
        Grads gg = backward(gen, gtrace, gimg, false, true);
        opt_g.step(gen, gg.params, opt.lr);
      }
    }
  }

  GanArtifacts out;
  out.generator = TrainedGenerator{GeneratorKind::GanLikeS2, std::move(gen), {}, seed, true};
  out.discriminator = std::move(disc);
  return out;
}

namespace {

struct Schedule {
  std::vector<float> abar;  // cumulative product of (1 - beta_t), 1-indexed via abar[t-1]
};

Schedule make_schedule(const DiffusionSchedule& s) {
  Schedule out;
  float prod = 1.0f;
  for (int t = 0; t < s.train_steps; ++t) {
    const float beta =
        s.beta_min + (s.beta_max - s.beta_min) * static_cast<float>(t) / static_cast<float>(std::max(1, s.train_steps - 1));
    prod *= 1.0f - beta;
    out.abar.push_back(prod);
  }
  return out;
}

}  // namespace

TrainedGenerator train_diffusion_like(std::span<const LabeledImage> reals, std::uint64_t seed,
                                      const DiffusionTrainOptions& opt) {
  if (reals.size() < 500) {
    throw std::invalid_argument("diffusion-like training needs at least 500 real images, got " +
                                std::to_string(reals.size()));
  }
  TrainedGenerator out;
  out.kind = GeneratorKind::DiffusionLikeS3;
  out.seed = seed;
  out.net = Network::init(denoiser_spec(), splitmix64(seed ^ 0xDDD1));
  const Schedule sched = make_schedule(out.schedule);

  Adam optim(out.net);
  Rng rng(seed);
  std::vector<int> order(reals.size());
  std::iota(order.begin(), order.end(), 0);
  const std::int64_t numel = shape_numel(out.net.spec.input_shape);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
    for (std::size_t start = 0; start + opt.batch_size <= order.size(); start += opt.batch_size) {
      const int n = opt.batch_size;
      Tensor x0 = stack_images(reals, std::span(order).subspan(start, n));
      for (auto& v : x0.data) v = 2.0f * v - 1.0f;

      Tensor eps = Tensor::zeros(x0.shape);
      for (auto& v : eps.data) v = rng.normal_f();
      Tensor xt = Tensor::zeros(x0.shape);
      for (int s = 0; s < n; ++s) {
        const int t = 1 + rng.uniform_int(out.schedule.train_steps);
        const float ab = sched.abar[t - 1];
        const float c0 = std::sqrt(ab), c1 = std::sqrt(1.0f - ab);
        for (std::int64_t i = 0; i < numel; ++i) {
          xt.data[s * numel + i] = c0 * x0.data[s * numel + i] + c1 * eps.data[s * numel + i];
        }
      }

      Trace tr = forward_trace(out.net, xt);
      Tensor grad = Tensor::zeros(tr.output().shape);
      const float scale = 2.0f / static_cast<float>(grad.data.size());
      for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] = scale * (tr.output().data[i] - eps.data[i]);
      Grads g = backward(out.net, tr, grad, false, true);
      optim.step(out.net, g.params, opt.lr);
    }
  }
  out.trained = true;
  return out;
}

TrainedGenerator wrap_attack_generator(Network net, std::uint64_t seed) {
  net.spec.validate();
  bool has_tconv = false;
  for (const auto& l : net.spec.layers) has_tconv |= std::holds_alternative<TConv2d>(l);
  if (!has_tconv) throw std::invalid_argument("attack generator must contain a transposed-conv upsampling layer");
  return TrainedGenerator{GeneratorKind::AttackGeneratorS1, std::move(net), {}, seed, true};
}

Dataset sample_fakes(const TrainedGenerator& gen, int n, std::uint64_t seed) {
  if (!gen.trained) throw std::invalid_argument("generator has not been trained");
  if (n < 0) throw std::invalid_argument("sample count must be non-negative");
  Dataset out;
  out.reserve(n);
  constexpr int kChunk = 64;
  const Rng base(seed);

  if (gen.kind == GeneratorKind::DiffusionLikeS3) {
    const Schedule sched = make_schedule(gen.schedule);
    // Evenly spaced descending timestep subsequence, deterministic sampler.
    std::vector<int> ts;
    for (int i = 0; i < gen.schedule.sample_steps; ++i) {
      ts.push_back(gen.schedule.train_steps -
                   i * std::max(1, gen.schedule.train_steps / gen.schedule.sample_steps));
    }
    const std::int64_t numel = shape_numel(gen.net.spec.input_shape);
    for (int start = 0; start < n; start += kChunk) {
      const int m = std::min(kChunk, n - start);
      std::vector<int> shape = {m};
      const auto& in_shape = gen.net.spec.input_shape;
      shape.insert(shape.end(), in_shape.begin(), in_shape.end());
      Tensor x = Tensor::zeros(shape);
      for (int s = 0; s < m; ++s) {
        Rng r = base.child(static_cast<std::uint64_t>(start + s));
        for (std::int64_t i = 0; i < numel; ++i) x.data[s * numel + i] = r.normal_f();
      }
      for (std::size_t step = 0; step < ts.size(); ++step) {
        const int t = ts[step];
        const float ab = sched.abar[t - 1];
        const float ab_next = step + 1 < ts.size() ? sched.abar[ts[step + 1] - 1] : 1.0f;
        const Tensor eps_hat = forward(gen.net, x);
        const float inv_sq = 1.0f / std::sqrt(ab), c1 = std::sqrt(1.0f - ab);
        const float n0 = std::sqrt(ab_next), n1 = std::sqrt(1.0f - ab_next);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
          const float x0 = std::clamp((x.data[i] - c1 * eps_hat.data[i]) * inv_sq, -1.5f, 1.5f);
          x.data[i] = n0 * x0 + n1 * eps_hat.data[i];
        }
      }
      for (int s = 0; s < m; ++s) {
        Tensor img = Tensor::zeros(gen.net.spec.input_shape);
        for (std::int64_t i = 0; i < numel; ++i) img.data[i] = std::clamp((x.data[s * numel + i] + 1.0f) / 2.0f, 0.0f, 1.0f);
        out.push_back({std::move(img), 1});
      }
    }
    return out;
  }

  // Noise-to-image generators (S1 attack export, S2 gan-like).
  const auto noise_shape = gen.net.spec.input_shape;
  const std::int64_t noise_n = shape_numel(noise_shape);
  const std::int64_t img_n = shape_numel(gen.net.spec.output_shape());
  for (int start = 0; start < n; start += kChunk) {
    const int m = std::min(kChunk, n - start);
    std::vector<int> shape = {m};
    shape.insert(shape.end(), noise_shape.begin(), noise_shape.end());
    Tensor z = Tensor::zeros(shape);
    for (int s = 0; s < m; ++s) {
      Rng r = base.child(static_cast<std::uint64_t>(start + s));
      for (std::int64_t i = 0; i < noise_n; ++i) z.data[s * noise_n + i] = r.normal_f();
    }
    const Tensor imgs = forward(gen.net, z);
    for (int s = 0; s < m; ++s) {
      Tensor img = Tensor::zeros(gen.net.spec.output_shape());
      for (std::int64_t i = 0; i < img_n; ++i) img.data[i] = std::clamp(imgs.data[s * img_n + i], 0.0f, 1.0f);
      out.push_back({std::move(img), 1});
    }
  }
  return out;
}

std::vector<DetectorSubset> build_detector_subsets(const TrainedGenerator& s1, const TrainedGenerator& s2,
                                                   const TrainedGenerator& s3, std::span<const LabeledImage> reals,
                                                   int n_per_side, std::uint64_t seed) {
  const TrainedGenerator* gens[3] = {&s1, &s2, &s3};
  const char* tags[3] = {"S1", "S2", "S3"};
  for (const auto* g : gens) {
    if (!g->trained) throw std::invalid_argument("all fake generators must be trained");
  }
  if (static_cast<std::int64_t>(reals.size()) < 3LL * n_per_side) {
    throw std::invalid_argument("need at least " + std::to_string(3LL * n_per_side) + " reals for disjoint subsets, got " +
                                std::to_string(reals.size()));
  }
  std::vector<DetectorSubset> out;
  for (int i = 0; i < 3; ++i) {
    DetectorSubset sub;
    sub.source_tag = tags[i];
    sub.data = sample_fakes(*gens[i], n_per_side, splitmix64(seed ^ static_cast<std::uint64_t>(i + 1)));
    for (int j = 0; j < n_per_side; ++j) {
      // Disjoint slice of the real pool, relabeled real=0.
      sub.data.push_back({reals[static_cast<std::size_t>(i) * n_per_side + j].image, 0});
    }
    out.push_back(std::move(sub));
  }
  return out;
}

}  // namespace defgate
