#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "defgate/data.hpp"
#include "defgate/net.hpp"

namespace defgate {

// 3×32×32 images in [0,1]. Real scenes are rendered analytically per pixel
// (no upsampling anywhere); every fake source runs through at least one
// transposed-conv upsampling layer.

enum class GeneratorKind { ProceduralReal, AttackGeneratorS1, GanLikeS2, DiffusionLikeS3 };

std::string generator_kind_name(GeneratorKind kind);

// Diffusion schedule parameters for the S3 sampler.
struct DiffusionSchedule {
  int train_steps = 50;
  int sample_steps = 10;
  float beta_min = 0.01f;
  float beta_max = 0.30f;
};

struct TrainedGenerator {
  GeneratorKind kind = GeneratorKind::GanLikeS2;
  Network net;  // S1/S2: noise->image generator; S3: denoiser
  DiffusionSchedule schedule;  // used by S3 only
  std::uint64_t seed = 0;
  bool trained = false;
};

// n procedural 4-class scenes (anti-aliased shapes over 1/f-spectrum
// backgrounds), victim label = dominant shape class. Deterministic per seed;
// parallel-safe because each sample draws from its own counter-derived
// stream.
Dataset gen_real(std::uint64_t seed, int n);

// Renders one scene; exposed for inspection tooling.
LabeledImage render_scene(std::uint64_t seed, std::uint64_t index);

struct GanArtifacts {
  TrainedGenerator generator;      // kind = GanLikeS2
  Network discriminator;           // reused as the transformation model
};

struct GanTrainOptions {
  int epochs = 10;
  int batch_size = 64;
  float lr = 2e-4f;
};

// Small adversarial generator/discriminator pair; needs at least 500 reals.
GanArtifacts train_gan_like(std::span<const LabeledImage> reals, std::uint64_t seed, const GanTrainOptions& opt = {});

struct DiffusionTrainOptions {
  int epochs = 8;
  int batch_size = 64;
  float lr = 1e-3f;
};

// Tiny noise-prediction denoiser over a short schedule; needs >= 500 reals.
TrainedGenerator train_diffusion_like(std::span<const LabeledImage> reals, std::uint64_t seed,
                                      const DiffusionTrainOptions& opt = {});

// Wraps a checkpointed attack generator as fake source S1.
TrainedGenerator wrap_attack_generator(Network net, std::uint64_t seed);

// n fake images (label = 1), clamped to [0,1], deterministic per (gen, seed).
Dataset sample_fakes(const TrainedGenerator& gen, int n, std::uint64_t seed);

struct DetectorSubset {
  std::string source_tag;  // S1 | S2 | S3
  Dataset data;            // n fakes (label 1) + n reals (label 0)
};

// One balanced subset per fake source; the real halves are disjoint slices of
// `reals`.
std::vector<DetectorSubset> build_detector_subsets(const TrainedGenerator& s1, const TrainedGenerator& s2,
                                                   const TrainedGenerator& s3, std::span<const LabeledImage> reals,
                                                   int n_per_side, std::uint64_t seed);

}  // namespace defgate
