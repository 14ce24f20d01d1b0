#include "masa/train/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "masa/core/error.hpp"

namespace masa {

std::vector<SynthSample> synth_dataset(std::uint64_t seed, std::size_t n, std::size_t resolution,
                                       std::size_t num_classes, SynthOptions options) {
  if (n == 0) throw UsageError("synthetic dataset needs at least one sample");
  if (num_classes == 0 || resolution == 0) throw UsageError("synthetic dataset needs classes and a resolution");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, options.noise_sigma);

  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % num_classes;
  std::shuffle(labels.begin(), labels.end(), rng);

  const double freq = 2.0 * std::numbers::pi * 2.0 / static_cast<double>(resolution);
  const double center = 0.5 * static_cast<double>(num_classes - 1);
  std::vector<SynthSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = labels[i];
    const double theta = std::numbers::pi * static_cast<double>(c) / static_cast<double>(num_classes);
    const double ct = std::cos(theta), st = std::sin(theta);
    const double phase = phase_dist(rng);
    const double offset = (static_cast<double>(c) - center) * options.brightness_step;
    std::vector<double> px(3 * resolution * resolution);
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t y = 0; y < resolution; ++y)
        for (std::size_t x = 0; x < resolution; ++x) {
          const double t = freq * (static_cast<double>(x) * ct + static_cast<double>(y) * st);
          px[(ch * resolution + y) * resolution + x] = std::cos(t + phase) + offset + noise(rng);
        }
    out.push_back({Tensor::from({3, resolution, resolution}, std::move(px)), c});
  }
  return out;
}

}  // namespace masa
