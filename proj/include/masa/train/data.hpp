#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "masa/core/tensor.hpp"

namespace masa {

struct SynthSample {
  Tensor image;  // [3, R, R]
  std::size_t label = 0;
};

struct SynthOptions {
  double noise_sigma = 0.2;
  // Per-class brightness step; class c is offset by (c - (C-1)/2) * step.
  double brightness_step = 1.0;
};

// Class c draws an oriented cosine grating at angle pi * c / C with a random
// phase, shifted by a class brightness offset, plus Gaussian pixel noise.
// Labels are stratified (i mod C) and then shuffled; same seed, same data.
std::vector<SynthSample> synth_dataset(std::uint64_t seed, std::size_t n, std::size_t resolution,
                                       std::size_t num_classes, SynthOptions options = {});

}  // namespace masa
