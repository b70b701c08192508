#pragma once

#include <cstdint>
#include <random>

#include "cspeech/nn/layers.hpp"

namespace cspeech {

// SplitMix64 finalizer; derives independent per-stream seeds from one master
// seed so parallel workers stay reproducible regardless of scheduling.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;
using nn::shuffle;
using nn::uniform01;
using nn::uniform_index;

}  // namespace cspeech
