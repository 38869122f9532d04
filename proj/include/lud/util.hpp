#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace lud {

// 64-bit FNV-1a, used for artifact manifests.
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

// Uniform integer in [0, n) drawn from the engine's raw output. Pinned here so
// corpora and shuffles do not depend on libstdc++ distribution internals.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);

// Fisher-Yates with uniform_index draws; reproducible across toolchains.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  if (v.size() < 2) return;
  for (std::size_t i = v.size() - 1; i > 0; --i) {
    std::size_t j = uniform_index(rng, i + 1);
    std::swap(v[i], v[j]);
  }
}

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace lud
