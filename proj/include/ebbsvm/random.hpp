#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace ebbsvm {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014) applied to `state + 0x9e3779b97f4a7c15`.
std::uint64_t splitmix64(std::uint64_t state);

/// Child seed for a task identified by `path`, e.g. {theta_index, replicate, attempt}.
/// seed_0 = master; seed_{k+1} = splitmix64(seed_k ^ splitmix64(path_k)).
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

/// Random stream used by every sampling routine.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Standard distributions are implementation defined, so bounded draws
/// use rejection on the raw 64-bit output and shuffling is an explicit
/// Fisher-Yates pass from the back; both are reproducible in any language.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);

  /// Uniform double in [0, 1) from the top 53 bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (both variates used in turn).
  double normal();

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      using std::swap;
      swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ebbsvm
