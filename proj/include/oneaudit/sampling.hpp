#pragma once

// Seeded random streams of card indices.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "oneaudit/error.hpp"

namespace oneaudit {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of replication `index` under `master`: two rounds of splitmix64 so
/// neighbouring indices give unrelated streams.
inline std::uint64_t replication_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

/// mt19937_64 plus an unbiased bounded draw that does not depend on the
/// standard library's distribution implementation, so streams replay across
/// toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return static_cast<std::size_t>(r % bound);
    }
  }

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

/// Source of card indices consumed by an audit; nullopt ends the stream.
template <class S>
concept SampleSource = requires(S s) {
  { s.next() } -> std::same_as<std::optional<std::size_t>>;
};

/// Uniform draws with replacement, at most `cap` of them.
class IidSource {
 public:
  IidSource(std::size_t population_size, std::size_t cap, std::uint64_t seed)
      : n_(population_size), cap_(cap), rng_(seed) {
    if (n_ == 0) throw Error(ErrorCode::InvalidConfig, "cannot sample from an empty population");
  }

  std::optional<std::size_t> next() {
    if (drawn_ >= cap_) return std::nullopt;
    ++drawn_;
    return rng_.uniform_index(n_);
  }

 private:
  std::size_t n_;
  std::size_t cap_;
  std::size_t drawn_ = 0;
  Rng rng_;
};

/// Prefix of a uniform random permutation, generated lazily by Fisher-Yates
/// with the displaced entries kept in a sparse map.
class PermutationSource {
 public:
  PermutationSource(std::size_t population_size, std::size_t cap, std::uint64_t seed)
      : n_(population_size), cap_(std::min(cap, population_size)), rng_(seed) {
    if (n_ == 0) throw Error(ErrorCode::InvalidConfig, "cannot sample from an empty population");
  }

  std::optional<std::size_t> next() {
    if (drawn_ >= cap_) return std::nullopt;
    const std::size_t j = drawn_ + rng_.uniform_index(n_ - drawn_);
    const std::size_t picked = at(j);
    displaced_[j] = at(drawn_);
    ++drawn_;
    return picked;
  }

 private:
  std::size_t at(std::size_t i) const {
    auto it = displaced_.find(i);
    return it == displaced_.end() ? i : it->second;
  }

  std::size_t n_;
  std::size_t cap_;
  std::size_t drawn_ = 0;
  Rng rng_;
  std::unordered_map<std::size_t, std::size_t> displaced_;
};

/// Replays a pre-drawn stream.
class SpanSource {
 public:
  explicit SpanSource(std::span<const std::size_t> stream) : stream_(stream) {}

  std::optional<std::size_t> next() {
    if (pos_ >= stream_.size()) return std::nullopt;
    return stream_[pos_++];
  }

 private:
  std::span<const std::size_t> stream_;
  std::size_t pos_ = 0;
};

template <SampleSource S>
std::vector<std::size_t> collect(S source) {
  std::vector<std::size_t> out;
  while (auto i = source.next()) out.push_back(*i);
  return out;
}

}  // namespace oneaudit
