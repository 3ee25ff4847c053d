#pragma once

#include <cstdint>
#include <random>

namespace partfield {

/// Seeded RNG wrapper. Every sampling site in the project takes one of
/// these explicitly; determinism criteria depend on it.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double a = 0.0, double b = 1.0) {
        return std::uniform_real_distribution<double>(a, b)(gen_);
    }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(gen_);
    }
    /// Inclusive range.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(gen_);
    }
    std::uint64_t next() { return gen_(); }

    /// Deterministic independent substream (splitmix-style mix of the
    /// parent's next output with a stream tag).
    Rng fork(std::uint64_t stream) {
        std::uint64_t z = next() + 0x9e3779b97f4a7c15ull * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return Rng(z ^ (z >> 31));
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

}  // namespace partfield
