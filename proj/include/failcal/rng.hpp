#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>

namespace failcal {

/// Derives an independent seed from a master seed and a key path.
///
/// Each key is folded in with a SplitMix64 finalizer, so
/// derive_seed(s, {chain, block}) is a pure function of its inputs and
/// serial and parallel executions that use the same keys see the same
/// streams. Keys used by the library:
///   {stream::calibration, chain}, {stream::classifier, chain},
///   {stream::gate, chain}, {stream::bmatrix, row, col}, {stream::toy}.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys);

namespace stream {
inline constexpr std::uint64_t calibration = 0x63616c69;
inline constexpr std::uint64_t classifier = 0x636c6173;
inline constexpr std::uint64_t gate = 0x67617465;
inline constexpr std::uint64_t bmatrix = 0x626d6174;
inline constexpr std::uint64_t toy = 0x746f7921;
inline constexpr std::uint64_t design = 0x64657369;
}  // namespace stream

/// Pseudo-random source used by every sampler.
///
/// Wraps std::mt19937_64 and derives variates without std:: distribution
/// objects, so a draw sequence depends only on the engine state (which can be
/// saved and restored for checkpoints).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    /// Uniform on the open interval (0, 1).
    double uniform();
    /// Standard normal (Marsaglia polar method, one variate per call).
    double normal();
    /// Exponential with the given rate.
    double exponential(double rate);
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    std::string save() const;
    void restore(const std::string &state);

    std::mt19937_64 &engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace failcal
