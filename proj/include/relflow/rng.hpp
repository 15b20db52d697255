#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace relflow {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Stage tags so that each randomized pipeline stage draws from its own
/// stream derived from the master seed. Changing one stage's consumption
/// cannot reshuffle another's.
enum class Stage : std::uint64_t {
    Split = 1,
    AeInit = 2,
    AeShuffle = 3,
    FlowInit = 4,
    FlowShuffle = 5,
    Subgroups = 6,
    Synonyms = 7,
    NoiseTrain = 8,
    NoiseTest = 9,
    Synth = 10,
};

inline std::uint64_t derive_seed(std::uint64_t master, Stage stage) {
    return splitmix64(master + static_cast<std::uint64_t>(stage) * 0x9e3779b97f4a7c15ULL);
}

/// Deterministic random source. All distributions are implemented on top of
/// the raw mt19937_64 stream (whose output sequence is fixed by the
/// standard), so results are bit-identical across platforms and library
/// versions for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; the spare value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform(); // (0, 1], keeps log finite
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Uniform integer in [0, n). Lemire multiply-shift; n must be > 0.
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(eng_()) * n) >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace relflow
