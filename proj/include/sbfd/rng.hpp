#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sbfd {

// Deterministic 64-bit generator (splitmix64). The <random> distributions are
// implementation-defined, which would break the byte-identical checkpoint
// contract, so all sampling is done by hand.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the second value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 == 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * kPi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Uniform index in [0, n); multiply-shift, bias below 2^-64.
    std::size_t index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("Rng::index: n must be positive");
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n)) >> 64);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
    }

    // Independent sub-seed for component `stream` of a run seeded by `root`.
    static std::uint64_t derive(std::uint64_t root, std::uint64_t stream) {
        Rng r(root ^ (0xa0761d6478bd642full + stream * 0xe7037ed1a0b428dbull));
        r.next_u64();
        return r.next_u64();
    }

  private:
    static constexpr double kPi = 3.14159265358979323846;
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace sbfd
