#ifndef TVHC_RNG_HPP
#define TVHC_RNG_HPP

#include <cstdint>
#include <cmath>
#include <limits>
#include <random>

namespace tvhc {

enum class StreamKind : std::uint64_t { interarrival = 1, service = 2, auxiliary = 3 };

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed for an independent substream identified by (seed, replication, class, kind).
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t replication,
                                    std::uint64_t cls, StreamKind kind) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ (replication + 0x1000));
    h = splitmix64(h ^ (cls + 0x2000));
    h = splitmix64(h ^ static_cast<std::uint64_t>(kind));
    return h;
}

/// Lazily generated stream of Exp(rate) variates. A zero rate yields +inf.
class ExpStream {
public:
    ExpStream() = default;
    ExpStream(double rate, std::uint64_t seed) : rate_(rate), engine_(seed) {}

    double next() {
        if (rate_ <= 0.0) return std::numeric_limits<double>::infinity();
        // inverse transform keeps the stream portable across standard libraries
        double u = std::generate_canonical<double, 53>(engine_);
        return -std::log1p(-u) / rate_;
    }
    double rate() const { return rate_; }

private:
    double rate_ = 0.0;
    std::mt19937_64 engine_{0};
};

} // namespace tvhc

#endif
