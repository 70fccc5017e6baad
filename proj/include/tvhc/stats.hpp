#ifndef TVHC_STATS_HPP
#define TVHC_STATS_HPP

#include <cmath>
#include <cstddef>
#include <span>

namespace tvhc {

/// Welford accumulator.
class RunningStats {
public:
    void add(double x) {
        ++n_;
        double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    std::size_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double std_error() const {
        return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
    }
    /// 95% normal-approximation half-width.
    double ci_half_width() const { return 1.959963984540054 * std_error(); }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

inline RunningStats summarize(std::span<const double> xs) {
    RunningStats s;
    for (double x : xs) s.add(x);
    return s;
}

/// Monte Carlo estimate with its standard error.
struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
};

inline Estimate to_estimate(const RunningStats& s) { return {s.mean(), s.std_error()}; }

} // namespace tvhc

#endif
