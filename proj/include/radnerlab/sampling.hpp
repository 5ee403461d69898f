#pragma once

#include "radnerlab/economy.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace radnerlab {

/// Radical inverse of `index` in base `base`.
inline double radical_inverse(std::uint64_t index, std::uint64_t base) {
    double inv = 1.0 / static_cast<double>(base);
    double f = inv;
    double r = 0.0;
    while (index > 0) {
        r += f * static_cast<double>(index % base);
        index /= base;
        f *= inv;
    }
    return r;
}

/// Halton points in [0,1)^dims with a Cranley-Patterson shift drawn from `seed`.
class HaltonSequence {
public:
    HaltonSequence(int dims, std::uint64_t seed) : dims_(dims) {
        static constexpr std::uint64_t primes[] = {2, 3, 5, 7, 11, 13, 17, 19};
        if (dims < 1 || dims > 8) throw ConfigError("Halton sequence supports 1..8 dimensions");
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int j = 0; j < dims; ++j) {
            bases_.push_back(primes[j]);
            shift_.push_back(seed == 0 ? 0.0 : u(rng));
        }
    }

    std::vector<double> point(std::uint64_t index) const {
        std::vector<double> p(dims_);
        for (int j = 0; j < dims_; ++j) {
            double v = radical_inverse(index + 1, bases_[j]) + shift_[j];
            p[j] = v - std::floor(v);
        }
        return p;
    }

private:
    int dims_;
    std::vector<std::uint64_t> bases_;
    std::vector<double> shift_;
};

/// Low-discrepancy samples of a box followed by all 2^K corners.
inline std::vector<std::vector<double>> sample_box(const Box& box, int samples, std::uint64_t seed) {
    const int K = box.dims();
    std::vector<std::vector<double>> pts;
    HaltonSequence seq(K, seed);
    for (int s = 0; s < samples; ++s) {
        auto u = seq.point(static_cast<std::uint64_t>(s));
        for (int j = 0; j < K; ++j) u[j] = box.lo[j] + (box.hi[j] - box.lo[j]) * u[j];
        pts.push_back(std::move(u));
    }
    for (int c = 0; c < (1 << K); ++c) {
        std::vector<double> x(K);
        for (int j = 0; j < K; ++j) x[j] = (c & (1 << j)) ? box.hi[j] : box.lo[j];
        pts.push_back(std::move(x));
    }
    return pts;
}

/// Samples of [0, T] x box: Halton in K+1 dimensions plus corners at t = 0 and t = T.
inline std::vector<std::pair<double, std::vector<double>>> sample_time_box(const Box& box, double T, int samples,
                                                                           std::uint64_t seed) {
    const int K = box.dims();
    std::vector<std::pair<double, std::vector<double>>> pts;
    HaltonSequence seq(K + 1, seed);
    for (int s = 0; s < samples; ++s) {
        auto u = seq.point(static_cast<std::uint64_t>(s));
        std::vector<double> x(K);
        for (int j = 0; j < K; ++j) x[j] = box.lo[j] + (box.hi[j] - box.lo[j]) * u[j + 1];
        pts.emplace_back(T * u[0], std::move(x));
    }
    for (double t : {0.0, T}) {
        for (int c = 0; c < (1 << K); ++c) {
            std::vector<double> x(K);
            for (int j = 0; j < K; ++j) x[j] = (c & (1 << j)) ? box.hi[j] : box.lo[j];
            pts.emplace_back(t, std::move(x));
        }
    }
    return pts;
}

} // namespace radnerlab
