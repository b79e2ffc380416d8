#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include "rejref/dataset.hpp"

namespace rejref {

/// Role of a generated sample within one replicate; each role draws from its own stream.
enum class SampleRole : std::uint32_t { Train = 0, Tune = 1, Test = 2 };

/// Independent generator for (seed, replicate, role). Streams do not depend on
/// the order in which replicates or roles are generated.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t replicate, SampleRole role) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32),
                      static_cast<std::uint32_t>(role), 0x5eedu};
    return std::mt19937_64(seq);
}

struct SampleSizes {
    int train;
    int tune;
    int test;
};

struct GeneratorSpec {
    int example = 1;
    SampleSizes sizes{0, 0, 0};  // zero entries fall back to the example defaults
    int noise_dim = -1;          // negative: example default
    std::uint64_t seed = 1;
    std::uint64_t replicate = 0;
};

struct SimulatedSplit {
    Dataset train;
    Dataset tune;
    Dataset test;
};

inline SampleSizes default_sizes(int example) {
    switch (example) {
        case 1: return {150, 150, 12000};
        case 2: return {120, 120, 12000};
        case 3: return {160, 160, 10000};
        default: throw std::invalid_argument("unknown simulation example " + std::to_string(example));
    }
}

inline int default_noise_dim(int example) {
    switch (example) {
        case 1: case 3: return 98;
        case 2: return 398;
        default: throw std::invalid_argument("unknown simulation example " + std::to_string(example));
    }
}

inline int example_classes(int example) {
    switch (example) {
        case 1: case 3: return 4;
        case 2: return 3;
        default: throw std::invalid_argument("unknown simulation example " + std::to_string(example));
    }
}

namespace detail {

// Noise covariates are N(0, 0.01): variance 0.01, sd 0.1.
constexpr double kNoiseSd = 0.1;

// Example 1: class-conditional uniform rectangles [x1 lo, x1 hi] x [x2 lo, x2 hi].
constexpr std::array<std::array<double, 4>, 4> kExample1Boxes{{
    {-0.3, 1.0, -0.3, 1.0},
    {-0.3, 1.0, -1.0, 0.3},
    {-1.0, 0.3, -1.0, 0.3},
    {-1.0, 0.3, -0.3, 1.0},
}};

// Example 3: segment endpoints z^j for the class means.
constexpr std::array<std::array<double, 2>, 4> kExample3Ends{{{1.0, 0.2}, {1.0, -0.2}, {-1.0, 0.2}, {-1.0, -0.2}}};

inline void draw_signal(int example, int label, std::mt19937_64& rng, double& x1, double& x2) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 0.2);
    switch (example) {
        case 1: {
            const auto& box = kExample1Boxes[static_cast<std::size_t>(label - 1)];
            x1 = box[0] + (box[1] - box[0]) * unit(rng);
            x2 = box[2] + (box[3] - box[2]) * unit(rng);
            return;
        }
        case 2: {
            const double h = std::sqrt(3.0) / 2.0;
            const int comp = std::uniform_int_distribution<int>(0, 2)(rng);
            double m1 = 0.0, m2 = 0.0;
            if (label == 1 || label == 2) {
                if (comp == 0) {
                    m1 = -h;
                    m2 = label == 1 ? 0.5 : -0.5;
                } else if (comp == 1) {
                    m1 = -1.0;
                }
            } else if (comp < 2) {
                m1 = 1.0;
            }
            x1 = m1 + gauss(rng);
            x2 = m2 + gauss(rng);
            return;
        }
        case 3: {
            const auto& end = kExample3Ends[static_cast<std::size_t>(label - 1)];
            const double t = unit(rng);
            x1 = t * end[0] + gauss(rng);
            x2 = t * end[1] + gauss(rng);
            return;
        }
        default: throw std::invalid_argument("unknown simulation example " + std::to_string(example));
    }
}

}  // namespace detail

/// Draws n observations of a simulation example: labels equiprobable, then x | label.
inline Dataset generate_example(int example, int n, int noise_dim, std::mt19937_64& rng) {
    if (n < 1) throw std::invalid_argument("sample size must be >= 1");
    const int k = example_classes(example);
    Dataset data;
    data.k = k;
    data.X.resize(n, 2 + noise_dim);
    data.y.resize(static_cast<std::size_t>(n));
    std::uniform_int_distribution<int> label_dist(1, k);
    std::normal_distribution<double> noise(0.0, detail::kNoiseSd);
    for (int i = 0; i < n; ++i) {
        const int label = label_dist(rng);
        double x1 = 0.0, x2 = 0.0;
        detail::draw_signal(example, label, rng, x1, x2);
        data.y[static_cast<std::size_t>(i)] = label;
        data.X(i, 0) = x1;
        data.X(i, 1) = x2;
        for (int c = 0; c < noise_dim; ++c) data.X(i, 2 + c) = noise(rng);
    }
    return data;
}

inline SimulatedSplit generate(const GeneratorSpec& spec) {
    SampleSizes sizes = default_sizes(spec.example);
    if (spec.sizes.train > 0) sizes.train = spec.sizes.train;
    if (spec.sizes.tune > 0) sizes.tune = spec.sizes.tune;
    if (spec.sizes.test > 0) sizes.test = spec.sizes.test;
    const int noise = spec.noise_dim >= 0 ? spec.noise_dim : default_noise_dim(spec.example);
    SimulatedSplit split;
    auto train_rng = make_stream(spec.seed, spec.replicate, SampleRole::Train);
    auto tune_rng = make_stream(spec.seed, spec.replicate, SampleRole::Tune);
    auto test_rng = make_stream(spec.seed, spec.replicate, SampleRole::Test);
    split.train = generate_example(spec.example, sizes.train, noise, train_rng);
    split.tune = generate_example(spec.example, sizes.tune, noise, tune_rng);
    split.test = generate_example(spec.example, sizes.test, noise, test_rng);
    return split;
}

inline SimulatedSplit gen_example1(SampleSizes sizes, std::uint64_t seed, std::uint64_t replicate = 0) {
    return generate({1, sizes, -1, seed, replicate});
}
inline SimulatedSplit gen_example2(SampleSizes sizes, std::uint64_t seed, std::uint64_t replicate = 0) {
    return generate({2, sizes, -1, seed, replicate});
}
inline SimulatedSplit gen_example3(SampleSizes sizes, std::uint64_t seed, std::uint64_t replicate = 0) {
    return generate({3, sizes, -1, seed, replicate});
}

}  // namespace rejref
