#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "symmflow/core/errors.hpp"
#include "symmflow/core/rng.hpp"
#include "symmflow/core/tensor.hpp"

namespace symmflow {

enum class Split { train, val, test };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw InvalidArgument("unknown split: " + s);
}

// Images normalized to [-1, 1], labels in [0, K). Sample order equals storage
// order and never changes after load.
template <typename Scalar = float>
struct LabeledImageDataset {
    Split split = Split::train;
    std::string name;
    Tensor<Scalar> images;  // N x C x H x W
    std::vector<int> labels;
    int num_classes = 0;

    Index size() const { return images.n(); }

    void validate() const {
        if (images.n() == 0) throw DataError(name + ": empty dataset");
        if (static_cast<Index>(labels.size()) != images.n())
            throw DataError(name + ": label count mismatch");
        for (int l : labels)
            if (l < 0 || l >= num_classes)
                throw DataError(name + ": label outside [0, num_classes)");
        if (!images.all_finite()) throw DataError(name + ": non-finite pixels");
    }
};

// byte 0 -> -1.0, byte 255 -> +1.0, exactly invertible
inline double byte_to_unit(int b) { return (2.0 * b - 255.0) / 255.0; }
inline int unit_to_byte(double v) {
    int b = static_cast<int>(std::lround((v + 1.0) * 127.5));
    return std::clamp(b, 0, 255);
}

namespace detail {

struct Vec2 {
    double x, y;
};

// signed distances in pixels, negative inside
inline double sd_disk(Vec2 p, double r) { return std::sqrt(p.x * p.x + p.y * p.y) - r; }

inline double sd_square(Vec2 p, double r) {
    return std::max(std::abs(p.x), std::abs(p.y)) - r;
}

inline double sd_cross(Vec2 p, double r) {
    const double w = 0.35 * r;
    const double horiz = std::max(std::abs(p.x) - r, std::abs(p.y) - w);
    const double vert = std::max(std::abs(p.x) - w, std::abs(p.y) - r);
    return std::min(horiz, vert);
}

inline double sd_triangle(Vec2 p, double r) {
    const double k = std::sqrt(3.0);
    double px = std::abs(p.x) - r;
    double py = p.y + r / k;
    if (px + k * py > 0.0) {
        const double nx = (px - k * py) / 2.0;
        const double ny = (-k * px - py) / 2.0;
        px = nx;
        py = ny;
    }
    px -= std::clamp(px, -2.0 * r, 0.0);
    const double len = std::sqrt(px * px + py * py);
    return -len * (py > 0 ? 1.0 : -1.0);
}

inline double sd_ring(Vec2 p, double r) {
    const double d = std::sqrt(p.x * p.x + p.y * p.y);
    return std::abs(d - 0.8 * r) - 0.3 * r;
}

inline double sd_bar(Vec2 p, double r) {
    return std::max(std::abs(p.x) - r, std::abs(p.y) - 0.35 * r);
}

inline double shape_distance(int klass, Vec2 p, double r) {
    switch (klass) {
        case 0: return sd_disk(p, r);
        case 1: return sd_square(p, r);
        case 2: return sd_cross(p, r);
        case 3: return sd_triangle(p, r);
        case 4: return sd_ring(p, r);
        default: return sd_bar(p, r);
    }
}

}  // namespace detail

// Seeded color-shapes generator: one distinct shape per class, jittered in
// position, scale and tint, on a noisy gray background. Classes interleave so
// any prefix stays balanced.
template <typename Scalar = float>
LabeledImageDataset<Scalar> make_synthetic(int num_classes, int per_class, int size,
                                           std::uint64_t seed) {
    if (num_classes < 2 || num_classes > 6)
        throw InvalidArgument("make_synthetic: num_classes must be in [2, 6]");
    if (size < 16) throw InvalidArgument("make_synthetic: size must be >= 16");
    if (per_class < 1) throw InvalidArgument("make_synthetic: per_class must be >= 1");

    static const double base_colors[6][3] = {
        {0.80, -0.60, -0.60}, {-0.60, 0.80, -0.60}, {-0.60, -0.60, 0.80},
        {0.80, 0.80, -0.70},  {0.80, -0.70, 0.80},  {-0.70, 0.80, 0.80},
    };

    const Index n = static_cast<Index>(num_classes) * per_class;
    LabeledImageDataset<Scalar> ds;
    ds.name = "synthetic";
    ds.num_classes = num_classes;
    ds.images = Tensor<Scalar>(n, 3, size, size);
    ds.labels.resize(static_cast<std::size_t>(n));

    for (Index i = 0; i < n; ++i) {
        const int klass = static_cast<int>(i % num_classes);
        ds.labels[static_cast<std::size_t>(i)] = klass;
        Rng rng(derive_seed(seed, "synthetic", static_cast<std::uint64_t>(i)));

        const double cx = size / 2.0 + rng.uniform(-0.18, 0.18) * size;
        const double cy = size / 2.0 + rng.uniform(-0.18, 0.18) * size;
        const double radius = rng.uniform(0.23, 0.36) * size;
        double color[3];
        for (int c = 0; c < 3; ++c)
            color[c] = std::clamp(base_colors[klass][c] + rng.uniform(-0.15, 0.15), -1.0, 1.0);
        const double bg = rng.uniform(-0.2, 0.1);

        Scalar* px = ds.images.sample_data(i);
        const Index hw = static_cast<Index>(size) * size;
        for (Index y = 0; y < size; ++y) {
            for (Index x = 0; x < size; ++x) {
                const detail::Vec2 p{static_cast<double>(x) - cx, static_cast<double>(y) - cy};
                const double d = detail::shape_distance(klass, p, radius);
                const double alpha = std::clamp(0.5 - d, 0.0, 1.0);
                const double noise = rng.uniform(-0.1, 0.1);
                for (int c = 0; c < 3; ++c) {
                    const double v = bg + alpha * (color[c] - bg) + noise;
                    px[c * hw + y * size + x] = static_cast<Scalar>(std::clamp(v, -1.0, 1.0));
                }
            }
        }
    }
    return ds;
}

}  // namespace symmflow
