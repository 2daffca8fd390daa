#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "symmflow/core/errors.hpp"
#include "symmflow/core/rng.hpp"
#include "symmflow/core/tensor.hpp"

namespace symmflow {

enum class PaletteMode { rgb, grayscale };

inline std::string to_string(PaletteMode m) {
    return m == PaletteMode::rgb ? "rgb" : "grayscale";
}

inline PaletteMode palette_mode_from_string(const std::string& s) {
    if (s == "rgb") return PaletteMode::rgb;
    if (s == "grayscale") return PaletteMode::grayscale;
    throw InvalidArgument("unknown palette mode: " + s);
}

// Ordered class -> color-code mapping. Codes live in [-1, 1]^3; prediction
// decodes to the nearest code and the distance doubles as the uncertainty.
struct ClassPalette {
    PaletteMode mode = PaletteMode::rgb;
    int num_classes = 0;
    std::vector<Eigen::Vector3d> codes;
    double min_pairwise_distance = 0.0;
};

namespace detail {

inline double min_pairwise(const std::vector<Eigen::Vector3d>& codes) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < codes.size(); ++i)
        for (std::size_t j = i + 1; j < codes.size(); ++j)
            best = std::min(best, (codes[i] - codes[j]).norm());
    return codes.size() < 2 ? 0.0 : best;
}

}  // namespace detail

// RGB mode assigns the 8 cube corners in a fixed order, then grows the set by
// farthest-point selection over a 5x5x5 channel grid. Grayscale mode ramps all
// three channels together along [-1, 1].
inline ClassPalette build_palette(int num_classes, PaletteMode mode) {
    if (num_classes < 2)
        throw InvalidArgument("build_palette: num_classes must be >= 2");

    ClassPalette pal;
    pal.mode = mode;
    pal.num_classes = num_classes;

    if (mode == PaletteMode::grayscale) {
        for (int i = 0; i < num_classes; ++i) {
            double v = 2.0 * i / (num_classes - 1) - 1.0;
            pal.codes.emplace_back(v, v, v);
        }
    } else {
        if (num_classes > 125)
            throw PaletteExhausted("build_palette: rgb mode supports at most 125 classes");
        static const double corners[8][3] = {
            {-1, -1, -1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1},
            {1, 1, -1},   {1, -1, 1},  {-1, 1, 1},  {1, 1, 1},
        };
        for (int i = 0; i < std::min(num_classes, 8); ++i)
            pal.codes.emplace_back(corners[i][0], corners[i][1], corners[i][2]);

        if (num_classes > 8) {
            std::vector<Eigen::Vector3d> grid;
            grid.reserve(125);
            for (int r = 0; r < 5; ++r)
                for (int g = 0; g < 5; ++g)
                    for (int b = 0; b < 5; ++b)
                        grid.emplace_back(-1.0 + 0.5 * r, -1.0 + 0.5 * g, -1.0 + 0.5 * b);

            while (static_cast<int>(pal.codes.size()) < num_classes) {
                int best_idx = -1;
                double best_dist = -1.0;
                for (std::size_t i = 0; i < grid.size(); ++i) {
                    double d = std::numeric_limits<double>::infinity();
                    for (const auto& c : pal.codes)
                        d = std::min(d, (grid[i] - c).norm());
                    if (d > best_dist + 1e-12) {  // ties keep the lowest grid index
                        best_dist = d;
                        best_idx = static_cast<int>(i);
                    }
                }
                pal.codes.push_back(grid[static_cast<std::size_t>(best_idx)]);
            }
        }
    }

    pal.min_pairwise_distance = detail::min_pairwise(pal.codes);
    return pal;
}

// Label image for one class: every pixel is the class code plus one uniform
// draw per channel from U(-beta/2, beta/2), spatially constant.
template <typename Scalar>
Tensor<Scalar> encode_label(const ClassPalette& pal, int class_index, Index height,
                            Index width, double beta, Rng& rng) {
    if (class_index < 0 || class_index >= pal.num_classes)
        throw InvalidArgument("encode_label: class_index out of range");
    if (beta < 0) throw InvalidArgument("encode_label: beta must be >= 0");

    Eigen::Vector3d color = pal.codes[static_cast<std::size_t>(class_index)];
    for (int c = 0; c < 3; ++c)
        color[c] += beta > 0 ? rng.uniform(-beta / 2.0, beta / 2.0) : 0.0;

    Tensor<Scalar> img(1, 3, height, width);
    for (int c = 0; c < 3; ++c) {
        Scalar v = static_cast<Scalar>(color[c]);
        Scalar* p = img.data() + c * height * width;
        std::fill(p, p + height * width, v);
    }
    return img;
}

// Writes the label image for sample n of a batch tensor, same noise contract.
template <typename Scalar>
void encode_label_into(const ClassPalette& pal, int class_index, Tensor<Scalar>& batch,
                       Index n, double beta, Rng& rng) {
    if (class_index < 0 || class_index >= pal.num_classes)
        throw InvalidArgument("encode_label: class_index out of range");
    if (batch.c() != 3) throw InvalidArgument("encode_label: label tensor must have 3 channels");
    Eigen::Vector3d color = pal.codes[static_cast<std::size_t>(class_index)];
    for (int c = 0; c < 3; ++c)
        color[c] += beta > 0 ? rng.uniform(-beta / 2.0, beta / 2.0) : 0.0;
    const Index hw = batch.h() * batch.w();
    for (int c = 0; c < 3; ++c) {
        Scalar* p = batch.sample_data(n) + c * hw;
        std::fill(p, p + hw, static_cast<Scalar>(color[c]));
    }
}

template <typename Scalar>
Eigen::Vector3d spatial_mean_color(const Tensor<Scalar>& img, Index n) {
    if (img.c() != 3) throw InvalidArgument("spatial_mean_color: need 3 channels");
    const Index hw = img.h() * img.w();
    Eigen::Vector3d mean;
    for (int c = 0; c < 3; ++c) {
        const Scalar* p = img.sample_data(n) + c * hw;
        double acc = 0.0;
        for (Index i = 0; i < hw; ++i) acc += static_cast<double>(p[i]);
        mean[c] = acc / static_cast<double>(hw);
    }
    return mean;
}

struct Decoded {
    int class_index = -1;
    double distance = 0.0;
    Eigen::Vector3d mean_color = Eigen::Vector3d::Zero();
};

inline Decoded decode_mean_color(const ClassPalette& pal, const Eigen::Vector3d& mean) {
    if (!mean.allFinite()) throw InvalidArgument("decode_prediction: non-finite input");
    Decoded out;
    out.mean_color = mean;
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < pal.num_classes; ++c) {
        double d = (mean - pal.codes[static_cast<std::size_t>(c)]).norm();
        if (d < best) {  // strict: ties keep the lowest index
            best = d;
            out.class_index = c;
        }
    }
    out.distance = best;
    return out;
}

// Nearest-code decoding of a predicted label image; the returned distance is
// the uncertainty proxy.
template <typename Scalar>
Decoded decode_prediction(const ClassPalette& pal, const Tensor<Scalar>& y0, Index n = 0) {
    Eigen::Vector3d mean = spatial_mean_color(y0, n);
    if (!mean.allFinite()) throw InvalidArgument("decode_prediction: non-finite input");
    return decode_mean_color(pal, mean);
}

inline Eigen::VectorXd class_scores_from_mean(const ClassPalette& pal,
                                              const Eigen::Vector3d& mean,
                                              double temperature) {
    if (temperature <= 0) throw InvalidArgument("class_scores: temperature must be > 0");
    Eigen::VectorXd logits(pal.num_classes);
    for (int c = 0; c < pal.num_classes; ++c)
        logits[c] = -(mean - pal.codes[static_cast<std::size_t>(c)]).norm() / temperature;
    double mx = logits.maxCoeff();
    Eigen::VectorXd scores = (logits.array() - mx).exp();
    scores /= scores.sum();
    return scores;
}

// Softmax over negative code distances; argmax always matches
// decode_prediction.
template <typename Scalar>
Eigen::VectorXd class_scores(const ClassPalette& pal, const Tensor<Scalar>& y0,
                             double temperature, Index n = 0) {
    return class_scores_from_mean(pal, spatial_mean_color(y0, n), temperature);
}

}  // namespace symmflow
