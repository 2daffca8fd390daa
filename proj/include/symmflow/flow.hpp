#pragma once

#include <vector>

#include "symmflow/core/rng.hpp"
#include "symmflow/core/tensor.hpp"
#include "symmflow/palette.hpp"

namespace symmflow {

// One training batch over the symmetric pair of straight paths:
//   image flow   x_t = (1-t) x0 + t x1, noise -> data
//   label flow   y_t = (1-t) y0 + t y1, data  -> noise
// Velocity targets are the constant displacements of those paths.
template <typename Scalar>
struct FlowBatch {
    Tensor<Scalar> x0, x1, y0, y1;
    Tensor<Scalar> xt, yt;
    Tensor<Scalar> ux, uy;
    std::vector<double> t;
    std::vector<int> labels;
};

template <typename Scalar>
Tensor<Scalar> interpolate(const Tensor<Scalar>& a, const Tensor<Scalar>& b, double t) {
    check_same_shape(a, b, "interpolate");
    if (t < 0.0 || t > 1.0) throw InvalidArgument("interpolate: t must be in [0,1]");
    Tensor<Scalar> out(a.n(), a.c(), a.h(), a.w());
    out.vec() = (Scalar(1) - Scalar(t)) * a.vec() + Scalar(t) * b.vec();
    return out;
}

namespace detail {

template <typename Scalar>
void lerp_per_sample(const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                     const std::vector<double>& t, Tensor<Scalar>& out) {
    for (Index n = 0; n < a.n(); ++n) {
        Scalar tn = static_cast<Scalar>(t[static_cast<std::size_t>(n)]);
        out.sample_vec(n) = (Scalar(1) - tn) * a.sample_vec(n) + tn * b.sample_vec(n);
    }
}

}  // namespace detail

// Assembles a FlowBatch from data images and class labels. Per sample, in
// draw order: t ~ U(0,1), x0 standard normal, y1 standard normal, then the
// beta-perturbed label code. t_override (tests) suppresses the t draw but
// keeps the rest of the stream identical.
template <typename Scalar>
FlowBatch<Scalar> sample_training_batch(const Tensor<Scalar>& images,
                                        const std::vector<int>& class_indices,
                                        const ClassPalette& palette, double beta,
                                        Rng& rng,
                                        const std::vector<double>* t_override = nullptr) {
    const Index n = images.n();
    if (static_cast<Index>(class_indices.size()) != n)
        throw InvalidArgument("sample_training_batch: labels/images size mismatch");
    for (int c : class_indices)
        if (c < 0 || c >= palette.num_classes)
            throw InvalidArgument("sample_training_batch: class index out of range");
    if (t_override && static_cast<Index>(t_override->size()) != n)
        throw InvalidArgument("sample_training_batch: t_override size mismatch");

    FlowBatch<Scalar> fb;
    fb.labels = class_indices;
    fb.x1 = images;
    fb.x0 = Tensor<Scalar>(n, images.c(), images.h(), images.w());
    fb.y0 = Tensor<Scalar>(n, 3, images.h(), images.w());
    fb.y1 = Tensor<Scalar>(n, 3, images.h(), images.w());
    fb.t.resize(static_cast<std::size_t>(n));

    for (Index i = 0; i < n; ++i) {
        fb.t[static_cast<std::size_t>(i)] = t_override ? (*t_override)[static_cast<std::size_t>(i)] : rng.uniform();
        rng.fill_normal(fb.x0.sample_data(i), fb.x0.sample_size());
        rng.fill_normal(fb.y1.sample_data(i), fb.y1.sample_size());
        encode_label_into(palette, class_indices[static_cast<std::size_t>(i)], fb.y0, i, beta, rng);
    }

    fb.xt = Tensor<Scalar>(n, images.c(), images.h(), images.w());
    fb.yt = Tensor<Scalar>(n, 3, images.h(), images.w());
    detail::lerp_per_sample(fb.x0, fb.x1, fb.t, fb.xt);
    detail::lerp_per_sample(fb.y0, fb.y1, fb.t, fb.yt);

    fb.ux = Tensor<Scalar>(n, images.c(), images.h(), images.w());
    fb.uy = Tensor<Scalar>(n, 3, images.h(), images.w());
    fb.ux.vec() = fb.x1.vec() - fb.x0.vec();
    fb.uy.vec() = fb.y1.vec() - fb.y0.vec();
    return fb;
}

template <typename Scalar>
double mean_squared_error(const Tensor<Scalar>& pred, const Tensor<Scalar>& target) {
    check_same_shape(pred, target, "mean_squared_error");
    double acc = 0.0;
    const Scalar* p = pred.data();
    const Scalar* q = target.data();
    for (Index i = 0; i < pred.size(); ++i) {
        double d = static_cast<double>(p[i]) - static_cast<double>(q[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

// loss = mse(pred_vx, ux) + lambda_y * mse(pred_vy, uy)
template <typename Scalar>
double flow_matching_loss(const Tensor<Scalar>& pred_vx, const Tensor<Scalar>& pred_vy,
                          const FlowBatch<Scalar>& batch, double lambda_y) {
    if (lambda_y <= 0) throw InvalidArgument("flow_matching_loss: lambda_y must be > 0");
    return mean_squared_error(pred_vx, batch.ux) + lambda_y * mean_squared_error(pred_vy, batch.uy);
}

// Gradients of flow_matching_loss w.r.t. the predictions, for the backward
// pass: d/dp mse(p, u) = 2 (p - u) / numel.
template <typename Scalar>
void flow_matching_loss_grad(const Tensor<Scalar>& pred_vx, const Tensor<Scalar>& pred_vy,
                             const FlowBatch<Scalar>& batch, double lambda_y,
                             Tensor<Scalar>& grad_vx, Tensor<Scalar>& grad_vy) {
    check_same_shape(pred_vx, batch.ux, "flow_matching_loss_grad");
    check_same_shape(pred_vy, batch.uy, "flow_matching_loss_grad");
    grad_vx = Tensor<Scalar>(pred_vx.n(), pred_vx.c(), pred_vx.h(), pred_vx.w());
    grad_vy = Tensor<Scalar>(pred_vy.n(), pred_vy.c(), pred_vy.h(), pred_vy.w());
    const Scalar sx = Scalar(2) / static_cast<Scalar>(pred_vx.size());
    const Scalar sy = static_cast<Scalar>(lambda_y) * Scalar(2) / static_cast<Scalar>(pred_vy.size());
    grad_vx.vec() = sx * (pred_vx.vec() - batch.ux.vec());
    grad_vy.vec() = sy * (pred_vy.vec() - batch.uy.vec());
}

}  // namespace symmflow
