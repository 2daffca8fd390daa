#pragma once

#include <optional>
#include <string>
#include <vector>

#include "symmflow/core/errors.hpp"
#include "symmflow/core/tensor.hpp"

namespace symmflow {

// Fixed-step Euler integration of the joint state. t_start > t_end runs the
// flow in reverse (classification); freeze_image holds the image state at its
// initial value while the label state evolves.
struct IntegrationSpec {
    double t_start = 0.0;
    double t_end = 1.0;
    int steps = 25;
    bool freeze_image = false;
    bool record_trajectory = false;

    void validate() const {
        if (steps < 1) throw InvalidArgument("IntegrationSpec: steps must be >= 1");
        if (t_start == t_end) throw InvalidArgument("IntegrationSpec: t_start == t_end");
        if (t_start < 0 || t_start > 1 || t_end < 0 || t_end > 1)
            throw InvalidArgument("IntegrationSpec: times must lie in [0,1]");
    }
};

template <typename Scalar>
struct Trajectory {
    std::vector<double> times;
    std::vector<Tensor<Scalar>> x_states;
    std::vector<Tensor<Scalar>> y_states;
};

// Field is any callable object with
//   evaluate(x, y, t_per_sample, v_x, v_y)
// writing velocities of the same shapes as the states.

template <typename Scalar, typename Field>
void euler_step(Field& field, Tensor<Scalar>& x, Tensor<Scalar>& y, double& t, double h) {
    if (h == 0.0) throw InvalidArgument("euler_step: h must be nonzero");
    std::vector<double> tv(static_cast<std::size_t>(x.n()), t);
    Tensor<Scalar> vx, vy;
    field.evaluate(x, y, tv, vx, vy);
    x.vec() += static_cast<Scalar>(h) * vx.vec();
    y.vec() += static_cast<Scalar>(h) * vy.vec();
    t += h;
    if (!x.all_finite() || !y.all_finite())
        throw NumericError("euler_step: non-finite state", 0);
}

template <typename Scalar, typename Field>
void integrate(Field& field, Tensor<Scalar>& x, Tensor<Scalar>& y, const IntegrationSpec& spec,
               Trajectory<Scalar>* trajectory = nullptr) {
    spec.validate();
    const double h = (spec.t_end - spec.t_start) / spec.steps;
    const Tensor<Scalar> x_pinned = spec.freeze_image ? x : Tensor<Scalar>();

    if (trajectory) {
        trajectory->times.push_back(spec.t_start);
        trajectory->x_states.push_back(x);
        trajectory->y_states.push_back(y);
    }

    Tensor<Scalar> vx, vy;
    std::vector<double> tv(static_cast<std::size_t>(x.n()));
    for (int k = 0; k < spec.steps; ++k) {
        const double t = spec.t_start + k * h;
        std::fill(tv.begin(), tv.end(), t);
        field.evaluate(x, y, tv, vx, vy);
        if (!spec.freeze_image) x.vec() += static_cast<Scalar>(h) * vx.vec();
        y.vec() += static_cast<Scalar>(h) * vy.vec();
        if (!x.all_finite() || !y.all_finite())
            throw NumericError("integrate: non-finite state at step " + std::to_string(k), k);
        if (trajectory) {
            trajectory->times.push_back(spec.t_start + (k + 1) * h);
            trajectory->x_states.push_back(x);
            trajectory->y_states.push_back(y);
        }
    }
}

}  // namespace symmflow
