#pragma once

#include <cmath>
#include <vector>

#include "symmflow/nn/layers.hpp"

namespace symmflow {
namespace nn {

// Adam with bias correction, elementwise and single threaded so updates are
// order independent of the worker count.
template <typename Scalar>
class Adam {
public:
    explicit Adam(ParamRegistry<Scalar>& reg, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : reg_(reg), beta1_(beta1), beta2_(beta2), eps_(eps) {
        m_.assign(static_cast<std::size_t>(reg.total_size()), Scalar(0));
        v_.assign(static_cast<std::size_t>(reg.total_size()), Scalar(0));
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        std::size_t at = 0;
        for (const auto& r : reg_.refs()) {
            for (Index i = 0; i < r.size; ++i, ++at) {
                const double g = static_cast<double>(r.grad[i]);
                const double m = beta1_ * m_[at] + (1.0 - beta1_) * g;
                const double v = beta2_ * v_[at] + (1.0 - beta2_) * g * g;
                m_[at] = static_cast<Scalar>(m);
                v_[at] = static_cast<Scalar>(v);
                r.value[i] -= static_cast<Scalar>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps_));
            }
        }
    }

    long step_count() const { return t_; }

private:
    ParamRegistry<Scalar>& reg_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Scalar> m_, v_;
};

}  // namespace nn
}  // namespace symmflow
