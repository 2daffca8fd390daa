#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <vector>

#include "symmflow/core/errors.hpp"

namespace symmflow {

using Index = Eigen::Index;

template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Dense NCHW tensor backing all image, label and latent states. Thin container
// over contiguous storage; math goes through Eigen maps.
template <typename Scalar>
class Tensor {
public:
    Tensor() : shape_{0, 0, 0, 0} {}
    Tensor(Index n, Index c, Index h, Index w) : shape_{n, c, h, w} {
        if (n < 0 || c < 0 || h < 0 || w < 0)
            throw InvalidArgument("Tensor: negative dimension");
        data_.assign(static_cast<std::size_t>(n * c * h * w), Scalar(0));
    }

    static Tensor zeros(Index n, Index c, Index h, Index w) {
        return Tensor(n, c, h, w);
    }

    Index n() const { return shape_[0]; }
    Index c() const { return shape_[1]; }
    Index h() const { return shape_[2]; }
    Index w() const { return shape_[3]; }
    const std::array<Index, 4>& shape() const { return shape_; }
    Index size() const { return static_cast<Index>(data_.size()); }
    Index sample_size() const { return shape_[1] * shape_[2] * shape_[3]; }
    bool empty() const { return data_.empty(); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    Scalar& operator()(Index n, Index c, Index h, Index w) {
        return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    Scalar operator()(Index n, Index c, Index h, Index w) const {
        return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }

    Scalar* sample_data(Index n) { return data_.data() + n * sample_size(); }
    const Scalar* sample_data(Index n) const { return data_.data() + n * sample_size(); }

    Eigen::Map<VecX<Scalar>> vec() { return {data_.data(), size()}; }
    Eigen::Map<const VecX<Scalar>> vec() const { return {data_.data(), size()}; }

    Eigen::Map<VecX<Scalar>> sample_vec(Index n) { return {sample_data(n), sample_size()}; }
    Eigen::Map<const VecX<Scalar>> sample_vec(Index n) const { return {sample_data(n), sample_size()}; }

    // (H*W) x C view of one sample is not contiguous in NCHW; instead expose
    // the (C, H*W) matrix, channels as rows.
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
    sample_matrix(Index n) {
        return {sample_data(n), shape_[1], shape_[2] * shape_[3]};
    }
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
    sample_matrix(Index n) const {
        return {sample_data(n), shape_[1], shape_[2] * shape_[3]};
    }

    void set_zero() { std::fill(data_.begin(), data_.end(), Scalar(0)); }
    void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (Scalar v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> out(shape_[0], shape_[1], shape_[2], shape_[3]);
        for (Index i = 0; i < size(); ++i)
            out.data()[i] = static_cast<Other>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

private:
    std::array<Index, 4> shape_;
    std::vector<Scalar> data_;
};

template <typename Scalar>
void check_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* where) {
    if (!a.same_shape(b))
        throw InvalidArgument(std::string(where) + ": shape mismatch");
}

template <typename Scalar>
Tensor<Scalar> clamped(const Tensor<Scalar>& t, Scalar lo, Scalar hi) {
    Tensor<Scalar> out = t;
    out.vec() = out.vec().cwiseMax(lo).cwiseMin(hi);
    return out;
}

}  // namespace symmflow
