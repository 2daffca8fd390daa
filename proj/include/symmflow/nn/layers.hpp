#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

#include "symmflow/core/errors.hpp"
#include "symmflow/core/parallel.hpp"
#include "symmflow/core/rng.hpp"
#include "symmflow/core/tensor.hpp"

namespace symmflow {
namespace nn {

// Flat view of one parameter block plus its gradient, in registration order.
// Optimizers and checkpoints both walk this list.
template <typename Scalar>
struct ParamRef {
    std::string name;
    Scalar* value = nullptr;
    Scalar* grad = nullptr;
    Index size = 0;
};

template <typename Scalar>
class ParamRegistry {
public:
    void add(const std::string& name, MatX<Scalar>& value, MatX<Scalar>& grad) {
        refs_.push_back({name, value.data(), grad.data(), value.size()});
    }
    void add(const std::string& name, VecX<Scalar>& value, VecX<Scalar>& grad) {
        refs_.push_back({name, value.data(), grad.data(), value.size()});
    }
    const std::vector<ParamRef<Scalar>>& refs() const { return refs_; }
    Index total_size() const {
        Index t = 0;
        for (const auto& r : refs_) t += r.size;
        return t;
    }
    void zero_grads() {
        for (auto& r : refs_) std::fill(r.grad, r.grad + r.size, Scalar(0));
    }

private:
    std::vector<ParamRef<Scalar>> refs_;
};

namespace detail {

// per-worker scratch, reused across calls
template <typename Scalar>
inline std::vector<Scalar>& tls_buffer(int which) {
    static thread_local std::vector<Scalar> bufs[4];
    return bufs[which];
}

// Deterministic gradient reduction: fixed 16-sample chunks are filled in
// parallel and summed in chunk order, so results do not depend on the worker
// count.
template <typename Scalar, typename Fill>
void reduce_over_samples(Index n_samples, Index grad_len, Scalar* grad_out, Fill fill_chunk) {
    constexpr Index kChunk = 16;
    const Index nchunks = (n_samples + kChunk - 1) / kChunk;
    std::vector<Scalar> bufs(static_cast<std::size_t>(nchunks * grad_len), Scalar(0));
    parallel_chunks(n_samples, kChunk, [&](Index ci, Index b, Index e) {
        fill_chunk(b, e, bufs.data() + ci * grad_len);
    });
    for (Index ci = 0; ci < nchunks; ++ci) {
        const Scalar* buf = bufs.data() + ci * grad_len;
        for (Index i = 0; i < grad_len; ++i) grad_out[i] += buf[i];
    }
}

// weight + bias pair used by Conv2d, Linear and the attention projections
template <typename Scalar>
struct Dense {
    Dense() = default;
    Dense(Index in, Index out) {
        w.setZero(in, out);
        b.setZero(out);
        wg.setZero(in, out);
        bg.setZero(out);
    }
    void init(Rng& rng, bool zero) {
        if (zero) {
            w.setZero();
            b.setZero();
            return;
        }
        double bound = 1.0 / std::sqrt(static_cast<double>(w.rows()));
        rng.fill_uniform(w.data(), w.size(), -bound, bound);
        rng.fill_uniform(b.data(), b.size(), -bound, bound);
    }
    void register_params(ParamRegistry<Scalar>& reg, const std::string& prefix) {
        reg.add(prefix + ".weight", w, wg);
        reg.add(prefix + ".bias", b, bg);
    }
    MatX<Scalar> w, wg;
    VecX<Scalar> b, bg;
};

}  // namespace detail

// --------------------------------------------------------------------------
// Conv2d: im2col + GEMM. The sample memory of an NCHW tensor maps onto a
// column-major (H*W, C) matrix, so storing the kernel as (Cin*k*k, Cout)
// makes the forward one product per sample with no layout shuffling.
// --------------------------------------------------------------------------
template <typename Scalar>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(Index cin, Index cout, Index ksize, Index stride, Index pad)
        : cin_(cin), cout_(cout), k_(ksize), stride_(stride), pad_(pad),
          dense_(cin * ksize * ksize, cout) {}

    void init(Rng& rng, bool zero = false) { dense_.init(rng, zero); }

    void register_params(ParamRegistry<Scalar>& reg, const std::string& prefix) {
        dense_.register_params(reg, prefix);
    }

    Index out_dim(Index in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }
    Index cout() const { return cout_; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) {
        if (x.c() != cin_) throw InvalidArgument("Conv2d: channel mismatch");
        const Index n = x.n(), ho = out_dim(x.h()), wo = out_dim(x.w());
        Tensor<Scalar> out(n, cout_, ho, wo);
        if (train) input_ = x;
        const Index hw_out = ho * wo, kk = dense_.w.rows();
        parallel_for(n, [&](Index b, Index e, int) {
            auto& colbuf = detail::tls_buffer<Scalar>(0);
            colbuf.resize(static_cast<std::size_t>(hw_out * kk));
            for (Index i = b; i < e; ++i) {
                im2col(x, i, colbuf.data());
                Eigen::Map<MatX<Scalar>> col(colbuf.data(), hw_out, kk);
                Eigen::Map<MatX<Scalar>> o(out.sample_data(i), hw_out, cout_);
                o.noalias() = col * dense_.w;
                o.rowwise() += dense_.b.transpose();
            }
        });
        return out;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dout) {
        const Tensor<Scalar>& x = input_;
        const Index n = x.n(), ho = out_dim(x.h()), wo = out_dim(x.w());
        const Index hw_out = ho * wo, kk = dense_.w.rows();
        Tensor<Scalar> dx(n, cin_, x.h(), x.w());

        parallel_for(n, [&](Index b, Index e, int) {
            auto& dcolbuf = detail::tls_buffer<Scalar>(1);
            dcolbuf.resize(static_cast<std::size_t>(hw_out * kk));
            for (Index i = b; i < e; ++i) {
                Eigen::Map<const MatX<Scalar>> d(dout.sample_data(i), hw_out, cout_);
                Eigen::Map<MatX<Scalar>> dcol(dcolbuf.data(), hw_out, kk);
                dcol.noalias() = d * dense_.w.transpose();
                col2im(dcolbuf.data(), dx, i);
            }
        });

        const Index wlen = dense_.w.size();
        std::vector<Scalar> acc(static_cast<std::size_t>(wlen + cout_), Scalar(0));
        detail::reduce_over_samples<Scalar>(n, wlen + cout_, acc.data(),
            [&](Index b, Index e, Scalar* buf) {
                Eigen::Map<MatX<Scalar>> dw(buf, kk, cout_);
                Eigen::Map<VecX<Scalar>> db(buf + wlen, cout_);
                auto& colbuf = detail::tls_buffer<Scalar>(0);
                colbuf.resize(static_cast<std::size_t>(hw_out * kk));
                for (Index i = b; i < e; ++i) {
                    im2col(x, i, colbuf.data());
                    Eigen::Map<MatX<Scalar>> col(colbuf.data(), hw_out, kk);
                    Eigen::Map<const MatX<Scalar>> d(dout.sample_data(i), hw_out, cout_);
                    dw.noalias() += col.transpose() * d;
                    db.noalias() += d.colwise().sum().transpose();
                }
            });
        dense_.wg += Eigen::Map<MatX<Scalar>>(acc.data(), kk, cout_);
        dense_.bg += Eigen::Map<VecX<Scalar>>(acc.data() + wlen, cout_);
        return dx;
    }

private:
    void im2col(const Tensor<Scalar>& x, Index sample, Scalar* col) const {
        const Index h = x.h(), w = x.w(), ho = out_dim(h), wo = out_dim(w);
        const Scalar* src = x.sample_data(sample);
        Index ki = 0;
        for (Index ci = 0; ci < cin_; ++ci) {
            const Scalar* plane = src + ci * h * w;
            for (Index dy = 0; dy < k_; ++dy) {
                for (Index dx = 0; dx < k_; ++dx, ++ki) {
                    Scalar* dst = col + ki * ho * wo;
                    for (Index oy = 0; oy < ho; ++oy) {
                        const Index iy = oy * stride_ - pad_ + dy;
                        if (iy < 0 || iy >= h) {
                            std::fill(dst + oy * wo, dst + (oy + 1) * wo, Scalar(0));
                            continue;
                        }
                        const Scalar* row = plane + iy * w;
                        for (Index ox = 0; ox < wo; ++ox) {
                            const Index ix = ox * stride_ - pad_ + dx;
                            dst[oy * wo + ox] = (ix >= 0 && ix < w) ? row[ix] : Scalar(0);
                        }
                    }
                }
            }
        }
    }

    void col2im(const Scalar* dcol, Tensor<Scalar>& dx, Index sample) const {
        const Index h = dx.h(), w = dx.w(), ho = out_dim(h), wo = out_dim(w);
        Scalar* dst = dx.sample_data(sample);
        Index ki = 0;
        for (Index ci = 0; ci < cin_; ++ci) {
            Scalar* plane = dst + ci * h * w;
            for (Index dy = 0; dy < k_; ++dy) {
                for (Index dxk = 0; dxk < k_; ++dxk, ++ki) {
                    const Scalar* src = dcol + ki * ho * wo;
                    for (Index oy = 0; oy < ho; ++oy) {
                        const Index iy = oy * stride_ - pad_ + dy;
                        if (iy < 0 || iy >= h) continue;
                        Scalar* row = plane + iy * w;
                        for (Index ox = 0; ox < wo; ++ox) {
                            const Index ix = ox * stride_ - pad_ + dxk;
                            if (ix >= 0 && ix < w) row[ix] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }

    Index cin_ = 0, cout_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    detail::Dense<Scalar> dense_;
    Tensor<Scalar> input_;
};

// --------------------------------------------------------------------------
// Linear over (N, in) row matrices
// --------------------------------------------------------------------------
template <typename Scalar>
class Linear {
public:
    Linear() = default;
    Linear(Index in, Index out) : dense_(in, out) {}

    void init(Rng& rng, bool zero = false) { dense_.init(rng, zero); }

    void register_params(ParamRegistry<Scalar>& reg, const std::string& prefix) {
        dense_.register_params(reg, prefix);
    }

    MatX<Scalar> forward(const MatX<Scalar>& x, bool train) {
        if (x.cols() != dense_.w.rows()) throw InvalidArgument("Linear: input width mismatch");
        if (train) input_ = x;
        MatX<Scalar> out = x * dense_.w;
        out.rowwise() += dense_.b.transpose();
        return out;
    }

    MatX<Scalar> backward(const MatX<Scalar>& dout) {
        dense_.wg.noalias() += input_.transpose() * dout;
        dense_.bg.noalias() += dout.colwise().sum().transpose();
        return dout * dense_.w.transpose();
    }

private:
    detail::Dense<Scalar> dense_;
    MatX<Scalar> input_;
};

// --------------------------------------------------------------------------
// SiLU
// --------------------------------------------------------------------------
template <typename Scalar>
inline Scalar sigmoid(Scalar x) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
class SiLU {
public:
    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) {
        if (train) input_ = x;
        Tensor<Scalar> out(x.n(), x.c(), x.h(), x.w());
        const Scalar* in = x.data();
        Scalar* o = out.data();
        const Index stride = x.sample_size();
        parallel_for(x.n(), [&](Index b, Index e, int) {
            for (Index i = b * stride; i < e * stride; ++i) o[i] = in[i] * sigmoid(in[i]);
        });
        return out;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dout) {
        const Tensor<Scalar>& x = input_;
        Tensor<Scalar> dx(x.n(), x.c(), x.h(), x.w());
        const Scalar* in = x.data();
        const Scalar* d = dout.data();
        Scalar* o = dx.data();
        const Index stride = x.sample_size();
        parallel_for(x.n(), [&](Index b, Index e, int) {
            for (Index i = b * stride; i < e * stride; ++i) {
                Scalar s = sigmoid(in[i]);
                o[i] = d[i] * s * (Scalar(1) + in[i] * (Scalar(1) - s));
            }
        });
        return dx;
    }

private:
    Tensor<Scalar> input_;
};

// --------------------------------------------------------------------------
// GroupNorm, affine, population variance over each (sample, group)
// --------------------------------------------------------------------------
inline Index default_groups(Index channels) {
    for (Index g : {32, 16, 8, 4, 2}) {
        if (channels % g == 0) return g;
    }
    return 1;
}

template <typename Scalar>
class GroupNorm {
public:
    GroupNorm() = default;
    explicit GroupNorm(Index channels, Index groups = 0, double eps = 1e-5)
        : c_(channels), g_(groups > 0 ? groups : default_groups(channels)), eps_(eps) {
        if (c_ % g_ != 0) throw InvalidArgument("GroupNorm: groups must divide channels");
        gamma_.setOnes(c_);
        beta_.setZero(c_);
        ggrad_.setZero(c_);
        bgrad_.setZero(c_);
    }

    void register_params(ParamRegistry<Scalar>& reg, const std::string& prefix) {
        reg.add(prefix + ".gamma", gamma_, ggrad_);
        reg.add(prefix + ".beta", beta_, bgrad_);
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) {
        if (x.c() != c_) throw InvalidArgument("GroupNorm: channel mismatch");
        const Index n = x.n(), hw = x.h() * x.w(), cpg = c_ / g_;
        Tensor<Scalar> out(n, c_, x.h(), x.w());
        if (train) {
            input_ = x;
            mean_.setZero(n, g_);
            invstd_.setZero(n, g_);
        }
        parallel_for(n, [&](Index b, Index e, int) {
            for (Index i = b; i < e; ++i) {
                for (Index g = 0; g < g_; ++g) {
                    const Scalar* src = x.sample_data(i) + g * cpg * hw;
                    Scalar* dst = out.sample_data(i) + g * cpg * hw;
                    const Index m = cpg * hw;
                    double mean = 0.0;
                    for (Index j = 0; j < m; ++j) mean += static_cast<double>(src[j]);
                    mean /= static_cast<double>(m);
                    double var = 0.0;
                    for (Index j = 0; j < m; ++j) {
                        const double d = static_cast<double>(src[j]) - mean;
                        var += d * d;
                    }
                    var /= static_cast<double>(m);
                    const Scalar mu = static_cast<Scalar>(mean);
                    const Scalar is = static_cast<Scalar>(1.0 / std::sqrt(var + eps_));
                    if (train) {
                        mean_(i, g) = mu;
                        invstd_(i, g) = is;
                    }
                    for (Index cc = 0; cc < cpg; ++cc) {
                        const Scalar ga = gamma_[g * cpg + cc], be = beta_[g * cpg + cc];
                        const Scalar* s = src + cc * hw;
                        Scalar* o = dst + cc * hw;
                        for (Index j = 0; j < hw; ++j) o[j] = (s[j] - mu) * is * ga + be;
                    }
                }
            }
        });
        return out;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dout) {
        const Tensor<Scalar>& x = input_;
        const Index n = x.n(), hw = x.h() * x.w(), cpg = c_ / g_;
        Tensor<Scalar> dx(n, c_, x.h(), x.w());

        parallel_for(n, [&](Index b, Index e, int) {
            for (Index i = b; i < e; ++i) {
                for (Index g = 0; g < g_; ++g) {
                    const Scalar mu = mean_(i, g), is = invstd_(i, g);
                    const Scalar* src = x.sample_data(i) + g * cpg * hw;
                    const Scalar* d = dout.sample_data(i) + g * cpg * hw;
                    Scalar* o = dx.sample_data(i) + g * cpg * hw;
                    const Index m = cpg * hw;
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (Index cc = 0; cc < cpg; ++cc) {
                        const Scalar ga = gamma_[g * cpg + cc];
                        for (Index j = 0; j < hw; ++j) {
                            const Index idx = cc * hw + j;
                            const double xhat = (src[idx] - mu) * is;
                            const double dxhat = static_cast<double>(d[idx]) * ga;
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * xhat;
                        }
                    }
                    const double inv_m = 1.0 / static_cast<double>(m);
                    for (Index cc = 0; cc < cpg; ++cc) {
                        const Scalar ga = gamma_[g * cpg + cc];
                        for (Index j = 0; j < hw; ++j) {
                            const Index idx = cc * hw + j;
                            const double xhat = (src[idx] - mu) * is;
                            const double dxhat = static_cast<double>(d[idx]) * ga;
                            o[idx] = static_cast<Scalar>(
                                is * (dxhat - inv_m * sum_dxhat - xhat * inv_m * sum_dxhat_xhat));
                        }
                    }
                }
            }
        });

        std::vector<Scalar> acc(static_cast<std::size_t>(2 * c_), Scalar(0));
        detail::reduce_over_samples<Scalar>(n, 2 * c_, acc.data(),
            [&](Index b, Index e, Scalar* buf) {
                for (Index i = b; i < e; ++i) {
                    for (Index g = 0; g < g_; ++g) {
                        const Scalar mu = mean_(i, g), is = invstd_(i, g);
                        const Scalar* src = x.sample_data(i) + g * cpg * hw;
                        const Scalar* d = dout.sample_data(i) + g * cpg * hw;
                        for (Index cc = 0; cc < cpg; ++cc) {
                            double dg = 0.0, db = 0.0;
                            for (Index j = 0; j < hw; ++j) {
                                const Index idx = cc * hw + j;
                                dg += static_cast<double>(d[idx]) * (src[idx] - mu) * is;
                                db += static_cast<double>(d[idx]);
                            }
                            buf[g * cpg + cc] += static_cast<Scalar>(dg);
                            buf[c_ + g * cpg + cc] += static_cast<Scalar>(db);
                        }
                    }
                }
            });
        ggrad_ += Eigen::Map<VecX<Scalar>>(acc.data(), c_);
        bgrad_ += Eigen::Map<VecX<Scalar>>(acc.data() + c_, c_);
        return dx;
    }

    Index channels() const { return c_; }

private:
    Index c_ = 0, g_ = 1;
    double eps_ = 1e-5;
    VecX<Scalar> gamma_, beta_, ggrad_, bgrad_;
    Tensor<Scalar> input_;
    MatX<Scalar> mean_, invstd_;
};

// --------------------------------------------------------------------------
// Dropout (inverted scaling). Only active in training with p > 0.
// --------------------------------------------------------------------------
template <typename Scalar>
class Dropout {
public:
    Dropout() = default;
    explicit Dropout(double p) : p_(p) {
        if (p < 0 || p >= 1) throw InvalidArgument("Dropout: p must be in [0,1)");
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train, Rng* rng) {
        if (!train || p_ == 0.0) {
            active_ = false;
            return x;
        }
        if (!rng) throw InvalidState("Dropout: rng required in training mode");
        active_ = true;
        mask_ = Tensor<Scalar>(x.n(), x.c(), x.h(), x.w());
        const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - p_));
        for (Index i = 0; i < mask_.size(); ++i)
            mask_.data()[i] = rng->uniform() < p_ ? Scalar(0) : keep_scale;
        Tensor<Scalar> out = x;
        out.vec().array() *= mask_.vec().array();
        return out;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dout) {
        if (!active_) return dout;
        Tensor<Scalar> dx = dout;
        dx.vec().array() *= mask_.vec().array();
        return dx;
    }

private:
    double p_ = 0.0;
    bool active_ = false;
    Tensor<Scalar> mask_;
};

// --------------------------------------------------------------------------
// Nearest-neighbour resize to an explicit target size (handles odd sizes on
// the decoder path). Backward scatter-adds.
// --------------------------------------------------------------------------
template <typename Scalar>
class NearestResize {
public:
    Tensor<Scalar> forward(const Tensor<Scalar>& x, Index ho, Index wo, bool train) {
        if (train) {
            in_h_ = x.h();
            in_w_ = x.w();
        }
        Tensor<Scalar> out(x.n(), x.c(), ho, wo);
        const Index h = x.h(), w = x.w();
        parallel_for(x.n(), [&](Index b, Index e, int) {
            for (Index i = b; i < e; ++i) {
                for (Index c = 0; c < x.c(); ++c) {
                    const Scalar* src = x.sample_data(i) + c * h * w;
                    Scalar* dst = out.sample_data(i) + c * ho * wo;
                    for (Index oy = 0; oy < ho; ++oy) {
                        const Index iy = oy * h / ho;
                        for (Index ox = 0; ox < wo; ++ox)
                            dst[oy * wo + ox] = src[iy * w + ox * w / wo];
                    }
                }
            }
        });
        return out;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dout) {
        const Index ho = dout.h(), wo = dout.w(), h = in_h_, w = in_w_;
        Tensor<Scalar> dx(dout.n(), dout.c(), h, w);
        parallel_for(dout.n(), [&](Index b, Index e, int) {
            for (Index i = b; i < e; ++i) {
                for (Index c = 0; c < dout.c(); ++c) {
                    const Scalar* src = dout.sample_data(i) + c * ho * wo;
                    Scalar* dst = dx.sample_data(i) + c * h * w;
                    for (Index oy = 0; oy < ho; ++oy) {
                        const Index iy = oy * h / ho;
                        for (Index ox = 0; ox < wo; ++ox)
                            dst[iy * w + ox * w / wo] += src[oy * wo + ox];
                    }
                }
            }
        });
        return dx;
    }

private:
    Index in_h_ = 0, in_w_ = 0;
};

// --------------------------------------------------------------------------
// Multi-head self-attention over spatial positions, pre-norm, residual,
// zero-initialized output projection.
// --------------------------------------------------------------------------
template <typename Scalar>
class SelfAttention2d {
public:
    SelfAttention2d() = default;
    SelfAttention2d(Index channels, Index heads)
        : c_(channels), heads_(heads), dh_(channels / heads), norm_(channels),
          qkv_(channels, 3 * channels), proj_(channels, channels) {
        if (channels % heads != 0)
            throw InvalidArgument("SelfAttention2d: heads must divide channels");
    }

    void init(Rng& rng) {
        qkv_.init(rng, false);
        proj_.init(rng, /*zero=*/true);
    }

    void register_params(ParamRegistry<Scalar>& reg, const std::string& prefix) {
        norm_.register_params(reg, prefix + ".norm");
        qkv_.register_params(reg, prefix + ".qkv");
        proj_.register_params(reg, prefix + ".proj");
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) {
        const Index n = x.n(), hw = x.h() * x.w();
        Tensor<Scalar> hnorm = norm_.forward(x, train);
        if (train) {
            qkv_cache_.assign(static_cast<std::size_t>(n), {});
            attn_cache_.assign(static_cast<std::size_t>(n), {});
            hnorm_cache_ = hnorm;
        }
        Tensor<Scalar> out = x;  // residual base
        const Scalar scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(dh_)));

        parallel_for(n, [&](Index b, Index e, int) {
            for (Index i = b; i < e; ++i) {
                Eigen::Map<const MatX<Scalar>> hmat(hnorm.sample_data(i), hw, c_);
                MatX<Scalar> qkv = hmat * qkv_.w;
                qkv.rowwise() += qkv_.b.transpose();
                MatX<Scalar> o(hw, c_);
                std::vector<MatX<Scalar>> attn(static_cast<std::size_t>(heads_));
                for (Index hd = 0; hd < heads_; ++hd) {
                    auto q = qkv.middleCols(hd * dh_, dh_);
                    auto k = qkv.middleCols(c_ + hd * dh_, dh_);
                    auto v = qkv.middleCols(2 * c_ + hd * dh_, dh_);
                    MatX<Scalar> s = (q * k.transpose()) * scale;
                    for (Index r = 0; r < hw; ++r) {
                        const Scalar mx = s.row(r).maxCoeff();
                        s.row(r) = (s.row(r).array() - mx).exp();
                        s.row(r) /= s.row(r).sum();
                    }
                    o.middleCols(hd * dh_, dh_).noalias() = s * v;
                    attn[static_cast<std::size_t>(hd)] = std::move(s);
                }
                MatX<Scalar> y = o * proj_.w;
                y.rowwise() += proj_.b.transpose();
                Eigen::Map<MatX<Scalar>>(out.sample_data(i), hw, c_) += y;
                if (train) {
                    qkv_cache_[static_cast<std::size_t>(i)] = std::move(qkv);
                    attn_cache_[static_cast<std::size_t>(i)] = std::move(attn);
                }
            }
        });
        return out;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dout) {
        const Index n = dout.n(), hw = dout.h() * dout.w();
        const Scalar scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(dh_)));
        Tensor<Scalar> dhnorm(dout.n(), dout.c(), dout.h(), dout.w());
        const Index wq = qkv_.w.size(), wp = proj_.w.size();
        const Index grad_len = wq + 3 * c_ + wp + c_;

        std::vector<Scalar> acc(static_cast<std::size_t>(grad_len), Scalar(0));
        detail::reduce_over_samples<Scalar>(n, grad_len, acc.data(),
            [&](Index b, Index e, Scalar* buf) {
                Eigen::Map<MatX<Scalar>> dwqkv(buf, c_, 3 * c_);
                Eigen::Map<VecX<Scalar>> dbqkv(buf + wq, 3 * c_);
                Eigen::Map<MatX<Scalar>> dwproj(buf + wq + 3 * c_, c_, c_);
                Eigen::Map<VecX<Scalar>> dbproj(buf + wq + 3 * c_ + wp, c_);
                for (Index i = b; i < e; ++i) {
                    Eigen::Map<const MatX<Scalar>> dy(dout.sample_data(i), hw, c_);
                    const MatX<Scalar>& qkv = qkv_cache_[static_cast<std::size_t>(i)];
                    const auto& attn = attn_cache_[static_cast<std::size_t>(i)];
                    MatX<Scalar> o(hw, c_);
                    for (Index hd = 0; hd < heads_; ++hd)
                        o.middleCols(hd * dh_, dh_).noalias() =
                            attn[static_cast<std::size_t>(hd)] * qkv.middleCols(2 * c_ + hd * dh_, dh_);
                    dwproj.noalias() += o.transpose() * dy;
                    dbproj.noalias() += dy.colwise().sum().transpose();
                    MatX<Scalar> dO = dy * proj_.w.transpose();

                    MatX<Scalar> dqkv(hw, 3 * c_);
                    for (Index hd = 0; hd < heads_; ++hd) {
                        const MatX<Scalar>& a = attn[static_cast<std::size_t>(hd)];
                        auto q = qkv.middleCols(hd * dh_, dh_);
                        auto k = qkv.middleCols(c_ + hd * dh_, dh_);
                        auto dO_h = dO.middleCols(hd * dh_, dh_);
                        MatX<Scalar> da = dO_h * qkv.middleCols(2 * c_ + hd * dh_, dh_).transpose();
                        VecX<Scalar> rowsum = a.cwiseProduct(da).rowwise().sum();
                        MatX<Scalar> ds = a.cwiseProduct(da.colwise() - rowsum);
                        dqkv.middleCols(hd * dh_, dh_).noalias() = (ds * k) * scale;
                        dqkv.middleCols(c_ + hd * dh_, dh_).noalias() = (ds.transpose() * q) * scale;
                        dqkv.middleCols(2 * c_ + hd * dh_, dh_).noalias() = a.transpose() * dO_h;
                    }
                    Eigen::Map<const MatX<Scalar>> hmat(hnorm_cache_.sample_data(i), hw, c_);
                    dwqkv.noalias() += hmat.transpose() * dqkv;
                    dbqkv.noalias() += dqkv.colwise().sum().transpose();
                    Eigen::Map<MatX<Scalar>>(dhnorm.sample_data(i), hw, c_).noalias() =
                        dqkv * qkv_.w.transpose();
                }
            });
        qkv_.wg += Eigen::Map<MatX<Scalar>>(acc.data(), c_, 3 * c_);
        qkv_.bg += Eigen::Map<VecX<Scalar>>(acc.data() + wq, 3 * c_);
        proj_.wg += Eigen::Map<MatX<Scalar>>(acc.data() + wq + 3 * c_, c_, c_);
        proj_.bg += Eigen::Map<VecX<Scalar>>(acc.data() + wq + 3 * c_ + wp, c_);

        Tensor<Scalar> dx = norm_.backward(dhnorm);
        dx.vec() += dout.vec();  // residual
        return dx;
    }

private:
    Index c_ = 0, heads_ = 1, dh_ = 0;
    GroupNorm<Scalar> norm_;
    detail::Dense<Scalar> qkv_, proj_;
    Tensor<Scalar> hnorm_cache_;
    std::vector<MatX<Scalar>> qkv_cache_;
    std::vector<std::vector<MatX<Scalar>>> attn_cache_;
};

}  // namespace nn
}  // namespace symmflow
