#pragma once

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "symmflow/core/errors.hpp"
#include "symmflow/core/rng.hpp"
#include "symmflow/core/tensor.hpp"
#include "symmflow/nn/layers.hpp"

namespace symmflow {

// Architecture of the joint velocity field. The network consumes the
// channel-concatenated (image state, label state) pair plus a time embedding
// and emits one velocity channel per state channel.
struct VelocityNetConfig {
    Index base_channels = 32;
    Index depth_per_resolution = 1;
    std::vector<Index> channel_multiples = {1, 2};
    Index attention_heads = 4;
    Index head_channels = 64;
    Index attention_resolution = 0;  // downsample factor carrying attention, 0 disables
    double dropout = 0.0;
    Index image_channels = 3;
    Index label_channels = 3;

    Index in_channels() const { return image_channels + label_channels; }
    Index levels() const { return static_cast<Index>(channel_multiples.size()); }
    Index channels_at(Index level) const {
        return base_channels * channel_multiples[static_cast<std::size_t>(level)];
    }
    Index temb_dim() const { return 4 * base_channels; }

    void validate() const {
        if (base_channels < 1) throw InvalidArgument("VelocityNetConfig: base_channels < 1");
        if (channel_multiples.empty())
            throw InvalidArgument("VelocityNetConfig: channel_multiples empty");
        if (depth_per_resolution < 1)
            throw InvalidArgument("VelocityNetConfig: depth_per_resolution < 1");
        if (dropout < 0 || dropout >= 1)
            throw InvalidArgument("VelocityNetConfig: dropout must be in [0,1)");
        if (image_channels < 1 || label_channels < 1)
            throw InvalidArgument("VelocityNetConfig: channel counts must be >= 1");
    }

    bool operator==(const VelocityNetConfig&) const = default;
};

// Sinusoidal time embedding: dim/2 geometrically spaced frequencies from 1 to
// 1e4, sines then cosines.
inline Eigen::VectorXd time_embedding(double t, Index dim) {
    if (dim < 2 || dim % 2 != 0)
        throw InvalidArgument("time_embedding: dim must be even and >= 2");
    const Index half = dim / 2;
    Eigen::VectorXd emb(dim);
    for (Index k = 0; k < half; ++k) {
        const double omega =
            half > 1 ? std::pow(10.0, 4.0 * static_cast<double>(k) / static_cast<double>(half - 1))
                     : 1.0;
        emb[k] = std::sin(t * omega);
        emb[half + k] = std::cos(t * omega);
    }
    return emb;
}

namespace nn {

// GroupNorm -> SiLU -> conv, time-modulated second norm (scale and shift from
// the embedding), zero-initialized final conv so blocks start near identity.
template <typename Scalar>
class ResBlock {
public:
    ResBlock(Index cin, Index cout, Index temb_dim, double dropout)
        : cin_(cin), cout_(cout),
          gn1_(cin), conv1_(cin, cout, 3, 1, 1),
          temb_proj_(temb_dim, 2 * cout),
          gn2_(cout), drop_(dropout), conv2_(cout, cout, 3, 1, 1),
          has_skip_(cin != cout) {
        if (has_skip_) skip_ = std::make_unique<Conv2d<Scalar>>(cin, cout, 1, 1, 0);
    }

    void init(Rng& rng) {
        conv1_.init(rng);
        temb_proj_.init(rng);
        conv2_.init(rng, /*zero=*/true);
        if (skip_) skip_->init(rng);
    }

    void register_params(ParamRegistry<Scalar>& reg, const std::string& p) {
        gn1_.register_params(reg, p + ".gn1");
        conv1_.register_params(reg, p + ".conv1");
        temb_proj_.register_params(reg, p + ".temb_proj");
        gn2_.register_params(reg, p + ".gn2");
        conv2_.register_params(reg, p + ".conv2");
        if (skip_) skip_->register_params(reg, p + ".skip");
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, const MatX<Scalar>& temb, bool train,
                           Rng* dropout_rng) {
        Tensor<Scalar> h = conv1_.forward(act1_.forward(gn1_.forward(x, train), train), train);

        // silu on the embedding, then affine parameters per (sample, channel)
        if (train) temb_in_ = temb;
        MatX<Scalar> st = temb.unaryExpr([](Scalar v) { return v * sigmoid(v); });
        MatX<Scalar> sb = temb_proj_.forward(st, train);

        Tensor<Scalar> g = gn2_.forward(h, train);
        if (train) {
            gnorm_out_ = g;
            scale_ = sb.leftCols(cout_);
        }
        Tensor<Scalar> h2(g.n(), cout_, g.h(), g.w());
        const Index hw = g.h() * g.w();
        parallel_for(g.n(), [&](Index nb, Index ne, int) {
            for (Index i = nb; i < ne; ++i) {
                for (Index c = 0; c < cout_; ++c) {
                    const Scalar s = sb(i, c), b = sb(i, cout_ + c);
                    const Scalar* gp = g.sample_data(i) + c * hw;
                    Scalar* op = h2.sample_data(i) + c * hw;
                    for (Index j = 0; j < hw; ++j) op[j] = gp[j] * (Scalar(1) + s) + b;
                }
            }
        });

        Tensor<Scalar> h3 =
            conv2_.forward(drop_.forward(act2_.forward(h2, train), train, dropout_rng), train);

        Tensor<Scalar> base = has_skip_ ? skip_->forward(x, train) : x;
        h3.vec() += base.vec();
        return h3;
    }

    // Returns dx; the embedding gradient is accumulated into dtemb.
    Tensor<Scalar> backward(const Tensor<Scalar>& dout, MatX<Scalar>& dtemb) {
        Tensor<Scalar> d2 = act2_.backward(drop_.backward(conv2_.backward(dout)));

        const Tensor<Scalar>& g = gnorm_out_;
        const Index hw = g.h() * g.w(), n = g.n();
        Tensor<Scalar> dg(n, cout_, g.h(), g.w());
        MatX<Scalar> dsb(n, 2 * cout_);
        parallel_for(n, [&](Index nb, Index ne, int) {
            for (Index i = nb; i < ne; ++i) {
                for (Index c = 0; c < cout_; ++c) {
                    const Scalar s = scale_(i, c);
                    const Scalar* dp = d2.sample_data(i) + c * hw;
                    const Scalar* gp = g.sample_data(i) + c * hw;
                    Scalar* op = dg.sample_data(i) + c * hw;
                    double ds = 0.0, db = 0.0;
                    for (Index j = 0; j < hw; ++j) {
                        op[j] = dp[j] * (Scalar(1) + s);
                        ds += static_cast<double>(dp[j]) * gp[j];
                        db += static_cast<double>(dp[j]);
                    }
                    dsb(i, c) = static_cast<Scalar>(ds);
                    dsb(i, cout_ + c) = static_cast<Scalar>(db);
                }
            }
        });
        MatX<Scalar> dst = temb_proj_.backward(dsb);
        dtemb += dst.binaryExpr(temb_in_, [](Scalar d, Scalar v) {
            const Scalar sg = sigmoid(v);
            return d * sg * (Scalar(1) + v * (Scalar(1) - sg));
        });

        Tensor<Scalar> dh = gn2_.backward(dg);
        Tensor<Scalar> dx = gn1_.backward(act1_.backward(conv1_.backward(dh)));
        if (has_skip_) {
            Tensor<Scalar> dskip = skip_->backward(dout);
            dx.vec() += dskip.vec();
        } else {
            dx.vec() += dout.vec();
        }
        return dx;
    }

private:
    Index cin_, cout_;
    GroupNorm<Scalar> gn1_;
    SiLU<Scalar> act1_;
    Conv2d<Scalar> conv1_;
    Linear<Scalar> temb_proj_;
    GroupNorm<Scalar> gn2_;
    SiLU<Scalar> act2_;
    Dropout<Scalar> drop_;
    Conv2d<Scalar> conv2_;
    bool has_skip_;
    std::unique_ptr<Conv2d<Scalar>> skip_;

    MatX<Scalar> temb_in_, scale_;
    Tensor<Scalar> gnorm_out_;
};

}  // namespace nn

// The joint velocity field v(x_t, y_t, t). U-Net trunk over the concatenated
// state with per-level skip connections; output split back into the image and
// label velocity heads by channel.
template <typename Scalar>
class VelocityNet {
public:
    explicit VelocityNet(const VelocityNetConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        build();
        register_all();
    }

    VelocityNet(const VelocityNet&) = delete;
    VelocityNet& operator=(const VelocityNet&) = delete;

    const VelocityNetConfig& config() const { return cfg_; }
    nn::ParamRegistry<Scalar>& params() { return reg_; }
    Index param_count() const { return reg_.total_size(); }

    void init(Rng& rng) {
        stem_.init(rng);
        temb_mlp1_.init(rng);
        temb_mlp2_.init(rng);
        for (auto& b : down_blocks_) b->init(rng);
        for (auto& a : down_attn_)
            if (a) a->init(rng);
        for (auto& c : downsamples_) c->init(rng);
        mid1_->init(rng);
        if (mid_attn_) mid_attn_->init(rng);
        mid2_->init(rng);
        for (auto& c : up_convs_) c->init(rng);
        for (auto& b : up_blocks_) b->init(rng);
        for (auto& a : up_attn_)
            if (a) a->init(rng);
        out_conv_.init(rng, /*zero=*/true);
    }

    void set_dropout_rng(Rng* rng) { dropout_rng_ = rng; }

    // (v_x, v_y) with the shapes of (x_t, y_t)
    void evaluate(const Tensor<Scalar>& x_t, const Tensor<Scalar>& y_t,
                  const std::vector<double>& t, Tensor<Scalar>& v_x, Tensor<Scalar>& v_y,
                  bool train = false) {
        if (x_t.c() != cfg_.image_channels || y_t.c() != cfg_.label_channels)
            throw InvalidArgument("VelocityNet: channel mismatch with config");
        if (x_t.n() != y_t.n() || x_t.h() != y_t.h() || x_t.w() != y_t.w())
            throw InvalidArgument("VelocityNet: state shapes disagree");
        if (static_cast<Index>(t.size()) != x_t.n())
            throw InvalidArgument("VelocityNet: t size mismatch");

        Tensor<Scalar> joint = concat_channels(x_t, y_t);
        Tensor<Scalar> out = forward(joint, t, train);
        split_channels(out, v_x, v_y);
    }

    // Backward from head gradients; accumulates parameter gradients.
    void backward(const Tensor<Scalar>& grad_vx, const Tensor<Scalar>& grad_vy) {
        Tensor<Scalar> dout = concat_channels(grad_vx, grad_vy);
        backward_joint(dout);
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& joint, const std::vector<double>& t, bool train) {
        const Index n = joint.n();
        const Index levels = cfg_.levels(), depth = cfg_.depth_per_resolution;

        // time embedding trunk
        MatX<Scalar> sinu(n, cfg_.base_channels);
        for (Index i = 0; i < n; ++i) {
            Eigen::VectorXd e = time_embedding(t[static_cast<std::size_t>(i)], cfg_.base_channels);
            for (Index j = 0; j < cfg_.base_channels; ++j) sinu(i, j) = static_cast<Scalar>(e[j]);
        }
        MatX<Scalar> m1 = temb_mlp1_.forward(sinu, train);
        if (train) temb_mid_ = m1;
        MatX<Scalar> m1s = m1.unaryExpr([](Scalar v) { return v * nn::sigmoid(v); });
        MatX<Scalar> temb = temb_mlp2_.forward(m1s, train);

        Tensor<Scalar> h = stem_.forward(joint, train);
        skips_.clear();
        level_shapes_.assign(static_cast<std::size_t>(levels), {0, 0});

        Index bi = 0;  // down block cursor
        for (Index l = 0; l < levels; ++l) {
            level_shapes_[static_cast<std::size_t>(l)] = {h.h(), h.w()};
            for (Index d = 0; d < depth; ++d) {
                h = down_blocks_[static_cast<std::size_t>(bi)]->forward(h, temb, train, dropout_rng_);
                if (down_attn_[static_cast<std::size_t>(bi)])
                    h = down_attn_[static_cast<std::size_t>(bi)]->forward(h, train);
                ++bi;
            }
            if (l < levels - 1) {
                skips_.push_back(h);
                h = downsamples_[static_cast<std::size_t>(l)]->forward(h, train);
            }
        }

        h = mid1_->forward(h, temb, train, dropout_rng_);
        if (mid_attn_) h = mid_attn_->forward(h, train);
        h = mid2_->forward(h, temb, train, dropout_rng_);

        bi = 0;  // up block cursor
        for (Index l = levels - 2; l >= 0; --l) {
            auto [sh, sw] = level_shapes_[static_cast<std::size_t>(l)];
            h = up_resizes_[static_cast<std::size_t>(levels - 2 - l)].forward(h, sh, sw, train);
            h = up_convs_[static_cast<std::size_t>(levels - 2 - l)]->forward(h, train);
            h = concat_channels(h, skips_.back());
            skips_.pop_back();
            for (Index d = 0; d < depth; ++d) {
                h = up_blocks_[static_cast<std::size_t>(bi)]->forward(h, temb, train, dropout_rng_);
                if (up_attn_[static_cast<std::size_t>(bi)])
                    h = up_attn_[static_cast<std::size_t>(bi)]->forward(h, train);
                ++bi;
            }
        }

        h = out_act_.forward(out_gn_.forward(h, train), train);
        return out_conv_.forward(h, train);
    }

    void backward_joint(const Tensor<Scalar>& dout) {
        const Index levels = cfg_.levels(), depth = cfg_.depth_per_resolution;
        MatX<Scalar> dtemb = MatX<Scalar>::Zero(dout.n(), cfg_.temb_dim());

        Tensor<Scalar> d = out_gn_.backward(out_act_.backward(out_conv_.backward(dout)));

        std::vector<Tensor<Scalar>> dskips;
        Index bi = static_cast<Index>(up_blocks_.size());
        for (Index l = 0; l <= levels - 2; ++l) {  // reverse of the up loop
            for (Index dd = 0; dd < depth; ++dd) {
                --bi;
                if (up_attn_[static_cast<std::size_t>(bi)])
                    d = up_attn_[static_cast<std::size_t>(bi)]->backward(d);
                d = up_blocks_[static_cast<std::size_t>(bi)]->backward(d, dtemb);
            }
            Tensor<Scalar> dup, dskip;
            split_at(d, up_convs_[static_cast<std::size_t>(levels - 2 - l)]->cout(), dup, dskip);
            dskips.push_back(std::move(dskip));
            d = up_resizes_[static_cast<std::size_t>(levels - 2 - l)].backward(
                up_convs_[static_cast<std::size_t>(levels - 2 - l)]->backward(dup));
        }

        d = mid2_->backward(d, dtemb);
        if (mid_attn_) d = mid_attn_->backward(d);
        d = mid1_->backward(d, dtemb);

        bi = static_cast<Index>(down_blocks_.size());
        for (Index l = levels - 1; l >= 0; --l) {
            if (l < levels - 1) {
                d = downsamples_[static_cast<std::size_t>(l)]->backward(d);
                d.vec() += dskips[static_cast<std::size_t>(l)].vec();  // dskips[i] is level i
            }
            for (Index dd = 0; dd < depth; ++dd) {
                --bi;
                if (down_attn_[static_cast<std::size_t>(bi)])
                    d = down_attn_[static_cast<std::size_t>(bi)]->backward(d);
                d = down_blocks_[static_cast<std::size_t>(bi)]->backward(d, dtemb);
            }
        }
        d = stem_.backward(d);

        // embedding trunk
        MatX<Scalar> dm1s = temb_mlp2_.backward(dtemb);
        MatX<Scalar> dm1 = dm1s.binaryExpr(temb_mid_, [](Scalar g, Scalar v) {
            const Scalar s = nn::sigmoid(v);
            return g * s * (Scalar(1) + v * (Scalar(1) - s));
        });
        temb_mlp1_.backward(dm1);
    }

    static Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
        if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
            throw InvalidArgument("concat_channels: spatial/batch mismatch");
        Tensor<Scalar> out(a.n(), a.c() + b.c(), a.h(), a.w());
        const Index sa = a.sample_size(), sb = b.sample_size();
        for (Index i = 0; i < a.n(); ++i) {
            std::copy(a.sample_data(i), a.sample_data(i) + sa, out.sample_data(i));
            std::copy(b.sample_data(i), b.sample_data(i) + sb, out.sample_data(i) + sa);
        }
        return out;
    }

    void split_channels(const Tensor<Scalar>& joint, Tensor<Scalar>& vx, Tensor<Scalar>& vy) const {
        split_at(joint, cfg_.image_channels, vx, vy);
    }

    static void split_at(const Tensor<Scalar>& joint, Index c_first, Tensor<Scalar>& a,
                         Tensor<Scalar>& b) {
        const Index c_rest = joint.c() - c_first;
        a = Tensor<Scalar>(joint.n(), c_first, joint.h(), joint.w());
        b = Tensor<Scalar>(joint.n(), c_rest, joint.h(), joint.w());
        const Index hw = joint.h() * joint.w();
        for (Index i = 0; i < joint.n(); ++i) {
            std::copy(joint.sample_data(i), joint.sample_data(i) + c_first * hw, a.sample_data(i));
            std::copy(joint.sample_data(i) + c_first * hw,
                      joint.sample_data(i) + joint.sample_size(), b.sample_data(i));
        }
    }

private:
    Index heads_for(Index channels) const {
        if (cfg_.head_channels > 0 && channels % cfg_.head_channels == 0)
            return channels / cfg_.head_channels;
        if (cfg_.attention_heads > 0 && channels % cfg_.attention_heads == 0)
            return cfg_.attention_heads;
        return 1;
    }

    bool attn_at_level(Index l) const {
        return cfg_.attention_resolution > 0 && (Index(1) << l) == cfg_.attention_resolution;
    }

    void build() {
        const Index levels = cfg_.levels(), depth = cfg_.depth_per_resolution;
        const Index td = cfg_.temb_dim();
        stem_ = nn::Conv2d<Scalar>(cfg_.in_channels(), cfg_.channels_at(0), 3, 1, 1);
        temb_mlp1_ = nn::Linear<Scalar>(cfg_.base_channels, td);
        temb_mlp2_ = nn::Linear<Scalar>(td, td);

        Index cur = cfg_.channels_at(0);
        for (Index l = 0; l < levels; ++l) {
            const Index ch = cfg_.channels_at(l);
            for (Index d = 0; d < depth; ++d) {
                down_blocks_.push_back(
                    std::make_unique<nn::ResBlock<Scalar>>(cur, ch, td, cfg_.dropout));
                down_attn_.push_back(attn_at_level(l)
                                         ? std::make_unique<nn::SelfAttention2d<Scalar>>(
                                               ch, heads_for(ch))
                                         : nullptr);
                cur = ch;
            }
            if (l < levels - 1)
                downsamples_.push_back(std::make_unique<nn::Conv2d<Scalar>>(ch, ch, 3, 2, 1));
        }

        const Index mid_ch = cfg_.channels_at(levels - 1);
        mid1_ = std::make_unique<nn::ResBlock<Scalar>>(mid_ch, mid_ch, td, cfg_.dropout);
        mid_attn_ = cfg_.attention_resolution > 0
                        ? std::make_unique<nn::SelfAttention2d<Scalar>>(mid_ch, heads_for(mid_ch))
                        : nullptr;
        mid2_ = std::make_unique<nn::ResBlock<Scalar>>(mid_ch, mid_ch, td, cfg_.dropout);

        up_resizes_.resize(static_cast<std::size_t>(levels - 1));
        for (Index l = levels - 2; l >= 0; --l) {
            const Index ch = cfg_.channels_at(l);
            const Index ch_below = cfg_.channels_at(l + 1);
            up_convs_.push_back(std::make_unique<nn::Conv2d<Scalar>>(ch_below, ch, 3, 1, 1));
            Index c = 2 * ch;  // upsampled + skip
            for (Index d = 0; d < depth; ++d) {
                up_blocks_.push_back(std::make_unique<nn::ResBlock<Scalar>>(c, ch, td, cfg_.dropout));
                up_attn_.push_back(attn_at_level(l)
                                       ? std::make_unique<nn::SelfAttention2d<Scalar>>(
                                             ch, heads_for(ch))
                                       : nullptr);
                c = ch;
            }
        }

        out_gn_ = nn::GroupNorm<Scalar>(cfg_.channels_at(0));
        out_conv_ = nn::Conv2d<Scalar>(cfg_.channels_at(0), cfg_.in_channels(), 3, 1, 1);
    }

    void register_all() {
        stem_.register_params(reg_, "stem");
        temb_mlp1_.register_params(reg_, "temb.mlp1");
        temb_mlp2_.register_params(reg_, "temb.mlp2");
        for (std::size_t i = 0; i < down_blocks_.size(); ++i) {
            down_blocks_[i]->register_params(reg_, "down" + std::to_string(i));
            if (down_attn_[i]) down_attn_[i]->register_params(reg_, "down" + std::to_string(i) + ".attn");
        }
        for (std::size_t i = 0; i < downsamples_.size(); ++i)
            downsamples_[i]->register_params(reg_, "downsample" + std::to_string(i));
        mid1_->register_params(reg_, "mid1");
        if (mid_attn_) mid_attn_->register_params(reg_, "mid.attn");
        mid2_->register_params(reg_, "mid2");
        for (std::size_t i = 0; i < up_convs_.size(); ++i)
            up_convs_[i]->register_params(reg_, "upconv" + std::to_string(i));
        for (std::size_t i = 0; i < up_blocks_.size(); ++i) {
            up_blocks_[i]->register_params(reg_, "up" + std::to_string(i));
            if (up_attn_[i]) up_attn_[i]->register_params(reg_, "up" + std::to_string(i) + ".attn");
        }
        out_gn_.register_params(reg_, "out.gn");
        out_conv_.register_params(reg_, "out.conv");
    }

    VelocityNetConfig cfg_;
    nn::ParamRegistry<Scalar> reg_;

    nn::Conv2d<Scalar> stem_;
    nn::Linear<Scalar> temb_mlp1_, temb_mlp2_;
    std::vector<std::unique_ptr<nn::ResBlock<Scalar>>> down_blocks_;
    std::vector<std::unique_ptr<nn::SelfAttention2d<Scalar>>> down_attn_;
    std::vector<std::unique_ptr<nn::Conv2d<Scalar>>> downsamples_;
    std::unique_ptr<nn::ResBlock<Scalar>> mid1_, mid2_;
    std::unique_ptr<nn::SelfAttention2d<Scalar>> mid_attn_;
    std::vector<nn::NearestResize<Scalar>> up_resizes_;
    std::vector<std::unique_ptr<nn::Conv2d<Scalar>>> up_convs_;
    std::vector<std::unique_ptr<nn::ResBlock<Scalar>>> up_blocks_;
    std::vector<std::unique_ptr<nn::SelfAttention2d<Scalar>>> up_attn_;
    nn::GroupNorm<Scalar> out_gn_;
    nn::SiLU<Scalar> out_act_;
    nn::Conv2d<Scalar> out_conv_;

    MatX<Scalar> temb_mid_;
    std::vector<Tensor<Scalar>> skips_;
    std::vector<std::pair<Index, Index>> level_shapes_;
    Rng* dropout_rng_ = nullptr;
};

}  // namespace symmflow
