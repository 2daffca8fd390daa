#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "symmflow/core/errors.hpp"
#include "symmflow/core/rng.hpp"
#include "symmflow/core/tensor.hpp"
#include "symmflow/nn/layers.hpp"

namespace symmflow {

struct VaeConfig {
    Index in_channels = 3;
    Index base_channels = 32;
    Index latent_channels = 4;
    Index downsample = 4;  // spatial reduction factor, power of two
    double kl_weight = 1e-4;

    Index stages() const {
        Index d = downsample, s = 0;
        while (d > 1) {
            if (d % 2 != 0) throw InvalidArgument("VaeConfig: downsample must be a power of two");
            d /= 2;
            ++s;
        }
        return s;
    }

    bool operator==(const VaeConfig&) const = default;
};

namespace nn {

template <typename Scalar>
class Tanh {
public:
    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) {
        Tensor<Scalar> out(x.n(), x.c(), x.h(), x.w());
        out.vec() = x.vec().array().tanh();
        if (train) output_ = out;
        return out;
    }
    Tensor<Scalar> backward(const Tensor<Scalar>& dout) {
        Tensor<Scalar> dx = dout;
        dx.vec().array() *= (Scalar(1) - output_.vec().array().square());
        return dx;
    }

private:
    Tensor<Scalar> output_;
};

}  // namespace nn

// Small convolutional VAE standing in for a general pretrained autoencoder:
// two stride-2 stages down to latent_channels maps at 1/downsample resolution,
// mirrored nearest-resize decoder with tanh output. encode() returns the
// posterior mean so inference stays deterministic.
template <typename Scalar>
class ConvVae {
public:
    explicit ConvVae(const VaeConfig& cfg) : cfg_(cfg) {
        const Index s = cfg.stages();
        const Index b = cfg.base_channels;

        enc_convs_.push_back(std::make_unique<nn::Conv2d<Scalar>>(cfg.in_channels, b, 3, 1, 1));
        Index ch = b;
        for (Index i = 0; i < s; ++i) {
            const Index next = std::min<Index>(2 * b, ch * 2);
            enc_norms_.push_back(std::make_unique<nn::GroupNorm<Scalar>>(ch));
            enc_convs_.push_back(std::make_unique<nn::Conv2d<Scalar>>(ch, next, 3, 2, 1));
            ch = next;
        }
        enc_norms_.push_back(std::make_unique<nn::GroupNorm<Scalar>>(ch));
        enc_head_ = std::make_unique<nn::Conv2d<Scalar>>(ch, 2 * cfg.latent_channels, 3, 1, 1);
        enc_top_channels_ = ch;

        dec_convs_.push_back(std::make_unique<nn::Conv2d<Scalar>>(cfg.latent_channels, ch, 3, 1, 1));
        for (Index i = 0; i < s; ++i) {
            const Index next = (i + 1 == s) ? b : ch;
            dec_norms_.push_back(std::make_unique<nn::GroupNorm<Scalar>>(ch));
            dec_convs_.push_back(std::make_unique<nn::Conv2d<Scalar>>(ch, next, 3, 1, 1));
            ch = next;
        }
        dec_norms_.push_back(std::make_unique<nn::GroupNorm<Scalar>>(ch));
        dec_head_ = std::make_unique<nn::Conv2d<Scalar>>(ch, cfg.in_channels, 3, 1, 1);
        dec_resizes_.resize(static_cast<std::size_t>(s));
        enc_acts_.resize(enc_norms_.size());
        dec_acts_.resize(dec_norms_.size());
        register_all();
    }

    ConvVae(const ConvVae&) = delete;
    ConvVae& operator=(const ConvVae&) = delete;

    const VaeConfig& config() const { return cfg_; }
    nn::ParamRegistry<Scalar>& params() { return reg_; }
    Index param_count() const { return reg_.total_size(); }

    void init(Rng& rng) {
        for (auto& c : enc_convs_) c->init(rng);
        enc_head_->init(rng);
        for (auto& c : dec_convs_) c->init(rng);
        dec_head_->init(rng);
    }

    // posterior statistics; latent spatial dims are ceil(h / downsample)
    void encode_stats(const Tensor<Scalar>& x, Tensor<Scalar>& mu, Tensor<Scalar>& logvar,
                      bool train = false) {
        if (x.c() != cfg_.in_channels) throw InvalidArgument("ConvVae: input channel mismatch");
        Tensor<Scalar> h = enc_convs_[0]->forward(x, train);
        for (std::size_t i = 0; i + 1 < enc_convs_.size(); ++i) {
            h = enc_acts_[i].forward(enc_norms_[i]->forward(h, train), train);
            h = enc_convs_[i + 1]->forward(h, train);
        }
        h = enc_acts_.back().forward(enc_norms_.back()->forward(h, train), train);
        Tensor<Scalar> stats = enc_head_->forward(h, train);
        split_stats(stats, mu, logvar);
    }

    // deterministic encoding (posterior mean)
    Tensor<Scalar> encode(const Tensor<Scalar>& x) {
        Tensor<Scalar> mu, logvar;
        encode_stats(x, mu, logvar, false);
        return mu;
    }

    Tensor<Scalar> decode(const Tensor<Scalar>& z, Index out_h, Index out_w, bool train = false) {
        if (z.c() != cfg_.latent_channels) throw InvalidArgument("ConvVae: latent channel mismatch");
        // target sizes mirror the encoder's ceil(h/2) chain
        const Index s = cfg_.stages();
        std::vector<std::pair<Index, Index>> sizes(static_cast<std::size_t>(s));
        Index th = out_h, tw = out_w;
        for (Index i = s - 1; i >= 0; --i) {
            sizes[static_cast<std::size_t>(i)] = {th, tw};
            th = (th + 1) / 2;
            tw = (tw + 1) / 2;
        }
        Tensor<Scalar> h = dec_convs_[0]->forward(z, train);
        for (Index i = 0; i < s; ++i) {
            h = dec_acts_[static_cast<std::size_t>(i)].forward(
                dec_norms_[static_cast<std::size_t>(i)]->forward(h, train), train);
            h = dec_resizes_[static_cast<std::size_t>(i)].forward(
                h, sizes[static_cast<std::size_t>(i)].first, sizes[static_cast<std::size_t>(i)].second, train);
            h = dec_convs_[static_cast<std::size_t>(i) + 1]->forward(h, train);
        }
        h = dec_acts_.back().forward(dec_norms_.back()->forward(h, train), train);
        return out_tanh_.forward(dec_head_->forward(h, train), train);
    }

    // training step plumbing: backward through decoder then encoder
    Tensor<Scalar> decode_backward(const Tensor<Scalar>& drecon) {
        Tensor<Scalar> d = dec_head_->backward(out_tanh_.backward(drecon));
        d = dec_norms_.back()->backward(dec_acts_.back().backward(d));
        const Index s = cfg_.stages();
        for (Index i = s - 1; i >= 0; --i) {
            d = dec_convs_[static_cast<std::size_t>(i) + 1]->backward(d);
            d = dec_resizes_[static_cast<std::size_t>(i)].backward(d);
            d = dec_norms_[static_cast<std::size_t>(i)]->backward(
                dec_acts_[static_cast<std::size_t>(i)].backward(d));
        }
        return dec_convs_[0]->backward(d);
    }

    void encode_backward(const Tensor<Scalar>& dmu, const Tensor<Scalar>& dlogvar) {
        Tensor<Scalar> dstats = merge_stats(dmu, dlogvar);
        Tensor<Scalar> d = enc_head_->backward(dstats);
        d = enc_norms_.back()->backward(enc_acts_.back().backward(d));
        for (std::size_t i = enc_convs_.size() - 1; i >= 1; --i) {
            d = enc_convs_[i]->backward(d);
            d = enc_norms_[i - 1]->backward(enc_acts_[i - 1].backward(d));
        }
        enc_convs_[0]->backward(d);
    }

private:
    void split_stats(const Tensor<Scalar>& stats, Tensor<Scalar>& mu, Tensor<Scalar>& logvar) const {
        const Index lc = cfg_.latent_channels, hw = stats.h() * stats.w();
        mu = Tensor<Scalar>(stats.n(), lc, stats.h(), stats.w());
        logvar = Tensor<Scalar>(stats.n(), lc, stats.h(), stats.w());
        for (Index i = 0; i < stats.n(); ++i) {
            std::copy(stats.sample_data(i), stats.sample_data(i) + lc * hw, mu.sample_data(i));
            std::copy(stats.sample_data(i) + lc * hw, stats.sample_data(i) + 2 * lc * hw,
                      logvar.sample_data(i));
        }
    }

    Tensor<Scalar> merge_stats(const Tensor<Scalar>& dmu, const Tensor<Scalar>& dlogvar) const {
        const Index lc = cfg_.latent_channels, hw = dmu.h() * dmu.w();
        Tensor<Scalar> stats(dmu.n(), 2 * lc, dmu.h(), dmu.w());
        for (Index i = 0; i < dmu.n(); ++i) {
            std::copy(dmu.sample_data(i), dmu.sample_data(i) + lc * hw, stats.sample_data(i));
            std::copy(dlogvar.sample_data(i), dlogvar.sample_data(i) + lc * hw,
                      stats.sample_data(i) + lc * hw);
        }
        return stats;
    }

    void register_all() {
        for (std::size_t i = 0; i < enc_convs_.size(); ++i)
            enc_convs_[i]->register_params(reg_, "enc.conv" + std::to_string(i));
        for (std::size_t i = 0; i < enc_norms_.size(); ++i)
            enc_norms_[i]->register_params(reg_, "enc.norm" + std::to_string(i));
        enc_head_->register_params(reg_, "enc.head");
        for (std::size_t i = 0; i < dec_convs_.size(); ++i)
            dec_convs_[i]->register_params(reg_, "dec.conv" + std::to_string(i));
        for (std::size_t i = 0; i < dec_norms_.size(); ++i)
            dec_norms_[i]->register_params(reg_, "dec.norm" + std::to_string(i));
        dec_head_->register_params(reg_, "dec.head");
    }

    VaeConfig cfg_;
    nn::ParamRegistry<Scalar> reg_;
    Index enc_top_channels_ = 0;

    std::vector<std::unique_ptr<nn::Conv2d<Scalar>>> enc_convs_;
    std::vector<std::unique_ptr<nn::GroupNorm<Scalar>>> enc_norms_;
    std::vector<nn::SiLU<Scalar>> enc_acts_;
    std::unique_ptr<nn::Conv2d<Scalar>> enc_head_;

    std::vector<std::unique_ptr<nn::Conv2d<Scalar>>> dec_convs_;
    std::vector<std::unique_ptr<nn::GroupNorm<Scalar>>> dec_norms_;
    std::vector<nn::SiLU<Scalar>> dec_acts_;
    std::vector<nn::NearestResize<Scalar>> dec_resizes_;
    std::unique_ptr<nn::Conv2d<Scalar>> dec_head_;
    nn::Tanh<Scalar> out_tanh_;
};

// 1-channel data passes through a 3-channel autoencoder by replication.
template <typename Scalar>
Tensor<Scalar> replicate_channels(const Tensor<Scalar>& x, Index target) {
    if (x.c() == target) return x;
    if (x.c() != 1) throw InvalidArgument("replicate_channels: expected 1 channel");
    Tensor<Scalar> out(x.n(), target, x.h(), x.w());
    const Index hw = x.h() * x.w();
    for (Index i = 0; i < x.n(); ++i)
        for (Index c = 0; c < target; ++c)
            std::copy(x.sample_data(i), x.sample_data(i) + hw, out.sample_data(i) + c * hw);
    return out;
}

}  // namespace symmflow
