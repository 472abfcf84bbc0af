#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rtl/batchnorm.hpp"
#include "rtl/conv.hpp"
#include "rtl/ops_core.hpp"
#include "rtl/rng.hpp"

namespace rtl {

// Residual encoder (stem + four stride-2 stages, /32 total) feeding three
// branches: a global-average-pooled embedding with a linear classifier, a
// three-deconvolution heatmap decoder restoring 1/4 resolution, and the
// raw pre-pool stage activation used by the attention losses.
struct ModelConfig {
    std::size_t h = 64, w = 64;
    std::vector<std::size_t> stage_widths = {16, 32, 64, 128};
    std::vector<std::size_t> blocks_per_stage = {1, 1, 1, 1};
    std::size_t m = 0;  // embedding width; 0 derives it from the last stage
    std::size_t c = 8;  // source classes; 0 builds no classifier branch
    std::size_t k = 14;
    std::size_t deconv_channels = 256;
    bool skip_connections = false;
    std::size_t attention_source = 4;  // encoder stage whose output feeds attention losses
    std::uint64_t seed = 1;

    std::size_t embed_dim() const { return m == 0 ? stage_widths.back() : m; }

    void validate() const {
        require(stage_widths.size() == 4 && blocks_per_stage.size() == 4, ErrorKind::config,
                "model: exactly four encoder stages required");
        for (std::size_t wd : stage_widths) require(wd >= 1, ErrorKind::config, "model: stage width must be >= 1");
        for (std::size_t b : blocks_per_stage) require(b >= 1, ErrorKind::config, "model: each stage needs a block");
        require(h % 32 == 0 && w % 32 == 0 && h >= 32 && w >= 32, ErrorKind::config,
                "model: input extent must be a positive multiple of 32");
        require(c == 0 || c >= 2, ErrorKind::config, "model: class count must be 0 (no classifier) or >= 2");
        require(k >= 1, ErrorKind::config, "model: landmark count must be >= 1");
        require(deconv_channels >= 1, ErrorKind::config, "model: deconv_channels must be >= 1");
        require(attention_source >= 1 && attention_source <= 4, ErrorKind::config,
                "model: attention_source must be an encoder stage 1..4");
        require(m == 0 || m == stage_widths.back(), ErrorKind::config,
                "model: embedding width must equal the last stage width");
    }
};

enum class FreezePolicy { FE, FTP, FT };

inline const char* freeze_policy_name(FreezePolicy p) {
    switch (p) {
        case FreezePolicy::FE: return "FE";
        case FreezePolicy::FTP: return "FTP";
        case FreezePolicy::FT: return "FT";
    }
    return "?";
}

inline FreezePolicy freeze_policy_from_name(const std::string& s) {
    if (s == "FE") return FreezePolicy::FE;
    if (s == "FTP") return FreezePolicy::FTP;
    if (s == "FT") return FreezePolicy::FT;
    throw_config("unknown freeze policy '" + s + "' (expected FE, FTP or FT)");
}

// Artifacts requested from a forward pass; unrequested entries stay null.
template <typename T>
struct ForwardArtifacts {
    VarPtr<T> heatmaps;    // [N, H/4, W/4, K]
    VarPtr<T> embedding;   // [N, m]
    VarPtr<T> logits;      // [N, C]
    VarPtr<T> activation;  // [N, h, w, B] pre-pool output of the attention-source stage
};

struct ForwardNeed {
    bool heatmaps = false;
    bool embedding = false;
    bool logits = false;
    bool activation = false;
};

template <typename T>
class Model {
  public:
    struct ConvBN {
        VarPtr<T> w;
        std::shared_ptr<BatchNorm<T>> bn;
        std::size_t stride = 1, pad = 0;
    };
    struct ResBlock {
        ConvBN conv1, conv2;
        std::optional<ConvBN> proj;  // 1x1 projection when stride/width changes
    };
    struct DeconvBlock {
        VarPtr<T> w;
        std::shared_ptr<BatchNorm<T>> bn;
    };

    static Model build(const ModelConfig& cfg) {
        cfg.validate();
        Model mdl;
        mdl.cfg_ = cfg;
        Rng rng(cfg.seed);

        mdl.stem_ = mdl.make_conv_bn("encoder.stem.conv.w", "encoder.stem.bn", rng, 3, 3, cfg.stage_widths[0], 2, 1);
        std::size_t in_ch = cfg.stage_widths[0];
        for (std::size_t s = 0; s < 4; ++s) {
            std::vector<ResBlock> stage;
            for (std::size_t b = 0; b < cfg.blocks_per_stage[s]; ++b) {
                const std::string pre = "encoder.stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
                const std::size_t out_ch = cfg.stage_widths[s];
                const std::size_t stride = b == 0 ? 2 : 1;
                ResBlock blk;
                blk.conv1 = mdl.make_conv_bn(pre + ".conv1.w", pre + ".bn1", rng, 3, in_ch, out_ch, stride, 1);
                blk.conv2 = mdl.make_conv_bn(pre + ".conv2.w", pre + ".bn2", rng, 3, out_ch, out_ch, 1, 1);
                if (stride != 1 || in_ch != out_ch)
                    blk.proj = mdl.make_conv_bn(pre + ".proj.w", pre + ".projbn", rng, 1, in_ch, out_ch, stride, 0);
                stage.push_back(std::move(blk));
                in_ch = out_ch;
            }
            mdl.stages_.push_back(std::move(stage));
        }

        if (cfg.c > 0) {
            const std::size_t m = cfg.embed_dim();
            mdl.cls_w_ = mdl.add_param("classifier.w", he_uniform(rng, {m, cfg.c}, m));
            mdl.cls_b_ = mdl.add_param("classifier.b", Tensor<T>({cfg.c}));
        }

        const std::size_t dc = cfg.deconv_channels;
        std::size_t dec_in = cfg.stage_widths[3];
        for (std::size_t i = 0; i < 3; ++i) {
            const std::string idx = std::to_string(i + 1);
            // Deconv kernels store [kh, kw, Cout, Cin].
            mdl.decoder_[i].w = mdl.add_param("decoder.deconv" + idx + ".w",
                                              he_uniform(rng, {4, 4, dc, dec_in}, 4 * 4 * dec_in));
            mdl.decoder_[i].bn = mdl.add_bn("decoder.bn" + idx, dc);
            dec_in = dc;
            if (cfg.skip_connections && i == 0) dec_in += cfg.stage_widths[2];
            if (cfg.skip_connections && i == 1) dec_in += cfg.stage_widths[1];
        }
        mdl.head_w_ = mdl.add_param("decoder.head.w", he_uniform(rng, {1, 1, dc, cfg.k}, dc));
        mdl.head_b_ = mdl.add_param("decoder.head.b", Tensor<T>({cfg.k}));
        return mdl;
    }

    const ModelConfig& config() const { return cfg_; }

    // Creation-ordered trainable parameters; BN running statistics are
    // separate buffers (state, not optimized).
    const std::vector<std::pair<std::string, VarPtr<T>>>& params() const { return params_; }

    std::vector<std::pair<std::string, Tensor<T>*>> buffers() const {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        for (const auto& [name, bn] : bns_) {
            out.emplace_back(name + ".running_mean", &bn->running_mean);
            out.emplace_back(name + ".running_var", &bn->running_var);
        }
        return out;
    }

    VarPtr<T> param(const std::string& name) const {
        for (const auto& [n, p] : params_)
            if (n == name) return p;
        throw_config("unknown parameter '" + name + "'");
    }

    const std::set<std::string>& frozen() const { return frozen_; }

    // FE freezes the whole encoder, FTP all of it but the final stage, FT
    // nothing. Decoder and classifier are always trainable.
    void apply_freeze(FreezePolicy policy) {
        frozen_.clear();
        for (auto& [name, p] : params_) {
            bool freeze = false;
            if (policy == FreezePolicy::FE)
                freeze = name.rfind("encoder.", 0) == 0;
            else if (policy == FreezePolicy::FTP)
                freeze = name.rfind("encoder.", 0) == 0 && name.rfind("encoder.stage4.", 0) != 0;
            p->requires_grad = !freeze;
            if (freeze) frozen_.insert(name);
        }
    }

    void freeze_all() {
        frozen_.clear();
        for (auto& [name, p] : params_) {
            p->requires_grad = false;
            frozen_.insert(name);
        }
    }

    ForwardArtifacts<T> forward(Tape<T>* tape, const VarPtr<T>& images, const ForwardNeed& need, bool training) {
        const Dims& s = images->value.shape();
        require(s.size() == 4 && s[3] == 3, ErrorKind::shape, "forward: images must be [N,H,W,3]");
        require(s[1] == cfg_.h && s[2] == cfg_.w, ErrorKind::shape,
                "forward: image extent " + std::to_string(s[1]) + "x" + std::to_string(s[2]) +
                    " does not match the model's " + std::to_string(cfg_.h) + "x" + std::to_string(cfg_.w));

        auto x = run_conv_bn_relu(tape, stem_, images, training);
        std::vector<VarPtr<T>> stage_out;
        for (auto& stage : stages_) {
            for (auto& blk : stage) x = run_block(tape, blk, x, training);
            stage_out.push_back(x);
        }

        ForwardArtifacts<T> art;
        if (need.activation) art.activation = stage_out[cfg_.attention_source - 1];
        VarPtr<T> pooled;
        if (need.embedding || need.logits) pooled = global_avgpool(tape, stage_out[3]);
        if (need.embedding) art.embedding = pooled;
        if (need.logits) {
            require(cfg_.c > 0, ErrorKind::config, "forward: model has no classifier branch");
            art.logits = linear(tape, pooled, cls_w_, cls_b_);
        }
        if (need.heatmaps) {
            auto d = stage_out[3];
            for (std::size_t i = 0; i < 3; ++i) {
                if (cfg_.skip_connections && i == 1) d = concat_channels(tape, d, stage_out[2]);
                if (cfg_.skip_connections && i == 2) d = concat_channels(tape, d, stage_out[1]);
                d = deconv2d(tape, d, decoder_[i].w, 2, 1);
                d = decoder_[i].bn->forward(tape, d, training);
                d = relu(tape, d);
            }
            art.heatmaps = bias_add(tape, conv2d(tape, d, head_w_, 1, 0), head_b_);
        }
        return art;
    }

  private:
    Model() = default;

    static Tensor<T> he_uniform(Rng& rng, const Dims& shape, std::size_t fan_in) {
        Tensor<T> t(shape);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(-limit, limit));
        return t;
    }

    VarPtr<T> add_param(const std::string& name, Tensor<T> value) {
        auto p = make_var(std::move(value), true);
        params_.emplace_back(name, p);
        return p;
    }

    std::shared_ptr<BatchNorm<T>> add_bn(const std::string& prefix, std::size_t channels) {
        auto bn = std::make_shared<BatchNorm<T>>(channels);
        params_.emplace_back(prefix + ".gamma", bn->gamma);
        params_.emplace_back(prefix + ".beta", bn->beta);
        bns_.emplace_back(prefix, bn);
        return bn;
    }

    ConvBN make_conv_bn(const std::string& w_name, const std::string& bn_name, Rng& rng, std::size_t ksize,
                        std::size_t in_ch, std::size_t out_ch, std::size_t stride, std::size_t pad) {
        ConvBN cb;
        cb.w = add_param(w_name, he_uniform(rng, {ksize, ksize, in_ch, out_ch}, ksize * ksize * in_ch));
        cb.bn = add_bn(bn_name, out_ch);
        cb.stride = stride;
        cb.pad = pad;
        return cb;
    }

    VarPtr<T> run_conv_bn_relu(Tape<T>* tape, ConvBN& cb, const VarPtr<T>& x, bool training) {
        return relu(tape, cb.bn->forward(tape, conv2d(tape, x, cb.w, cb.stride, cb.pad), training));
    }

    VarPtr<T> run_block(Tape<T>* tape, ResBlock& blk, const VarPtr<T>& x, bool training) {
        auto y = run_conv_bn_relu(tape, blk.conv1, x, training);
        y = blk.conv2.bn->forward(tape, conv2d(tape, y, blk.conv2.w, 1, 1), training);
        auto shortcut = x;
        if (blk.proj)
            shortcut = blk.proj->bn->forward(tape, conv2d(tape, x, blk.proj->w, blk.proj->stride, 0), training);
        return relu(tape, add(tape, y, shortcut));
    }

    ModelConfig cfg_;
    ConvBN stem_;
    std::vector<std::vector<ResBlock>> stages_;
    VarPtr<T> cls_w_, cls_b_;
    std::array<DeconvBlock, 3> decoder_;
    VarPtr<T> head_w_, head_b_;
    std::set<std::string> frozen_;
    std::vector<std::pair<std::string, VarPtr<T>>> params_;
    std::vector<std::pair<std::string, std::shared_ptr<BatchNorm<T>>>> bns_;
};

}  // namespace rtl
