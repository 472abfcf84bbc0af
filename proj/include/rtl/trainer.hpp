#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rtl/dataset.hpp"
#include "rtl/heatmap.hpp"
#include "rtl/model.hpp"
#include "rtl/regularizers.hpp"

namespace rtl {

struct TrainConfig {
    double lr0 = 0.001;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    double weight_decay = 1e-4;
    std::size_t batch_size = 2;
    std::size_t epochs = 60;
    double decay_power = 0.9;
    std::uint64_t seed = 0;
    double flip_prob = 0.5;
    double scale_lo = 0.8, scale_hi = 1.25;
    double sigma = 1.5;
    RegularizerSpec reg;
    FreezePolicy freeze = FreezePolicy::FT;
    std::size_t subset = 0;  // 0 = whole train split; else its first `subset` samples

    void validate() const {
        require(lr0 > 0 && beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1 && epsilon > 0, ErrorKind::config,
                "train: optimizer rates must be positive (betas in (0,1))");
        require(weight_decay >= 0, ErrorKind::config, "train: weight decay must be >= 0");
        require(batch_size >= 1 && epochs >= 1, ErrorKind::config, "train: batch size and epochs must be >= 1");
        require(decay_power > 0, ErrorKind::config, "train: decay power must be positive");
        require(flip_prob >= 0 && flip_prob <= 1, ErrorKind::config, "train: flip probability must be in [0,1]");
        require(scale_lo > 0 && scale_lo <= scale_hi, ErrorKind::config,
                "train: scale range must satisfy 0 < lo <= hi");
        require(sigma > 0, ErrorKind::config, "train: sigma must be positive");
        reg.validate();
    }
};

// Polynomial decay: lr0 * (1 - step/total_steps)^power, evaluated per step.
inline double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
    require(total_steps >= 1 && step < total_steps, ErrorKind::config, "lr_at: step out of range");
    const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
    return cfg.lr0 * std::pow(frac, cfg.decay_power);
}

// Adam with coupled (additive-L2) weight decay and bias correction.
// Parameters with requires_grad == false are skipped entirely, which is
// what keeps frozen weights bit-identical.
template <typename T>
class Adam {
  public:
    explicit Adam(const TrainConfig& cfg) : cfg_(cfg) {}

    void step(const std::vector<std::pair<std::string, VarPtr<T>>>& params, double lr) {
        ++t_;
        const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
        const T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(t_)));
        const T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(t_)));
        const T wd = static_cast<T>(cfg_.weight_decay);
        const T eps = static_cast<T>(cfg_.epsilon);
        for (const auto& [name, p] : params) {
            if (!p->requires_grad) continue;
            auto& st = states_[name];
            if (st.m.numel() == 0) {
                st.m = Tensor<T>(p->value.shape());
                st.v = Tensor<T>(p->value.shape());
            }
            p->ensure_grad();
            const std::size_t n = p->value.numel();
            for (std::size_t i = 0; i < n; ++i) {
                T g = p->grad[i];
                require(std::isfinite(g), ErrorKind::numeric,
                        "non-finite gradient in parameter '" + name + "'");
                g += wd * p->value[i];
                st.m[i] = b1 * st.m[i] + (T(1) - b1) * g;
                st.v[i] = b2 * st.v[i] + (T(1) - b2) * g * g;
                const T mhat = st.m[i] / bc1;
                const T vhat = st.v[i] / bc2;
                p->value[i] -= static_cast<T>(lr) * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    std::size_t steps_taken() const { return t_; }

  private:
    struct State {
        Tensor<T> m, v;  // lazily sized on first step
    };
    TrainConfig cfg_;
    std::map<std::string, State> states_;
    std::size_t t_ = 0;
};

// RNG stream tags, hashed together with the run seed so every consumer
// draws from an independent, schedule-independent sequence.
namespace stream_tag {
inline constexpr std::uint64_t shuffle = 1;
inline constexpr std::uint64_t augment = 2;
}  // namespace stream_tag

template <typename T>
struct AugmentedSample {
    Tensor<T> image;  // [H,W,3]
    Landmarks landmarks;
};

namespace detail {

template <typename T>
Tensor<T> mirror_horizontal(const Tensor<T>& img) {
    const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    Tensor<T> out(img.shape());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) out[(y * w + x) * c + ch] = img[(y * w + (w - 1 - x)) * c + ch];
    return out;
}

// Isotropic resample about the image center with clamped bilinear lookup.
template <typename T>
Tensor<T> scale_about_center(const Tensor<T>& img, double s) {
    const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    Tensor<T> out(img.shape());
    for (std::size_t y = 0; y < h; ++y) {
        const double sy = cy + (static_cast<double>(y) - cy) / s;
        const double fy = std::clamp(sy, 0.0, static_cast<double>(h) - 1.0);
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < w; ++x) {
            const double sx = cx + (static_cast<double>(x) - cx) / s;
            const double fx = std::clamp(sx, 0.0, static_cast<double>(w) - 1.0);
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double v00 = img[(y0 * w + x0) * c + ch];
                const double v01 = img[(y0 * w + x1) * c + ch];
                const double v10 = img[(y1 * w + x0) * c + ch];
                const double v11 = img[(y1 * w + x1) * c + ch];
                out[(y * w + x) * c + ch] =
                    static_cast<T>((1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11));
            }
        }
    }
    return out;
}

}  // namespace detail

// Horizontal flip (probability flip_prob, with landmark role reindexing)
// followed by a random isotropic scale about the center. A scale that
// pushes any landmark out of frame is resampled up to 10 times, then the
// sample falls back to no scaling.
template <typename T>
AugmentedSample<T> augment(const Tensor<T>& image, const Landmarks& lms,
                           const std::vector<std::size_t>& flip_permutation, const TrainConfig& cfg, Rng& rng) {
    require(image.ndim() == 3 && image.dim(2) == 3, ErrorKind::shape, "augment: image must be [H,W,3]");
    const std::size_t h = image.dim(0), w = image.dim(1);
    AugmentedSample<T> out{Tensor<T>(image.shape()), lms};
    bool flipped = rng.bernoulli(cfg.flip_prob);
    if (flipped) {
        out.image = detail::mirror_horizontal(image);
        require(flip_permutation.size() == lms.size(), ErrorKind::data,
                "augment: flip permutation does not cover the landmark set");
        for (std::size_t i = 0; i < lms.size(); ++i) {
            const Landmark& src = lms[flip_permutation[i]];
            out.landmarks[i] = {static_cast<double>(w - 1) - src.x, src.y};
        }
    } else {
        out.image = image;
    }

    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    double s = 1.0;
    Landmarks scaled = out.landmarks;
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double cand = rng.uniform(cfg.scale_lo, cfg.scale_hi);
        bool ok = true;
        Landmarks moved(out.landmarks.size());
        for (std::size_t i = 0; i < out.landmarks.size(); ++i) {
            moved[i] = {cx + (out.landmarks[i].x - cx) * cand, cy + (out.landmarks[i].y - cy) * cand};
            if (moved[i].x < 0 || moved[i].x >= static_cast<double>(w) || moved[i].y < 0 ||
                moved[i].y >= static_cast<double>(h)) {
                ok = false;
                break;
            }
        }
        if (ok) {
            s = cand;
            scaled = std::move(moved);
            break;
        }
    }
    if (s != 1.0) out.image = detail::scale_about_center(out.image, s);
    out.landmarks = std::move(scaled);
    return out;
}

struct HistoryRow {
    std::size_t epoch = 0;  // 1-based
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    LossBreakdown terms;  // epoch means of the raw per-term training losses
};

struct TrainOutcome {
    std::vector<HistoryRow> history;
    std::size_t best_epoch = 0;  // 1-based epoch whose weights the model now holds
    double best_val_loss = 0.0;
};

namespace detail {

template <typename T>
struct ParamSnapshot {
    std::vector<Tensor<T>> params;
    std::vector<Tensor<T>> buffers;
};

template <typename T>
ParamSnapshot<T> snapshot(const Model<T>& m) {
    ParamSnapshot<T> s;
    for (const auto& [name, p] : m.params()) s.params.push_back(p->value);
    for (const auto& [name, b] : m.buffers()) s.buffers.push_back(*b);
    return s;
}

template <typename T>
void restore(Model<T>& m, const ParamSnapshot<T>& s) {
    std::size_t i = 0;
    for (const auto& [name, p] : m.params()) p->value = s.params[i++];
    i = 0;
    for (const auto& [name, b] : m.buffers()) *b = s.buffers[i++];
}

}  // namespace detail

// One optimization step's worth of data.
template <typename T>
struct Batch {
    Tensor<T> images;    // [N,H,W,3]
    Tensor<T> heatmaps;  // [N,H/4,W/4,K]
};

// Minimizes regression loss plus the active constraint losses against the
// frozen teacher. Returns per-epoch history; the model is left holding
// the weights of the epoch with minimum validation loss.
template <typename T>
TrainOutcome train(Model<T>& student, Model<T>* teacher, const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    require(ds.manifest.k >= 1, ErrorKind::data, "train: dataset has no landmarks");
    require(ds.manifest.k == student.config().k, ErrorKind::config,
            "train: model K does not match the dataset");
    require(!ds.manifest.train.empty() && !ds.manifest.val.empty(), ErrorKind::data,
            "train: dataset needs train and validation splits");
    const bool use_reg = cfg.reg.any_active();
    if (use_reg) require(teacher != nullptr, ErrorKind::config, "train: active regularizers need a teacher");

    std::vector<std::size_t> train_idx = ds.manifest.train;
    if (cfg.subset > 0) {
        require(cfg.subset <= train_idx.size(), ErrorKind::config, "train: subset exceeds the train split");
        train_idx.resize(cfg.subset);
    }

    student.apply_freeze(cfg.freeze);
    if (teacher) teacher->freeze_all();

    ForwardNeed student_need;
    student_need.heatmaps = true;
    student_need.logits = cfg.reg.is_active(RegTerm::CO);
    student_need.embedding = cfg.reg.is_active(RegTerm::EO);
    student_need.activation = cfg.reg.is_active(RegTerm::SAM) || cfg.reg.is_active(RegTerm::CAM);
    ForwardNeed teacher_need;
    teacher_need.logits = student_need.logits;
    teacher_need.embedding = student_need.embedding;
    teacher_need.activation = student_need.activation;

    const std::size_t h = ds.manifest.image_size, w = ds.manifest.image_size, k = ds.manifest.k;
    const std::size_t steps_per_epoch = (train_idx.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = steps_per_epoch * cfg.epochs;

    Adam<T> opt(cfg);
    TrainOutcome out;
    detail::ParamSnapshot<T> best;
    std::size_t global_step = 0;

    auto make_batch = [&](const std::vector<std::size_t>& order, std::size_t first, std::size_t count,
                          std::size_t epoch, bool augmented) {
        Batch<T> b{Tensor<T>({count, h, w, 3}), Tensor<T>({count, h / 4, w / 4, k})};
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t idx = order[first + i];
            Tensor<T> img = image_to_tensor<T>(ds.images[idx], ds.manifest);
            Landmarks lms = ds.landmarks[idx];
            if (augmented) {
                Rng rng(stream(cfg.seed, {stream_tag::augment, epoch, idx}));
                auto aug = augment(img, lms, ds.manifest.flip_permutation, cfg, rng);
                img = std::move(aug.image);
                lms = std::move(aug.landmarks);
            }
            std::copy(img.data(), img.data() + img.numel(), b.images.data() + i * h * w * 3);
            Tensor<T> maps = encode_heatmaps<T>(lms, h, w, cfg.sigma);
            std::copy(maps.data(), maps.data() + maps.numel(), b.heatmaps.data() + i * maps.numel());
        }
        return b;
    };

    auto batch_loss = [&](Tape<T>* tape, const Batch<T>& b, bool training, LossBreakdown* bd) {
        auto images = make_const(b.images);
        auto art = student.forward(tape, images, student_need, training);
        auto gt = make_const(b.heatmaps);
        auto l_r = loss_regression(tape, art.heatmaps, gt);
        RegArtifacts<T> sa{art.logits, art.embedding, art.activation};
        RegArtifacts<T> ta;
        if (use_reg) {
            auto tart = teacher->forward(nullptr, images, teacher_need, false);
            ta = {tart.logits, tart.embedding, tart.activation};
        }
        return total_loss(tape, l_r, cfg.reg, sa, ta, bd);
    };

    auto check_finite = [&](const LossBreakdown& bd, std::size_t epoch, std::size_t step) {
        const std::pair<const char*, double> parts[] = {{"regression", bd.regression}, {"CO", bd.co},
                                                        {"EO", bd.eo},                 {"SAM", bd.sam},
                                                        {"CAM", bd.cam},               {"total", bd.total}};
        for (const auto& [name, v] : parts)
            require(std::isfinite(v), ErrorKind::numeric,
                    "non-finite " + std::string(name) + " loss at epoch " + std::to_string(epoch) + " step " +
                        std::to_string(step));
    };

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        Rng shuffle_rng(stream(cfg.seed, {stream_tag::shuffle, epoch}));
        shuffle_rng.shuffle(order);

        HistoryRow row;
        row.epoch = epoch;
        row.lr = lr_at(global_step, total_steps, cfg);
        LossBreakdown sums;
        for (std::size_t s0 = 0, step = 0; s0 < order.size(); s0 += cfg.batch_size, ++step) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - s0);
            Batch<T> b = make_batch(order, s0, count, epoch, true);
            Tape<T> tape;
            LossBreakdown bd;
            auto loss = batch_loss(&tape, b, true, &bd);
            check_finite(bd, epoch, step);
            for (const auto& [name, p] : student.params())
                if (p->requires_grad) p->zero_grad();
            tape.backward(loss);
            opt.step(student.params(), lr_at(global_step, total_steps, cfg));
            ++global_step;
            sums.regression += bd.regression;
            sums.co += bd.co;
            sums.eo += bd.eo;
            sums.sam += bd.sam;
            sums.cam += bd.cam;
            sums.total += bd.total;
        }
        const double inv_steps = 1.0 / static_cast<double>(steps_per_epoch);
        row.terms.regression = sums.regression * inv_steps;
        row.terms.co = sums.co * inv_steps;
        row.terms.eo = sums.eo * inv_steps;
        row.terms.sam = sums.sam * inv_steps;
        row.terms.cam = sums.cam * inv_steps;
        row.train_loss = sums.total * inv_steps;

        // Validation: inference-mode statistics, no augmentation,
        // sample-weighted mean of the total loss.
        double val_sum = 0.0;
        std::size_t val_n = 0;
        for (std::size_t s0 = 0; s0 < ds.manifest.val.size(); s0 += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, ds.manifest.val.size() - s0);
            Batch<T> b = make_batch(ds.manifest.val, s0, count, 0, false);
            LossBreakdown bd;
            batch_loss(nullptr, b, false, &bd);
            check_finite(bd, epoch, 0);
            val_sum += bd.total * static_cast<double>(count);
            val_n += count;
        }
        row.val_loss = val_sum / static_cast<double>(val_n);

        out.history.push_back(row);
        if (out.best_epoch == 0 || row.val_loss < out.best_val_loss) {
            out.best_epoch = epoch;
            out.best_val_loss = row.val_loss;
            best = detail::snapshot(student);
        }
    }
    detail::restore(student, best);
    return out;
}

// Source-task pretraining: encoder + classifier on identity labels with
// softmax cross-entropy over the train split, no augmentation. Returns
// the final train accuracy (inference-mode forward).
template <typename T>
double pretrain_classifier(Model<T>& model, const Dataset& ds, std::size_t epochs, std::size_t batch_size,
                           std::uint64_t seed, double lr0 = 0.001) {
    require(model.config().c >= 2, ErrorKind::config, "pretrain: model needs a classifier branch");
    require(ds.manifest.c == model.config().c, ErrorKind::config, "pretrain: model C does not match the dataset");
    require(!ds.manifest.train.empty(), ErrorKind::data, "pretrain: empty train split");
    require(epochs >= 1 && batch_size >= 1, ErrorKind::config, "pretrain: epochs and batch size must be >= 1");

    TrainConfig opt_cfg;
    opt_cfg.lr0 = lr0;
    opt_cfg.seed = seed;
    Adam<T> opt(opt_cfg);
    const std::size_t h = ds.manifest.image_size, w = ds.manifest.image_size;
    const std::size_t steps_per_epoch = (ds.manifest.train.size() + batch_size - 1) / batch_size;
    const std::size_t total_steps = steps_per_epoch * epochs;
    ForwardNeed need;
    need.logits = true;

    std::size_t global_step = 0;
    for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
        std::vector<std::size_t> order = ds.manifest.train;
        Rng shuffle_rng(stream(seed, {stream_tag::shuffle, epoch}));
        shuffle_rng.shuffle(order);
        for (std::size_t s0 = 0; s0 < order.size(); s0 += batch_size) {
            const std::size_t count = std::min(batch_size, order.size() - s0);
            Tensor<T> images({count, h, w, 3});
            std::vector<int> labels(count);
            for (std::size_t i = 0; i < count; ++i) {
                Tensor<T> img = image_to_tensor<T>(ds.images[order[s0 + i]], ds.manifest);
                std::copy(img.data(), img.data() + img.numel(), images.data() + i * h * w * 3);
                labels[i] = ds.labels[order[s0 + i]];
            }
            Tape<T> tape;
            auto art = model.forward(&tape, make_const(std::move(images)), need, true);
            auto loss = cross_entropy_mean(&tape, art.logits, labels);
            require(std::isfinite(static_cast<double>(loss->value[0])), ErrorKind::numeric,
                    "non-finite pretraining loss at epoch " + std::to_string(epoch));
            for (const auto& [name, p] : model.params())
                if (p->requires_grad) p->zero_grad();
            tape.backward(loss);
            opt.step(model.params(), lr_at(global_step, total_steps, opt_cfg));
            ++global_step;
        }
    }

    std::size_t correct = 0;
    for (std::size_t s0 = 0; s0 < ds.manifest.train.size(); s0 += batch_size) {
        const std::size_t count = std::min(batch_size, ds.manifest.train.size() - s0);
        Tensor<T> images({count, h, w, 3});
        for (std::size_t i = 0; i < count; ++i) {
            Tensor<T> img = image_to_tensor<T>(ds.images[ds.manifest.train[s0 + i]], ds.manifest);
            std::copy(img.data(), img.data() + img.numel(), images.data() + i * h * w * 3);
        }
        auto art = model.forward(nullptr, make_const(std::move(images)), need, false);
        for (std::size_t i = 0; i < count; ++i) {
            const T* row = art.logits->value.data() + i * model.config().c;
            std::size_t argmax = 0;
            for (std::size_t j = 1; j < model.config().c; ++j)
                if (row[j] > row[argmax]) argmax = j;
            if (static_cast<int>(argmax) == ds.labels[ds.manifest.train[s0 + i]]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.manifest.train.size());
}

}  // namespace rtl
