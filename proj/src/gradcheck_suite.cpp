#include <cmath>

#include "rtl/commands.hpp"
#include "rtl/conv.hpp"
#include "rtl/gradcheck.hpp"
#include "rtl/heatmap.hpp"
#include "rtl/model.hpp"
#include "rtl/ops_core.hpp"
#include "rtl/regularizers.hpp"
#include "rtl/rng.hpp"

namespace rtl {

namespace {

using D = double;
using V = VarPtr<D>;

// Random tensor with entries bounded away from zero, so kinked ops
// (abs, relu) are checked at smooth points.
Tensor<D> rand_tensor(Rng& rng, const Dims& dims, bool away_from_zero = false) {
    Tensor<D> t(dims);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        double v = rng.uniform(-1.5, 1.5);
        if (away_from_zero) {
            const double mag = 0.2 + std::abs(v);
            v = v >= 0 ? mag : -mag;
        }
        t[i] = v;
    }
    return t;
}

struct Suite {
    std::vector<GradCheckEntry> entries;
    Rng rng{stream(20260815, {77})};

    V leaf(const Dims& dims, bool away = false) { return make_var<D>(rand_tensor(rng, dims, away), false); }
    V fixed(const Dims& dims, bool away = false) { return make_const<D>(rand_tensor(rng, dims, away)); }

    void check(const std::string& name, const std::function<V(Tape<D>*)>& loss_fn, const std::vector<V>& inputs,
               std::size_t max_entries = 0) {
        Rng pick(stream(4242, {entries.size()}));
        const GradCheckResult r = grad_check(loss_fn, inputs, 1e-5, max_entries, &pick);
        entries.push_back({name, r.max_rel_err, r.checked});
    }
};

// Squared-sum readout gives every op a non-uniform upstream gradient.
V readout(Tape<D>* tape, const V& y) { return sum_all(tape, square(tape, y)); }

// Squared distance to a fixed target. Needed for ops whose squared-sum is
// (near-)constant in the input — unit-normalized or standardized outputs —
// where the plain readout would have a vanishing true gradient.
V readout_vs(Tape<D>* tape, const V& y, const V& target) {
    return sum_all(tape, square(tape, sub(tape, y, target)));
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite() {
    Suite s;

    {
        auto a = s.leaf({3, 4}), b = s.leaf({3, 4});
        s.check("add", [&](Tape<D>* t) { return readout(t, add(t, a, b)); }, {a, b});
    }
    {
        auto a = s.leaf({3, 4}), b = s.leaf({3, 4});
        s.check("sub", [&](Tape<D>* t) { return readout(t, sub(t, a, b)); }, {a, b});
    }
    {
        auto x = s.leaf({3, 4});
        s.check("scale", [&](Tape<D>* t) { return readout(t, scale(t, x, 1.7)); }, {x});
    }
    {
        auto x = s.leaf({3, 4});
        s.check("square", [&](Tape<D>* t) { return readout(t, square(t, x)); }, {x});
    }
    {
        auto x = s.leaf({3, 4}, true);
        s.check("abs", [&](Tape<D>* t) { return readout(t, abs_elem(t, x)); }, {x});
    }
    {
        auto x = s.leaf({3, 4}, true);
        s.check("relu", [&](Tape<D>* t) { return readout(t, relu(t, x)); }, {x});
    }
    {
        auto x = s.leaf({3, 4});
        s.check("sum_all", [&](Tape<D>* t) { return square(t, sum_all(t, x)); }, {x});
    }
    {
        auto x = s.leaf({2, 3, 4});
        s.check("sum_axis", [&](Tape<D>* t) { return readout(t, sum_axis(t, x, 1)); }, {x});
    }
    {
        auto x = s.leaf({2, 6});
        s.check("reshape", [&](Tape<D>* t) { return readout(t, reshape(t, x, {3, 4})); }, {x});
    }
    {
        auto x = s.leaf({3, 4}), w = s.leaf({4, 5}), b = s.leaf({5});
        s.check("linear", [&](Tape<D>* t) { return readout(t, linear(t, x, w, b)); }, {x, w, b});
    }
    {
        auto x = s.leaf({3, 5});
        s.check("softmax", [&](Tape<D>* t) { return readout(t, softmax(t, x)); }, {x});
    }
    {
        auto x = s.leaf({2, 3, 4, 5});
        s.check("global_avgpool", [&](Tape<D>* t) { return readout(t, global_avgpool(t, x)); }, {x});
    }
    {
        auto x = s.leaf({2, 3, 4, 3}), b = s.leaf({3});
        s.check("bias_add", [&](Tape<D>* t) { return readout(t, bias_add(t, x, b)); }, {x, b});
    }
    {
        auto a = s.leaf({2, 2, 2, 3}), b = s.leaf({2, 2, 2, 2});
        s.check("concat_channels", [&](Tape<D>* t) { return readout(t, concat_channels(t, a, b)); }, {a, b});
    }
    {
        auto x = s.leaf({3, 6}, true);
        auto tgt = s.fixed({3, 6});
        s.check("l2_normalize", [&](Tape<D>* t) { return readout_vs(t, l2_normalize(t, x), tgt); }, {x});
    }
    {
        auto u = s.leaf({3, 5}, true), v = s.leaf({3, 5}, true);
        s.check("cosine_similarity", [&](Tape<D>* t) { return readout(t, cosine_similarity(t, u, v)); }, {u, v});
    }
    {
        auto a = s.leaf({2, 3, 4}), b = s.leaf({2, 3, 4});
        s.check("mse_frobenius", [&](Tape<D>* t) { return mse_frobenius(t, a, b); }, {a, b});
    }
    {
        auto x = s.leaf({4, 6});
        std::vector<int> labels;
        for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(s.rng.below(6)));
        s.check("cross_entropy_mean", [&](Tape<D>* t) { return cross_entropy_mean(t, x, labels); }, {x});
    }
    {
        auto x = s.leaf({2, 5, 6, 3}), k = s.leaf({3, 3, 3, 4});
        s.check("conv2d_3x3_s1_p1", [&](Tape<D>* t) { return readout(t, conv2d(t, x, k, 1, 1)); }, {x, k});
    }
    {
        auto x = s.leaf({2, 7, 6, 3}), k = s.leaf({3, 3, 3, 4});
        s.check("conv2d_3x3_s2_p1", [&](Tape<D>* t) { return readout(t, conv2d(t, x, k, 2, 1)); }, {x, k});
    }
    {
        auto x = s.leaf({2, 4, 5, 6}), k = s.leaf({1, 1, 6, 2});
        s.check("conv2d_1x1_s1_p0", [&](Tape<D>* t) { return readout(t, conv2d(t, x, k, 1, 0)); }, {x, k});
    }
    {
        auto x = s.leaf({2, 3, 3, 4}), k = s.leaf({4, 4, 3, 4});
        s.check("deconv2d_4x4_s2_p1", [&](Tape<D>* t) { return readout(t, deconv2d(t, x, k, 2, 1)); }, {x, k});
    }
    {
        auto x = s.leaf({2, 3, 4, 3}), k = s.leaf({3, 3, 2, 3});
        s.check("deconv2d_3x3_s1_p1", [&](Tape<D>* t) { return readout(t, deconv2d(t, x, k, 1, 1)); }, {x, k});
    }
    {
        BatchNorm<D> bn(4);
        auto x = s.leaf({2, 3, 3, 4});
        for (std::size_t i = 0; i < 4; ++i) bn.gamma->value[i] = s.rng.uniform(0.5, 1.5);
        for (std::size_t i = 0; i < 4; ++i) bn.beta->value[i] = s.rng.uniform(-0.5, 0.5);
        auto tgt = s.fixed({2, 3, 3, 4});
        s.check("batchnorm_train", [&](Tape<D>* t) { return readout_vs(t, bn.forward(t, x, true), tgt); },
                {x, bn.gamma, bn.beta});
    }
    {
        BatchNorm<D> bn(4);
        auto x = s.leaf({2, 3, 3, 4});
        for (std::size_t i = 0; i < 4; ++i) {
            bn.gamma->value[i] = s.rng.uniform(0.5, 1.5);
            bn.beta->value[i] = s.rng.uniform(-0.5, 0.5);
            bn.running_mean[i] = s.rng.uniform(-0.3, 0.3);
            bn.running_var[i] = s.rng.uniform(0.5, 1.5);
        }
        auto tgt = s.fixed({2, 3, 3, 4});
        s.check("batchnorm_infer", [&](Tape<D>* t) { return readout_vs(t, bn.forward(t, x, false), tgt); },
                {x, bn.gamma, bn.beta});
    }
    {
        auto p = s.leaf({2, 4, 4, 3}), g = s.fixed({2, 4, 4, 3});
        s.check("heatmap_regression_loss", [&](Tape<D>* t) { return loss_regression(t, p, g); }, {p, g});
    }
    {
        auto sl = s.leaf({3, 4}), tl = s.fixed({3, 4});
        s.check("response_loss", [&](Tape<D>* t) { return loss_co(t, sl, tl, 2.0); }, {sl});
    }
    {
        auto se = s.leaf({3, 5}, true), te = s.fixed({3, 5}, true);
        s.check("embedding_loss", [&](Tape<D>* t) { return loss_eo(t, se, te); }, {se});
    }
    {
        auto es = s.leaf({2, 3, 3, 4}, true), et = s.fixed({2, 3, 3, 6}, true);
        s.check("spatial_attention_loss", [&](Tape<D>* t) { return loss_sam(t, es, et); }, {es});
    }
    {
        auto es = s.leaf({2, 3, 3, 4}, true), et = s.fixed({2, 3, 3, 4}, true);
        s.check("channel_attention_loss", [&](Tape<D>* t) { return loss_cam(t, es, et); }, {es});
    }

    // Full training loss through a small end-to-end network: regression plus
    // all four constraint terms against a frozen second network.
    {
        ModelConfig mc;
        mc.h = mc.w = 32;
        mc.stage_widths = {2, 3, 4, 5};
        mc.blocks_per_stage = {1, 1, 1, 1};
        mc.c = 3;
        mc.k = 2;
        mc.deconv_channels = 4;
        mc.skip_connections = true;
        mc.seed = 9001;
        Model<D> student = Model<D>::build(mc);
        ModelConfig tc = mc;
        tc.seed = 9002;
        Model<D> teacher = Model<D>::build(tc);
        teacher.freeze_all();

        const std::size_t n = 3;
        auto x = s.leaf({n, 32, 32, 3});

        Landmarks lms = {{9.0, 13.0}, {22.0, 7.5}};
        Tensor<D> one_gt = encode_heatmaps<D>(lms, 32, 32, 1.5);
        Tensor<D> gt({n, 8, 8, 2});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < one_gt.numel(); ++j) gt[i * one_gt.numel() + j] = one_gt[j];
        auto gt_v = make_const<D>(gt);

        ForwardNeed need;
        need.heatmaps = need.embedding = need.logits = need.activation = true;
        ForwardArtifacts<D> ta = teacher.forward(nullptr, x, need, false);
        RegArtifacts<D> teach{ta.logits, ta.embedding, ta.activation};

        RegularizerSpec spec;
        spec.active = {RegTerm::CO, RegTerm::EO, RegTerm::SAM, RegTerm::CAM};
        spec.lambda = {{RegTerm::CO, 0.7}, {RegTerm::EO, 0.9}, {RegTerm::SAM, 1.1}, {RegTerm::CAM, 1.3}};
        spec.mu = 2.0;

        std::vector<V> inputs = {x};
        for (const auto& [name, p] : student.params()) inputs.push_back(p);

        auto loss_fn = [&](Tape<D>* t) {
            ForwardArtifacts<D> sa = student.forward(t, x, need, true);
            RegArtifacts<D> stud{sa.logits, sa.embedding, sa.activation};
            auto l_reg = loss_regression(t, sa.heatmaps, gt_v);
            LossBreakdown bd;
            return total_loss(t, l_reg, spec, stud, teach, &bd);
        };
        s.check("full_network_four_term_loss", loss_fn, inputs, 4);
    }

    return s.entries;
}

}  // namespace rtl
