#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "rtl/ops_core.hpp"

// Constraint losses that tie a student detector to a frozen teacher
// classifier, plus their weighted composition into the training loss.
// All four are bounded by 2 and vanish when the student artifacts equal
// the teacher's.
namespace rtl {

enum class RegTerm { CO, EO, SAM, CAM };

inline const char* reg_term_name(RegTerm t) {
    switch (t) {
        case RegTerm::CO: return "CO";
        case RegTerm::EO: return "EO";
        case RegTerm::SAM: return "SAM";
        case RegTerm::CAM: return "CAM";
    }
    return "?";
}

inline RegTerm reg_term_from_name(const std::string& s) {
    if (s == "CO") return RegTerm::CO;
    if (s == "EO") return RegTerm::EO;
    if (s == "SAM") return RegTerm::SAM;
    if (s == "CAM") return RegTerm::CAM;
    throw_config("unknown regularizer term '" + s + "' (expected CO, EO, SAM or CAM)");
}

// Which constraint terms are active and how strongly each is weighted.
// A term with weight 0 is treated as fully inactive: it is neither
// computed nor logged, so a zero-weight run is bit-identical to one with
// the term absent.
struct RegularizerSpec {
    std::vector<RegTerm> active;
    std::map<RegTerm, double> lambda;
    double mu = 2.0;

    bool is_active(RegTerm t) const {
        for (RegTerm a : active)
            if (a == t) {
                auto it = lambda.find(t);
                return it != lambda.end() && it->second > 0.0;
            }
        return false;
    }
    bool any_active() const {
        for (RegTerm t : {RegTerm::CO, RegTerm::EO, RegTerm::SAM, RegTerm::CAM})
            if (is_active(t)) return true;
        return false;
    }
    void validate() const {
        require(mu > 0.0, ErrorKind::config, "regularizer temperature mu must be positive");
        for (RegTerm t : active) {
            auto it = lambda.find(t);
            require(it != lambda.end(), ErrorKind::config,
                    std::string("active term ") + reg_term_name(t) + " has no weight");
            require(it->second >= 0.0 && std::isfinite(it->second), ErrorKind::config,
                    std::string("weight for ") + reg_term_name(t) + " must be finite and >= 0");
        }
    }
};

// (1/N) * sum of squared-Frobenius distances between predicted and
// ground-truth heatmap stacks, [N,H,W,K].
template <typename T>
VarPtr<T> loss_regression(Tape<T>* tape, const VarPtr<T>& pred, const VarPtr<T>& gt) {
    require(pred->value.ndim() == 4, ErrorKind::shape, "loss_regression: expected [N,H,W,K]");
    require(pred->value.same_shape(gt->value), ErrorKind::shape,
            "loss_regression: prediction/target shape mismatch");
    const T inv_n = T(1) / static_cast<T>(pred->value.dim(0));
    return scale(tape, mse_frobenius(tape, pred, gt), inv_n);
}

// (1/N) * sum ||softmax(t/mu) - softmax(s/mu)||^2 over rows of [N,C].
template <typename T>
VarPtr<T> loss_co(Tape<T>* tape, const VarPtr<T>& student_logits, const VarPtr<T>& teacher_logits, T mu) {
    require(student_logits->value.ndim() == 2, ErrorKind::shape, "loss_co: logits must be [N,C]");
    require(student_logits->value.same_shape(teacher_logits->value), ErrorKind::shape,
            "loss_co: logit shape mismatch");
    require(student_logits->value.dim(1) >= 2, ErrorKind::shape, "loss_co: need at least 2 classes");
    require(mu > T(0), ErrorKind::config, "loss_co: temperature must be positive");
    require(student_logits->value.all_finite() && teacher_logits->value.all_finite(), ErrorKind::numeric,
            "loss_co: non-finite logits");
    const T inv_n = T(1) / static_cast<T>(student_logits->value.dim(0));
    auto ps = softmax(tape, scale(tape, student_logits, T(1) / mu));
    auto pt = softmax(tape, scale(tape, teacher_logits, T(1) / mu));
    return scale(tape, sum_all(tape, square(tape, sub(tape, pt, ps))), inv_n);
}

// Mean over the batch of 1 - cos(student embedding, teacher embedding).
template <typename T>
VarPtr<T> loss_eo(Tape<T>* tape, const VarPtr<T>& student_embed, const VarPtr<T>& teacher_embed) {
    require(student_embed->value.same_shape(teacher_embed->value), ErrorKind::shape,
            "loss_eo: embedding shape mismatch");
    auto cos = cosine_similarity(tape, student_embed, teacher_embed);
    const std::size_t n = cos->value.numel();
    auto ones = make_const<T>(Tensor<T>::full(cos->value.shape(), T(1)));
    return scale(tape, sum_all(tape, sub(tape, ones, cos)), T(1) / static_cast<T>(n));
}

namespace detail {
// Accepts [h,w,B] or [N,h,w,B]; returns the input viewed as [N,h,w,B].
template <typename T>
VarPtr<T> as_batched_activation(Tape<T>* tape, const VarPtr<T>& e) {
    const Dims& s = e->value.shape();
    if (s.size() == 4) return e;
    require(s.size() == 3, ErrorKind::shape, "activation must be [h,w,B] or [N,h,w,B]");
    return reshape(tape, e, Dims{1, s[0], s[1], s[2]});
}
}  // namespace detail

// Spatial attention: A(h,w) = sum_b |E(h,w,b)|^2, flattened to [N, h*w].
template <typename T>
VarPtr<T> spatial_attention(Tape<T>* tape, const VarPtr<T>& e_any) {
    auto e = detail::as_batched_activation(tape, e_any);
    const Dims& s = e->value.shape();
    auto a = sum_axis(tape, square(tape, e), 3);  // [N,h,w]
    return reshape(tape, a, Dims{s[0], s[1] * s[2]});
}

// Channel context: Q(b) = mean over space of |E(.,.,b)|, shape [N,B].
template <typename T>
VarPtr<T> channel_context(Tape<T>* tape, const VarPtr<T>& e_any) {
    auto e = detail::as_batched_activation(tape, e_any);
    return global_avgpool(tape, abs_elem(tape, e));
}

// (1/N) * sum ||A_s/|A_s| - A_t/|A_t|||^2 over L2-normalized flattened
// spatial attention maps. Channel counts may differ; spatial extents must
// match. An all-zero activation is a dead network -> degenerate error.
template <typename T>
VarPtr<T> loss_sam(Tape<T>* tape, const VarPtr<T>& e_student, const VarPtr<T>& e_teacher) {
    auto as = l2_normalize(tape, spatial_attention(tape, e_student));
    auto at = l2_normalize(tape, spatial_attention(tape, e_teacher));
    require(as->value.same_shape(at->value), ErrorKind::shape, "loss_sam: spatial extents differ");
    const T inv_n = T(1) / static_cast<T>(as->value.dim(0));
    return scale(tape, sum_all(tape, square(tape, sub(tape, as, at))), inv_n);
}

// (1/N) * sum ||Q_s/|Q_s| - Q_t/|Q_t|||^2 over L2-normalized channel
// context vectors; requires equal channel counts.
template <typename T>
VarPtr<T> loss_cam(Tape<T>* tape, const VarPtr<T>& e_student, const VarPtr<T>& e_teacher) {
    auto qs = channel_context(tape, e_student);
    auto qt = channel_context(tape, e_teacher);
    require(qs->value.same_shape(qt->value), ErrorKind::shape, "loss_cam: channel counts differ");
    auto ns = l2_normalize(tape, qs);
    auto nt = l2_normalize(tape, qt);
    const T inv_n = T(1) / static_cast<T>(ns->value.dim(0));
    return scale(tape, sum_all(tape, square(tape, sub(tape, ns, nt))), inv_n);
}

// Per-term raw (unweighted) loss values for logging; 0 when inactive.
struct LossBreakdown {
    double regression = 0.0;
    double co = 0.0;
    double eo = 0.0;
    double sam = 0.0;
    double cam = 0.0;
    double total = 0.0;
};

// Everything the constraint terms can consume from one forward pass.
// Unused entries may stay null; an active term with a missing artifact is
// a config error.
template <typename T>
struct RegArtifacts {
    VarPtr<T> logits;
    VarPtr<T> embedding;
    VarPtr<T> activation;
};

// L = L_regression + sum over active terms of lambda_term * L_term.
// Terms with weight 0 contribute nothing and are never evaluated.
template <typename T>
VarPtr<T> total_loss(Tape<T>* tape, const VarPtr<T>& l_regression, const RegularizerSpec& spec,
                     const RegArtifacts<T>& student, const RegArtifacts<T>& teacher, LossBreakdown* breakdown) {
    spec.validate();
    LossBreakdown bd;
    bd.regression = static_cast<double>(l_regression->value[0]);
    VarPtr<T> total = l_regression;
    auto need = [](const VarPtr<T>& v, const char* what) {
        require(v != nullptr, ErrorKind::config, std::string("active regularizer needs missing artifact: ") + what);
    };
    if (spec.is_active(RegTerm::CO)) {
        need(student.logits, "student logits");
        need(teacher.logits, "teacher logits");
        auto l = loss_co(tape, student.logits, teacher.logits, static_cast<T>(spec.mu));
        bd.co = static_cast<double>(l->value[0]);
        total = add(tape, total, scale(tape, l, static_cast<T>(spec.lambda.at(RegTerm::CO))));
    }
    if (spec.is_active(RegTerm::EO)) {
        need(student.embedding, "student embedding");
        need(teacher.embedding, "teacher embedding");
        auto l = loss_eo(tape, student.embedding, teacher.embedding);
        bd.eo = static_cast<double>(l->value[0]);
        total = add(tape, total, scale(tape, l, static_cast<T>(spec.lambda.at(RegTerm::EO))));
    }
    if (spec.is_active(RegTerm::SAM)) {
        need(student.activation, "student activation");
        need(teacher.activation, "teacher activation");
        auto l = loss_sam(tape, student.activation, teacher.activation);
        bd.sam = static_cast<double>(l->value[0]);
        total = add(tape, total, scale(tape, l, static_cast<T>(spec.lambda.at(RegTerm::SAM))));
    }
    if (spec.is_active(RegTerm::CAM)) {
        need(student.activation, "student activation");
        need(teacher.activation, "teacher activation");
        auto l = loss_cam(tape, student.activation, teacher.activation);
        bd.cam = static_cast<double>(l->value[0]);
        total = add(tape, total, scale(tape, l, static_cast<T>(spec.lambda.at(RegTerm::CAM))));
    }
    bd.total = static_cast<double>(total->value[0]);
    if (breakdown) *breakdown = bd;
    return total;
}

}  // namespace rtl
