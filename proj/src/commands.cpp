#include "rtl/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rtl/checkpoint.hpp"
#include "rtl/dataset.hpp"
#include "rtl/heatmap.hpp"
#include "rtl/image_io.hpp"
#include "rtl/metrics.hpp"
#include "rtl/synthdata.hpp"

namespace rtl {

namespace fs = std::filesystem;

namespace {

void write_run_echo(const RunConfig& cfg) {
    require(!cfg.out.empty(), ErrorKind::config, "command needs an output directory ('out')");
    fs::create_directories(cfg.out);
    write_text_file((fs::path(cfg.out) / "config.json").string(), cfg.doc.dump(2) + "\n");
    write_text_file((fs::path(cfg.out) / "provenance.json").string(), provenance_json(cfg).dump(2) + "\n");
}

Dataset open_dataset(const RunConfig& cfg) {
    require(!cfg.dataset.empty(), ErrorKind::config, "command needs a dataset path ('dataset')");
    return load_dataset(cfg.dataset);
}

// Fills in model extents/classes/landmarks from the dataset when the config
// file did not pin them explicitly.
ModelConfig effective_model_config(const RunConfig& cfg, const DatasetManifest& m) {
    ModelConfig mc = cfg.model;
    const ordered_json mj = cfg.doc.contains("model") ? cfg.doc.at("model") : ordered_json::object();
    if (!mj.contains("h")) mc.h = m.image_size;
    if (!mj.contains("w")) mc.w = m.image_size;
    if (!mj.contains("k") && m.k > 0) mc.k = m.k;
    if (!mj.contains("c")) mc.c = m.c;
    mc.validate();
    require(mc.h == m.image_size && mc.w == m.image_size, ErrorKind::config,
            "model input extent does not match the dataset image size");
    return mc;
}

Model<float> load_model(const std::string& path, const char* what) {
    require(!path.empty(), ErrorKind::config, std::string("missing ") + what + " checkpoint path");
    return load_checkpoint<float>(path);
}

Tensor<float> batch_of_one(const Dataset& ds, std::size_t idx) {
    Tensor<float> img = image_to_tensor<float>(ds.images.at(idx), ds.manifest);
    Tensor<float> batch({1, img.dim(0), img.dim(1), img.dim(2)});
    std::copy(img.data(), img.data() + img.numel(), batch.data());
    return batch;
}

Landmarks predict_one(Model<float>& model, const Dataset& ds, std::size_t idx) {
    ForwardNeed need;
    need.heatmaps = true;
    auto x = make_const<float>(batch_of_one(ds, idx));
    ForwardArtifacts<float> art = model.forward(nullptr, x, need, false);
    const Tensor<float>& maps = art.heatmaps->value;  // [1, h, w, K]
    Tensor<float> one({maps.dim(1), maps.dim(2), maps.dim(3)});
    std::copy(maps.data(), maps.data() + one.numel(), one.data());
    return decode_heatmaps(one);
}

std::vector<Landmarks> predict_split(Model<float>& model, const Dataset& ds,
                                     const std::vector<std::size_t>& indices) {
    std::vector<Landmarks> preds;
    preds.reserve(indices.size());
    for (std::size_t idx : indices) preds.push_back(predict_one(model, ds, idx));
    return preds;
}

double split_mse(Model<float>& model, const Dataset& ds, const std::vector<std::size_t>& indices) {
    std::vector<double> errs;
    errs.reserve(indices.size());
    for (std::size_t idx : indices) errs.push_back(per_image_error(predict_one(model, ds, idx), ds.landmarks.at(idx)));
    return mse(errs).mean;
}

// Channel-collapsed spatial attention (sum of squares over channels) of the
// attention-source activation, flattened and scaled to unit L2 norm.
std::vector<double> attention_map(Model<float>& model, const VarPtr<float>& x, std::size_t* out_h,
                                  std::size_t* out_w) {
    ForwardNeed need;
    need.activation = true;
    ForwardArtifacts<float> art = model.forward(nullptr, x, need, false);
    const Tensor<float>& e = art.activation->value;  // [1, h, w, B]
    const std::size_t h = e.dim(1), w = e.dim(2), b = e.dim(3);
    std::vector<double> a(h * w, 0.0);
    for (std::size_t p = 0; p < h * w; ++p)
        for (std::size_t c = 0; c < b; ++c) {
            const double v = e[p * b + c];
            a[p] += v * v;
        }
    double norm = 0.0;
    for (double v : a) norm += v * v;
    norm = std::sqrt(norm);
    require(norm > 0.0, ErrorKind::degenerate, "attention map has zero norm");
    for (double& v : a) v /= norm;
    if (out_h) *out_h = h;
    if (out_w) *out_w = w;
    return a;
}

std::string sweep_row(double value, std::uint64_t seed, double mse_value) {
    return fmt_double(value) + "," + std::to_string(seed) + "," + fmt_double(mse_value) + "\n";
}

}  // namespace

std::vector<std::size_t> split_indices(const DatasetManifest& m, const std::string& split) {
    if (split == "train") return m.train;
    if (split == "val") return m.val;
    if (split == "test") return m.test;
    throw_config("unknown split '" + split + "'");
}

void init_student_from_teacher(Model<float>& student, const Model<float>& teacher) {
    const bool copy_classifier =
        student.config().c > 0 && student.config().c == teacher.config().c &&
        student.config().embed_dim() == teacher.config().embed_dim();
    std::map<std::string, VarPtr<float>> tp;
    for (const auto& [name, p] : teacher.params()) tp[name] = p;
    for (const auto& [name, p] : student.params()) {
        const bool enc = name.rfind("encoder.", 0) == 0;
        const bool cls = name.rfind("classifier.", 0) == 0;
        if (!enc && !(cls && copy_classifier)) continue;
        auto it = tp.find(name);
        require(it != tp.end(), ErrorKind::config, "teacher checkpoint lacks parameter '" + name + "'");
        require(it->second->value.same_shape(p->value), ErrorKind::config,
                "teacher/student shape mismatch at '" + name + "'");
        p->value = it->second->value;
    }
    std::map<std::string, const Tensor<float>*> tb;
    for (const auto& [name, buf] : teacher.buffers()) tb[name] = buf;
    for (const auto& [name, buf] : student.buffers()) {
        if (name.rfind("encoder.", 0) != 0) continue;
        auto it = tb.find(name);
        require(it != tb.end(), ErrorKind::config, "teacher checkpoint lacks buffer '" + name + "'");
        *buf = *it->second;
    }
}

std::string history_csv_text(const std::vector<HistoryRow>& history) {
    std::string text = "epoch,lr,train_loss,val_loss,loss_regression,loss_co,loss_eo,loss_sam,loss_cam\n";
    for (const HistoryRow& r : history) {
        text += std::to_string(r.epoch) + "," + fmt_double(r.lr) + "," + fmt_double(r.train_loss) + "," +
                fmt_double(r.val_loss) + "," + fmt_double(r.terms.regression) + "," + fmt_double(r.terms.co) + "," +
                fmt_double(r.terms.eo) + "," + fmt_double(r.terms.sam) + "," + fmt_double(r.terms.cam) + "\n";
    }
    return text;
}

void cmd_synth(const RunConfig& cfg) {
    require(!cfg.out.empty(), ErrorKind::config, "synth needs an output directory ('out')");
    const DatasetVariant variant = dataset_variant_from_name(cfg.synth.variant);
    const DatasetManifest m =
        generate_dataset(cfg.out, cfg.synth.n, cfg.synth.image_size, cfg.synth.classes, cfg.seed, variant);
    write_run_echo(cfg);
    std::cout << "synth: wrote " << m.n << " " << m.variant << " images (" << m.image_size << "x" << m.image_size
              << ", " << m.c << " classes, " << m.k << " landmarks) to " << cfg.out << "\n";
}

void cmd_pretrain(const RunConfig& cfg) {
    const Dataset ds = open_dataset(cfg);
    write_run_echo(cfg);
    ModelConfig mc = effective_model_config(cfg, ds.manifest);
    require(mc.c == ds.manifest.c, ErrorKind::config, "pretrain: model class count must match the dataset");
    Model<float> model = Model<float>::build(mc);
    const double acc =
        pretrain_classifier(model, ds, cfg.pretrain.epochs, cfg.pretrain.batch_size, cfg.seed, cfg.pretrain.lr);
    const double chance_bar = 2.0 / static_cast<double>(mc.c);
    if (acc < chance_bar)
        throw_numeric("pretrain: degenerate teacher (train accuracy " + fmt_double(acc) + " < " +
                      fmt_double(chance_bar) + ")");
    save_checkpoint((fs::path(cfg.out) / "checkpoint.rtlc").string(), model, provenance_json(cfg));
    ordered_json mj;
    mj["train_accuracy"] = acc;
    write_text_file((fs::path(cfg.out) / "metrics.json").string(), mj.dump(2) + "\n");
    std::cout << "pretrain: train accuracy " << fmt_double(acc) << ", checkpoint in " << cfg.out << "\n";
}

void cmd_train(const RunConfig& cfg) {
    const Dataset ds = open_dataset(cfg);
    write_run_echo(cfg);
    ModelConfig mc = effective_model_config(cfg, ds.manifest);
    Model<float> student = Model<float>::build(mc);

    std::optional<Model<float>> teacher;
    if (!cfg.teacher_path.empty()) {
        teacher = load_model(cfg.teacher_path, "teacher");
        teacher->freeze_all();
        require(teacher->config().h == mc.h && teacher->config().w == mc.w, ErrorKind::config,
                "teacher input extent does not match the dataset");
        init_student_from_teacher(student, *teacher);
    }

    TrainConfig tcfg = cfg.train;
    tcfg.seed = cfg.seed;
    const TrainOutcome outcome = train(student, teacher ? &*teacher : nullptr, ds, tcfg);

    save_checkpoint((fs::path(cfg.out) / "checkpoint.rtlc").string(), student, provenance_json(cfg));
    write_text_file((fs::path(cfg.out) / "history.csv").string(), history_csv_text(outcome.history));
    ordered_json tj;
    tj["best_epoch"] = outcome.best_epoch;
    tj["best_val_loss"] = outcome.best_val_loss;
    tj["epochs"] = outcome.history.size();
    tj["freeze"] = freeze_policy_name(tcfg.freeze);
    write_text_file((fs::path(cfg.out) / "train.json").string(), tj.dump(2) + "\n");
    std::cout << "train: best val loss " << fmt_double(outcome.best_val_loss) << " at epoch " << outcome.best_epoch
              << ", artifacts in " << cfg.out << "\n";
}

void cmd_eval(const RunConfig& cfg) {
    const Dataset ds = open_dataset(cfg);
    require(ds.manifest.k >= 1, ErrorKind::data, "eval: dataset has no landmarks");
    write_run_echo(cfg);
    const std::vector<std::size_t> indices = split_indices(ds.manifest, cfg.eval.split);
    require(!indices.empty(), ErrorKind::data, "eval: split '" + cfg.eval.split + "' is empty");

    std::vector<Landmarks> gts;
    gts.reserve(indices.size());
    for (std::size_t idx : indices) gts.push_back(ds.landmarks.at(idx));

    std::vector<Landmarks> preds;
    if (!cfg.eval.predictions.empty()) {
        for (std::size_t idx : indices) {
            const std::string path = (fs::path(cfg.eval.predictions) / (sample_stem(idx) + ".csv")).string();
            preds.push_back(read_landmarks_csv(path, ds.manifest.k));
        }
    } else {
        Model<float> model = load_model(cfg.eval.checkpoint, "eval");
        require(model.config().k == ds.manifest.k, ErrorKind::config, "eval: model K does not match the dataset");
        require(model.config().h == ds.manifest.image_size && model.config().w == ds.manifest.image_size,
                ErrorKind::config, "eval: model input extent does not match the dataset");
        preds = predict_split(model, ds, indices);
    }

    const EvalReport rep = evaluate(preds, gts);
    ordered_json ej;
    ej["provenance"] = provenance_json(cfg);
    ej["split"] = cfg.eval.split;
    ej["count"] = indices.size();
    ej["report"] = eval_report_to_json(rep);
    write_text_file((fs::path(cfg.out) / "eval.json").string(), ej.dump(2) + "\n");

    std::string ced_csv = "error,fraction\n";
    for (const CedPoint& p : rep.curve) ced_csv += fmt_double(p.error) + "," + fmt_double(p.fraction) + "\n";
    write_text_file((fs::path(cfg.out) / "ced.csv").string(), ced_csv);

    std::cout << "eval[" << cfg.eval.split << "]: MSE " << format_mean_std(rep.error_stats);
    for (const auto& [t, fr] : rep.failure_rates) std::cout << " | FR@" << fmt_double(t) << " " << fmt_double(fr);
    for (const auto& [t, a] : rep.aucs) std::cout << " | AUC@" << fmt_double(t) << " " << fmt_double(a);
    std::cout << "\n";
}

void cmd_attention(const RunConfig& cfg) {
    const Dataset ds = open_dataset(cfg);
    write_run_echo(cfg);
    Model<float> student = load_model(cfg.attention.checkpoint, "student");
    Model<float> teacher = load_model(cfg.attention.teacher, "teacher");
    std::vector<std::size_t> indices = cfg.attention.images;
    if (indices.empty()) {
        require(!ds.manifest.test.empty(), ErrorKind::data, "attention: empty test split");
        indices.push_back(ds.manifest.test.front());
    }
    for (std::size_t idx : indices) {
        require(idx < ds.manifest.n, ErrorKind::config, "attention: image index out of range");
        auto x = make_const<float>(batch_of_one(ds, idx));
        std::size_t th = 0, tw = 0, sh = 0, sw = 0;
        const std::vector<double> ta = attention_map(teacher, x, &th, &tw);
        const std::vector<double> sa = attention_map(student, x, &sh, &sw);
        require(th == sh && tw == sw, ErrorKind::config,
                "attention: teacher and student attention grids have different extents");
        std::vector<double> diff(ta.size());
        for (std::size_t i = 0; i < ta.size(); ++i) diff[i] = std::abs(ta[i] - sa[i]);
        const std::string stem = (fs::path(cfg.out) / sample_stem(idx)).string();
        write_pgm_scaled(stem + "_teacher.pgm", ta, th, tw);
        write_pgm_scaled(stem + "_student.pgm", sa, sh, sw);
        write_pgm_scaled(stem + "_diff.pgm", diff, th, tw);
    }
    std::cout << "attention: wrote " << indices.size() * 3 << " maps to " << cfg.out << "\n";
}

void cmd_gradcheck(const RunConfig& cfg) {
    const std::vector<GradCheckEntry> entries = run_gradcheck_suite();
    std::string text;
    double worst = 0.0;
    std::string worst_name;
    for (const GradCheckEntry& e : entries) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-32s max_rel_err %.3e  (%zu entries)\n", e.name.c_str(), e.max_rel_err,
                      e.checked);
        text += line;
        if (!(e.max_rel_err < worst) && std::isfinite(e.max_rel_err)) {
            if (e.max_rel_err > worst) {
                worst = e.max_rel_err;
                worst_name = e.name;
            }
        } else if (!std::isfinite(e.max_rel_err)) {
            worst = e.max_rel_err;
            worst_name = e.name;
        }
    }
    std::cout << text;
    if (!cfg.out.empty()) {
        write_run_echo(cfg);
        write_text_file((fs::path(cfg.out) / "gradcheck.txt").string(), text);
    }
    const bool all_ok =
        std::all_of(entries.begin(), entries.end(),
                    [](const GradCheckEntry& e) { return std::isfinite(e.max_rel_err) && e.max_rel_err < 1e-4; });
    if (!all_ok)
        throw_numeric("gradient check failed: " + worst_name + " rel err " + fmt_double(worst) + " >= 1e-4");
    std::cout << "gradcheck: " << entries.size() << " checks passed, worst rel err " << fmt_double(worst) << " ("
              << worst_name << ")\n";
}

void cmd_sweep(const RunConfig& cfg) {
    const Dataset ds = open_dataset(cfg);
    require(ds.manifest.k >= 1, ErrorKind::data, "sweep: dataset has no landmarks");
    write_run_echo(cfg);
    const bool lambda_sweep = cfg.sweep.parameter == "lambda";
    const RegTerm term = reg_term_from_name(cfg.sweep.term);

    std::string rows_csv = "parameter,value,seed,test_mse\n";
    std::string summary_csv = "parameter,value,mse_mean,mse_std\n";
    for (double value : cfg.sweep.values) {
        std::vector<double> mses;
        for (std::uint64_t seed : cfg.sweep.seeds) {
            TrainConfig tcfg = cfg.train;
            tcfg.seed = seed;
            if (lambda_sweep) {
                tcfg.reg.active = {term};
                tcfg.reg.lambda[term] = value;
            } else {
                tcfg.sigma = value;
            }
            ModelConfig mc = effective_model_config(cfg, ds.manifest);
            mc.seed = seed;
            Model<float> student = Model<float>::build(mc);
            std::optional<Model<float>> teacher;
            if (!cfg.teacher_path.empty()) {
                teacher = load_model(cfg.teacher_path, "teacher");
                teacher->freeze_all();
                init_student_from_teacher(student, *teacher);
            }
            train(student, teacher ? &*teacher : nullptr, ds, tcfg);
            const double m = split_mse(student, ds, ds.manifest.test);
            mses.push_back(m);
            rows_csv += cfg.sweep.parameter + "," + sweep_row(value, seed, m);
            std::cout << "sweep " << cfg.sweep.parameter << "=" << fmt_double(value) << " seed=" << seed
                      << " test_mse=" << fmt_double(m) << "\n";
        }
        const MeanStd stats = mse(mses);
        summary_csv += cfg.sweep.parameter + "," + fmt_double(value) + "," + fmt_double(stats.mean) + "," +
                       fmt_double(stats.std) + "\n";
    }
    write_text_file((fs::path(cfg.out) / "sweep.csv").string(), rows_csv);
    write_text_file((fs::path(cfg.out) / "summary.csv").string(), summary_csv);
    std::cout << "sweep: wrote " << cfg.out << "/sweep.csv and summary.csv\n";
}

}  // namespace rtl
