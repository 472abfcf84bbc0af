#include "rtl/config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rtl/checkpoint.hpp"
#include "rtl/error.hpp"
#include "rtl/regularizers.hpp"

namespace rtl {

namespace {

std::vector<std::string> split_path(const std::string& key) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : key) {
        if (ch == '.') {
            if (!cur.empty()) parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) parts.push_back(cur);
    require(!parts.empty(), ErrorKind::config, "override key '" + key + "' is empty");
    return parts;
}

TrainConfig parse_train_section(const ordered_json& j, std::uint64_t seed) {
    jsonutil::reject_unknown_keys(j,
                                  {"lr", "beta1", "beta2", "epsilon", "weight_decay", "batch_size", "epochs",
                                   "decay_power", "flip_prob", "scale_min", "scale_max", "sigma", "freeze", "subset"},
                                  "train section");
    TrainConfig t;
    t.seed = seed;
    t.lr0 = jsonutil::get_double(j, "lr", t.lr0);
    t.beta1 = jsonutil::get_double(j, "beta1", t.beta1);
    t.beta2 = jsonutil::get_double(j, "beta2", t.beta2);
    t.epsilon = jsonutil::get_double(j, "epsilon", t.epsilon);
    t.weight_decay = jsonutil::get_double(j, "weight_decay", t.weight_decay);
    t.batch_size = jsonutil::get_size(j, "batch_size", t.batch_size);
    t.epochs = jsonutil::get_size(j, "epochs", t.epochs);
    t.decay_power = jsonutil::get_double(j, "decay_power", t.decay_power);
    t.flip_prob = jsonutil::get_double(j, "flip_prob", t.flip_prob);
    t.scale_lo = jsonutil::get_double(j, "scale_min", t.scale_lo);
    t.scale_hi = jsonutil::get_double(j, "scale_max", t.scale_hi);
    t.sigma = jsonutil::get_double(j, "sigma", t.sigma);
    t.subset = jsonutil::get_size(j, "subset", t.subset);
    t.freeze = freeze_policy_from_name(jsonutil::get_string(j, "freeze", freeze_policy_name(t.freeze)));
    return t;
}

void parse_reg_section(const ordered_json& j, RegularizerSpec& reg, std::string& teacher_path) {
    jsonutil::reject_unknown_keys(j, {"active", "lambda", "mu", "teacher"}, "reg section");
    reg.mu = jsonutil::get_double(j, "mu", reg.mu);
    teacher_path = jsonutil::get_string(j, "teacher", teacher_path);
    if (j.contains("active")) {
        require(j.at("active").is_array(), ErrorKind::config, "reg.active must be an array of term names");
        reg.active.clear();
        for (const auto& v : j.at("active")) {
            require(v.is_string(), ErrorKind::config, "reg.active entries must be strings");
            reg.active.push_back(reg_term_from_name(v.template get<std::string>()));
        }
    }
    if (j.contains("lambda")) {
        const ordered_json& lj = j.at("lambda");
        jsonutil::require_object(lj, "reg.lambda");
        jsonutil::reject_unknown_keys(lj, {"CO", "EO", "SAM", "CAM"}, "reg.lambda");
        for (RegTerm t : {RegTerm::CO, RegTerm::EO, RegTerm::SAM, RegTerm::CAM}) {
            const std::string name = reg_term_name(t);
            if (lj.contains(name)) reg.lambda[t] = jsonutil::get_double(lj, name, 0.0);
        }
    }
}

SynthSection parse_synth_section(const ordered_json& j) {
    jsonutil::reject_unknown_keys(j, {"variant", "n", "image_size", "classes"}, "synth section");
    SynthSection s;
    s.variant = jsonutil::get_string(j, "variant", s.variant);
    s.n = jsonutil::get_size(j, "n", s.n);
    s.image_size = jsonutil::get_size(j, "image_size", s.image_size);
    s.classes = jsonutil::get_size(j, "classes", s.classes);
    return s;
}

PretrainSection parse_pretrain_section(const ordered_json& j) {
    jsonutil::reject_unknown_keys(j, {"epochs", "batch_size", "lr"}, "pretrain section");
    PretrainSection p;
    p.epochs = jsonutil::get_size(j, "epochs", p.epochs);
    p.batch_size = jsonutil::get_size(j, "batch_size", p.batch_size);
    p.lr = jsonutil::get_double(j, "lr", p.lr);
    return p;
}

EvalSection parse_eval_section(const ordered_json& j) {
    jsonutil::reject_unknown_keys(j, {"checkpoint", "predictions", "split"}, "eval section");
    EvalSection e;
    e.checkpoint = jsonutil::get_string(j, "checkpoint", e.checkpoint);
    e.predictions = jsonutil::get_string(j, "predictions", e.predictions);
    e.split = jsonutil::get_string(j, "split", e.split);
    require(e.split == "train" || e.split == "val" || e.split == "test", ErrorKind::config,
            "eval.split must be train, val, or test");
    return e;
}

AttentionSection parse_attention_section(const ordered_json& j) {
    jsonutil::reject_unknown_keys(j, {"checkpoint", "teacher", "images"}, "attention section");
    AttentionSection a;
    a.checkpoint = jsonutil::get_string(j, "checkpoint", a.checkpoint);
    a.teacher = jsonutil::get_string(j, "teacher", a.teacher);
    a.images = jsonutil::get_size_array(j, "images", a.images);
    return a;
}

SweepSection parse_sweep_section(const ordered_json& j) {
    jsonutil::reject_unknown_keys(j, {"parameter", "term", "values", "seeds"}, "sweep section");
    SweepSection s;
    s.parameter = jsonutil::get_string(j, "parameter", s.parameter);
    require(s.parameter == "lambda" || s.parameter == "sigma", ErrorKind::config,
            "sweep.parameter must be lambda or sigma");
    s.term = jsonutil::get_string(j, "term", s.term);
    reg_term_from_name(s.term);  // validates the name
    s.values = jsonutil::get_double_array(j, "values", s.values);
    if (j.contains("seeds")) {
        require(j.at("seeds").is_array(), ErrorKind::config, "sweep.seeds must be an array");
        s.seeds.clear();
        for (const auto& v : j.at("seeds")) {
            require(v.is_number_unsigned(), ErrorKind::config, "sweep.seeds entries must be unsigned integers");
            s.seeds.push_back(v.template get<std::uint64_t>());
        }
        require(!s.seeds.empty(), ErrorKind::config, "sweep.seeds must not be empty");
    }
    if (s.values.empty()) {
        if (s.parameter == "lambda")
            s.values = {0.0, 2e-5, 2e-4, 2e-3, 2e-2};
        else
            s.values = {0.5, 1.0, 1.5, 2.0, 3.0};
    }
    for (double v : s.values)
        require(std::isfinite(v) && v >= 0.0, ErrorKind::config, "sweep.values must be finite and >= 0");
    return s;
}

}  // namespace

ordered_json read_json_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), ErrorKind::config, "cannot open config file '" + path + "'");
    ordered_json j = ordered_json::parse(is, nullptr, false);
    require(!j.is_discarded(), ErrorKind::config, "config file '" + path + "' is not valid JSON");
    return j;
}

void apply_override(ordered_json& doc, const std::string& key, const std::string& value) {
    const std::vector<std::string> parts = split_path(key);
    ordered_json* node = &doc;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i])) (*node)[parts[i]] = ordered_json::object();
        node = &(*node)[parts[i]];
        require(node->is_object(), ErrorKind::config, "override '" + key + "' descends into a non-object");
    }
    ordered_json parsed = ordered_json::parse(value, nullptr, false);
    (*node)[parts.back()] = parsed.is_discarded() ? ordered_json(value) : parsed;
}

RunConfig parse_run_config(const ordered_json& doc) {
    jsonutil::require_object(doc, "config");
    jsonutil::reject_unknown_keys(
        doc, {"dataset", "out", "seed", "model", "train", "reg", "synth", "pretrain", "eval", "attention", "sweep"},
        "config");
    RunConfig cfg;
    cfg.doc = doc;
    cfg.dataset = jsonutil::get_string(doc, "dataset", "");
    cfg.out = jsonutil::get_string(doc, "out", "");
    cfg.seed = jsonutil::get_u64(doc, "seed", cfg.seed);

    ordered_json model_j = doc.contains("model") ? doc.at("model") : ordered_json::object();
    jsonutil::require_object(model_j, "model section");
    if (!model_j.contains("seed")) model_j["seed"] = cfg.seed;
    cfg.model = model_config_from_json(model_j);

    cfg.train = parse_train_section(doc.contains("train") ? doc.at("train") : ordered_json::object(), cfg.seed);
    if (doc.contains("reg")) parse_reg_section(doc.at("reg"), cfg.train.reg, cfg.teacher_path);
    cfg.train.validate();

    if (doc.contains("synth")) cfg.synth = parse_synth_section(doc.at("synth"));
    if (doc.contains("pretrain")) cfg.pretrain = parse_pretrain_section(doc.at("pretrain"));
    if (doc.contains("eval")) cfg.eval = parse_eval_section(doc.at("eval"));
    if (doc.contains("attention")) cfg.attention = parse_attention_section(doc.at("attention"));
    cfg.sweep = parse_sweep_section(doc.contains("sweep") ? doc.at("sweep") : ordered_json::object());
    return cfg;
}

std::string config_hash_hex(const ordered_json& doc) {
    const std::uint64_t h = fnv1a64(doc.dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

ordered_json provenance_json(const RunConfig& cfg) {
    ordered_json p;
    p["config_hash"] = config_hash_hex(cfg.doc);
    p["seed"] = cfg.seed;
    p["version"] = kToolVersion;
    return p;
}

void write_text_file(const std::string& path, const std::string& text) {
    namespace fs = std::filesystem;
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ofstream os(path, std::ios::binary);
    require(os.good(), ErrorKind::data, "cannot write '" + path + "'");
    os << text;
    require(os.good(), ErrorKind::data, "write failed for '" + path + "'");
}

}  // namespace rtl
