#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtl/jsonutil.hpp"
#include "rtl/model.hpp"
#include "rtl/trainer.hpp"

// Run configuration: one JSON document shared by all commands, with strict
// unknown-key rejection and dotted-path overrides from the command line.
namespace rtl {

inline constexpr const char* kToolVersion = "0.1.0";

struct SynthSection {
    std::string variant = "faces";
    std::size_t n = 600;
    std::size_t image_size = 64;
    std::size_t classes = 10;
};

struct PretrainSection {
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    double lr = 0.001;
};

struct EvalSection {
    std::string checkpoint;    // trained model to evaluate
    std::string predictions;   // optional directory of predicted-landmark CSVs
    std::string split = "test";
};

struct AttentionSection {
    std::string checkpoint;           // student
    std::string teacher;              // teacher checkpoint
    std::vector<std::size_t> images;  // dataset indices to visualize
};

struct SweepSection {
    std::string parameter = "lambda";  // "lambda" or "sigma"
    std::string term = "SAM";          // regularizer the lambda sweep scales
    std::vector<double> values;        // grid; defaults depend on parameter
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

struct RunConfig {
    ordered_json doc;  // effective document after overrides; hashed for provenance
    std::string dataset;
    std::string out;
    std::uint64_t seed = 1;
    ModelConfig model;
    TrainConfig train;         // carries the regularizer spec
    std::string teacher_path;  // reg.teacher: checkpoint used by regularized training
    SynthSection synth;
    PretrainSection pretrain;
    EvalSection eval;
    AttentionSection attention;
    SweepSection sweep;
};

ordered_json read_json_file(const std::string& path);

// Sets doc[a][b][c] = parsed(value) for key "a.b.c". Values parse as JSON
// when possible, otherwise as a plain string.
void apply_override(ordered_json& doc, const std::string& key, const std::string& value);

RunConfig parse_run_config(const ordered_json& doc);

std::string config_hash_hex(const ordered_json& doc);
ordered_json provenance_json(const RunConfig& cfg);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace rtl
