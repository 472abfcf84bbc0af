#pragma once

#include <string>
#include <vector>

#include "rtl/config.hpp"

// Command implementations behind the command-line binary. Each throws
// rtl::Error on failure; the binary maps the error kind to an exit code.
namespace rtl {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

// Finite-difference certification of every differentiable op plus the full
// four-term training loss on a small end-to-end network (64-bit).
std::vector<GradCheckEntry> run_gradcheck_suite();

void cmd_synth(const RunConfig& cfg);
void cmd_pretrain(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_attention(const RunConfig& cfg);
void cmd_gradcheck(const RunConfig& cfg);
void cmd_sweep(const RunConfig& cfg);

// Shared helpers (also used by tests).
void init_student_from_teacher(Model<float>& student, const Model<float>& teacher);
std::string history_csv_text(const std::vector<HistoryRow>& history);
std::vector<std::size_t> split_indices(const DatasetManifest& m, const std::string& split);

}  // namespace rtl
