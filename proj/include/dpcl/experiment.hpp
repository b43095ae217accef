#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpcl/bsc.hpp"
#include "dpcl/config.hpp"
#include "dpcl/network.hpp"
#include "dpcl/pfi.hpp"
#include "dpcl/pima.hpp"
#include "dpcl/stream.hpp"

namespace dpcl {

// One evaluation snapshot taken during the stream.
struct EvalRow {
    long iteration = 0;
    int task_id = 0;
    std::vector<double> task_acc;  // percent per task; NaN for tasks not yet reached
    double avg_acc = 0.0;          // mean over the tasks reached so far
    double lr = 0.0;
    std::size_t mem_size = 0;
    double mean_history = 0.0;
};

struct MetricsLog {
    int task_count = 0;
    std::vector<EvalRow> rows;
    // acc_matrix[i][j]: accuracy (percent) on task j measured at the end of
    // task i; NaN above the diagonal.
    std::vector<std::vector<double>> acc_matrix;
    double final_avg_acc = 0.0;
    double final_forgetting = 0.0;  // NaN with fewer than two tasks
    long total_iterations = 0;
};

// Average anytime accuracy at the end of task `row`: mean of
// acc_matrix[row][0..row].
double compute_acc(const std::vector<std::vector<double>>& acc_matrix, std::size_t row);

// Forgetting at the end of task `row` (row >= 1): mean over earlier tasks of
// |a_{i,i} - a_{row,i}|.
double compute_fm(const std::vector<std::vector<double>>& acc_matrix, std::size_t row);

// Baselines are expressed as restrictions of the full engine: the replay
// baseline runs one head, no perturbation or mixing, deterministic inference,
// reservoir memory and a fixed rate; plain finetuning additionally drops the
// memory.
ExperimentConfig effective_settings(const ExperimentConfig& cfg);

// Builds (train, test) as configured: synthetic blobs with shared class means,
// or file-backed data with the evaluation split standardized by the training
// statistics.
std::pair<Dataset, Dataset> load_datasets(const ExperimentConfig& cfg);

// Per-task accuracy (percent) over the evaluation split, restricted to classes
// whose home task has been reached. Unreached tasks report NaN and their
// samples never touch the generator, so the reached-task predictions do not
// depend on how many tasks remain.
std::vector<double> anytime_eval(const MlpModel& model, const BscState& bsc, const Dataset& test,
                                 const std::vector<int>& task_of_class, int current_task,
                                 int task_count, RngState eval_rng);

struct RunResult {
    ExperimentConfig settings;  // effective settings the run used
    MetricsLog log;
    MlpModel model;
    BscState bsc;
    ClassLossTracker tracker;
    AdamState adam;
    LrState lr;
    ReplayMemory memory;
    long iterations = 0;
    std::size_t num_classes = 0;
    std::vector<double> feature_mean, feature_std;  // train standardization, empty if none
    double wall_time_seconds = 0.0;
};

// Runs the full online stream: per arriving sample, buffer it, run the
// configured number of replay updates, maintain memory, and evaluate on the
// configured cadence and at every task boundary.
RunResult run_experiment(const ExperimentConfig& cfg, const Dataset& train, const Dataset& test,
                         const StreamSchedule& schedule);

struct LandscapePoint {
    double s = 0.0;
    double loss = 0.0;
};

// Mean classifier loss along a random direction through the current head
// weights: direction is Gaussian, normalized to the heads' own Frobenius
// norm; s = 0 evaluates the unmodified weights exactly.
std::vector<LandscapePoint> weight_landscape_probe(const MlpModel& model, const Dataset& data,
                                                   std::uint64_t direction_seed, int points,
                                                   double range);

// Writes metrics.csv and summary.json under out_dir (which must exist).
void emit_results(const RunResult& result, const std::string& out_dir);

}  // namespace dpcl
