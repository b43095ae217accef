#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dpcl/tensor.hpp"

namespace dpcl {

// In-memory labeled dataset. Features are row-major n x d; when loaded from a
// file they are standardized and the transform is retained for inversion and
// for standardizing a matching evaluation split.
struct Dataset {
    Tensor inputs;  // n x d
    std::vector<int> labels;
    std::size_t num_classes = 0;
    std::string split = "train";
    std::vector<double> feature_mean;  // empty when no standardization applied
    std::vector<double> feature_std;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return inputs.size() == 0 ? 0 : inputs.cols(); }
    Tensor input(std::size_t i) const;
};

// Gaussian blobs: one mean per class, uniform on the unit sphere, shared
// between splits of the same seed; per-coordinate noise with std `spread`.
// Samples are ordered class-major.
Dataset make_synthetic(std::size_t classes, std::size_t dims, std::size_t per_class, double spread,
                       std::uint64_t seed, std::string_view split = "train");

enum class StreamSetup { Disjoint, Blurry, IBlurry };

struct StreamConfig {
    StreamSetup setup = StreamSetup::Disjoint;
    int task_count = 1;
    double disjoint_fraction = 1.0;  // N_b: fraction of classes private to one task
    double minor_fraction = 0.0;     // M_b: share of a class routed to other tasks
    std::uint64_t seed = 1;
};

// A task-free sample order over a dataset. Every dataset index appears exactly
// once; task ids are nondecreasing. task_of_class maps each class to its home
// task (its only task when disjoint, its major-share task otherwise), which is
// what per-task evaluation partitions the test set by.
struct StreamSchedule {
    std::vector<std::pair<std::size_t, int>> order;  // (sample index, task id)
    std::vector<std::size_t> task_end;               // exclusive end offset per task
    int task_count = 0;
    std::vector<int> task_of_class;
};

StreamSchedule build_schedule(const Dataset& data, const StreamConfig& cfg);

// CSV rows: label,feat_1,...,feat_d. Standardizes features to zero mean and
// unit variance with the file's own statistics (it is the train split) and
// records the transform. declared_classes = 0 infers C from the labels.
Dataset load_csv_dataset(const std::string& path, bool has_header,
                         std::size_t declared_classes = 0);

// Same format, standardized with externally supplied (train-split) statistics.
Dataset load_csv_dataset(const std::string& path, bool has_header,
                         const std::vector<double>& mean, const std::vector<double>& stddev,
                         std::size_t declared_classes = 0);

// Raw little-endian float64 matrix with a JSON sidecar carrying shape and
// labels. Standardization behaves like the CSV loader.
Dataset load_binary_dataset(const std::string& bin_path, const std::string& sidecar_path,
                            std::size_t declared_classes = 0);
Dataset load_binary_dataset(const std::string& bin_path, const std::string& sidecar_path,
                            const std::vector<double>& mean, const std::vector<double>& stddev,
                            std::size_t declared_classes = 0);
void save_binary_dataset(const Dataset& raw, const std::string& bin_path,
                         const std::string& sidecar_path);

// One row per stream position: iteration,sample_index,task_id.
void export_schedule_csv(const StreamSchedule& schedule, const std::string& path);

}  // namespace dpcl
