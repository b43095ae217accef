#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dpcl/bsc.hpp"
#include "dpcl/network.hpp"
#include "dpcl/pfi.hpp"
#include "dpcl/pima.hpp"
#include "dpcl/stream.hpp"

namespace dpcl {

// Full description of one experiment run. Parsed from a flat key=value file;
// any key can be overridden from the command line. Defaults reproduce the
// standard engine configuration.
struct ExperimentConfig {
    std::string method = "dpcl";  // dpcl | er | finetune
    std::uint64_t seed = 1;
    std::string out_dir = "results";

    struct DatasetSection {
        std::string kind = "synthetic";  // synthetic | csv | binary
        std::size_t classes = 8;
        std::size_t dims = 16;
        std::size_t per_class = 250;
        std::size_t test_per_class = 50;
        double spread = 0.3;
        std::string train_path;
        std::string test_path;
        bool has_header = false;
        std::size_t declared_classes = 0;  // 0: infer from labels
    } dataset;

    struct StreamSection {
        StreamSetup setup = StreamSetup::Disjoint;
        int tasks = 4;
        double disjoint_fraction = 0.5;  // i-blurry N_b
        double minor_fraction = 0.1;     // blurry M_b
    } stream;

    struct ModelSection {
        std::vector<std::size_t> hidden = {64, 64};
        std::size_t feature_dim = 32;
    } model;

    struct TrainSection {
        std::size_t batch_size = 16;  // must be even
        int updates_per_sample = 3;
        double lr = 0.0003;
        double adam_beta1 = 0.9;
        double adam_beta2 = 0.999;
        double adam_eps = 1e-8;
    } train;

    PfiConfig pfi;
    BscConfig bsc;

    struct PimaSection {
        double gamma = 0.3;                 // history EMA coefficient
        double omega = 1.05;                // learning-rate multiplier
        std::string lr_mode = "main_text";  // main_text | appendix | off
    } pima;

    struct MemorySection {
        std::size_t capacity = 2000;
        std::string policy = "mi";  // mi | reservoir | none
    } memory;

    struct EvalSection {
        std::size_t every = 50;  // stream samples between evaluations
    } eval;
};

// Parses one `key = value` assignment into the config. Unknown keys and
// malformed values raise ConfigError.
void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Reads a flat key=value file ('#' starts a comment) and validates the result.
ExperimentConfig load_config_file(const std::string& path);

// Range and consistency checks; raises ConfigError on violation.
void validate_config(const ExperimentConfig& cfg);

// Echo of every setting under its config-file key, for the run summary.
std::map<std::string, std::string> config_to_map(const ExperimentConfig& cfg);

LrMode parse_lr_mode(const std::string& name);
StreamSetup parse_stream_setup(const std::string& name);
std::string stream_setup_name(StreamSetup setup);

}  // namespace dpcl
