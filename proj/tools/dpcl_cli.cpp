#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpcl/checkpoint.hpp"
#include "dpcl/config.hpp"
#include "dpcl/errors.hpp"
#include "dpcl/experiment.hpp"
#include "dpcl/math.hpp"
#include "dpcl/stream.hpp"

namespace {

struct RunOptions {
    std::string config_path;
    std::string out_dir;
    std::string method;
    long long seed = -1;
    std::vector<std::string> overrides;
};

struct EvalOptions {
    std::string checkpoint_path;
    std::string data_path;
    bool has_header = false;
    unsigned long long seed = 1;
};

struct ProbeOptions {
    std::string checkpoint_path;
    std::string data_path;
    std::string out_path = "landscape.csv";
    bool has_header = false;
    int points = 21;
    double range = 1.0;
    unsigned long long seed = 1;
};

dpcl::Dataset load_eval_data(const dpcl::LoadedCheckpoint& ck, const std::string& path,
                             bool has_header) {
    if (ck.feature_mean.empty())
        return dpcl::load_csv_dataset(path, has_header, ck.num_classes);
    return dpcl::load_csv_dataset(path, has_header, ck.feature_mean, ck.feature_std,
                                  ck.num_classes);
}

int run_command(const RunOptions& opt) {
    dpcl::ExperimentConfig cfg = dpcl::load_config_file(opt.config_path);
    if (opt.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opt.seed);
    if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
    if (!opt.method.empty()) dpcl::apply_config_entry(cfg, "method", opt.method);
    for (const std::string& assignment : opt.overrides) {
        auto eq = assignment.find('=');
        if (eq == std::string::npos)
            throw dpcl::ConfigError("--set expects key=value, got '" + assignment + "'");
        dpcl::apply_config_entry(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
    }
    dpcl::validate_config(cfg);

    auto [train, test] = dpcl::load_datasets(cfg);
    dpcl::StreamConfig scfg;
    scfg.setup = cfg.stream.setup;
    scfg.task_count = cfg.stream.tasks;
    scfg.disjoint_fraction = cfg.stream.disjoint_fraction;
    scfg.minor_fraction = cfg.stream.minor_fraction;
    scfg.seed = cfg.seed;
    dpcl::StreamSchedule schedule = dpcl::build_schedule(train, scfg);

    dpcl::RunResult result = dpcl::run_experiment(cfg, train, test, schedule);

    std::filesystem::create_directories(cfg.out_dir);
    dpcl::emit_results(result, cfg.out_dir);
    dpcl::export_schedule_csv(schedule, cfg.out_dir + "/schedule.csv");
    dpcl::save_checkpoint(cfg.out_dir + "/checkpoint.json", result);

    std::printf("method=%s seed=%llu tasks=%d iterations=%ld final_avg_acc=%.4f", cfg.method.c_str(),
                static_cast<unsigned long long>(cfg.seed), result.log.task_count, result.iterations,
                result.log.final_avg_acc);
    if (result.log.task_count >= 2)
        std::printf(" final_forgetting=%.4f", result.log.final_forgetting);
    std::printf(" out=%s\n", cfg.out_dir.c_str());
    return 0;
}

int eval_command(const EvalOptions& opt) {
    dpcl::LoadedCheckpoint ck = dpcl::load_checkpoint(opt.checkpoint_path);
    dpcl::Dataset data = load_eval_data(ck, opt.data_path, opt.has_header);
    dpcl::RngState rng(static_cast<std::uint64_t>(opt.seed));
    dpcl::RngState er = rng.substream("eval-cli");
    long correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        dpcl::RngState sr = er.substream("sample", i);
        auto [p_bar, branch_ps] = dpcl::predict_ensemble(ck.model, ck.bsc, data.input(i), sr);
        if (static_cast<int>(dpcl::argmax(p_bar)) == data.labels[i]) ++correct;
    }
    double acc = 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
    std::printf("{\"samples\": %zu, \"correct\": %ld, \"accuracy\": %.4f}\n", data.size(), correct,
                acc);
    return 0;
}

int probe_command(const ProbeOptions& opt) {
    dpcl::LoadedCheckpoint ck = dpcl::load_checkpoint(opt.checkpoint_path);
    dpcl::Dataset data = load_eval_data(ck, opt.data_path, opt.has_header);
    auto points = dpcl::weight_landscape_probe(ck.model, data, static_cast<std::uint64_t>(opt.seed),
                                               opt.points, opt.range);
    std::ofstream out(opt.out_path);
    if (!out) throw dpcl::DataError("cannot write " + opt.out_path);
    out << "s,loss\n";
    char buf[128];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", p.s, p.loss);
        out << buf;
    }
    std::printf("wrote %zu landscape points to %s\n", points.size(), opt.out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online continual-learning engine: doubly perturbed replay training"};
    app.require_subcommand(1);

    RunOptions run_opt;
    CLI::App* run = app.add_subcommand("run", "Run one streaming experiment");
    run->add_option("--config", run_opt.config_path, "Flat key=value config file")->required();
    run->add_option("--seed", run_opt.seed, "Override the experiment seed");
    run->add_option("--out", run_opt.out_dir, "Override the output directory");
    run->add_option("--method", run_opt.method, "Override the method (dpcl, er, finetune)");
    run->add_option("--set", run_opt.overrides, "Override any config key (key=value, repeatable)");

    EvalOptions eval_opt;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a CSV dataset");
    eval->add_option("--checkpoint", eval_opt.checkpoint_path, "Checkpoint JSON file")->required();
    eval->add_option("--data", eval_opt.data_path, "CSV dataset (label,feat_1,...)")->required();
    eval->add_flag("--has-header", eval_opt.has_header, "Skip the first CSV line");
    eval->add_option("--seed", eval_opt.seed, "Seed for the stochastic classifier draws");

    ProbeOptions probe_opt;
    CLI::App* probe = app.add_subcommand("probe-landscape",
                                         "Loss along a random direction through the head weights");
    probe->add_option("--checkpoint", probe_opt.checkpoint_path, "Checkpoint JSON file")->required();
    probe->add_option("--data", probe_opt.data_path, "CSV dataset (label,feat_1,...)")->required();
    probe->add_option("--out", probe_opt.out_path, "Output CSV path");
    probe->add_flag("--has-header", probe_opt.has_header, "Skip the first CSV line");
    probe->add_option("--points", probe_opt.points, "Number of probe points");
    probe->add_option("--range", probe_opt.range, "Half-width of the probed interval");
    probe->add_option("--seed", probe_opt.seed, "Seed for the probe direction");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (run->parsed()) return run_command(run_opt);
        if (eval->parsed()) return eval_command(eval_opt);
        if (probe->parsed()) return probe_command(probe_opt);
        std::fprintf(stderr, "no command given\n");
        return 2;
    } catch (const dpcl::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const dpcl::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const dpcl::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
