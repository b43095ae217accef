#include "dpcl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "dpcl/errors.hpp"
#include "dpcl/math.hpp"

namespace dpcl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of_finite(const std::vector<double>& v, std::size_t count) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < count && i < v.size(); ++i) {
        if (std::isfinite(v[i])) {
            sum += v[i];
            ++n;
        }
    }
    return n == 0 ? kNaN : sum / static_cast<double>(n);
}

std::string fixed4(double v) {
    if (!std::isfinite(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string general10(double v) {
    if (!std::isfinite(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

double compute_acc(const std::vector<std::vector<double>>& acc_matrix, std::size_t row) {
    if (row >= acc_matrix.size()) throw std::invalid_argument("compute_acc: row out of range");
    if (acc_matrix[row].size() <= row)
        throw std::invalid_argument("compute_acc: matrix row too short");
    double sum = 0.0;
    for (std::size_t i = 0; i <= row; ++i) sum += acc_matrix[row][i];
    return sum / static_cast<double>(row + 1);
}

double compute_fm(const std::vector<std::vector<double>>& acc_matrix, std::size_t row) {
    if (row >= acc_matrix.size()) throw std::invalid_argument("compute_fm: row out of range");
    if (row < 1) throw std::invalid_argument("compute_fm: needs at least two tasks");
    if (acc_matrix[row].size() < row)
        throw std::invalid_argument("compute_fm: matrix row too short");
    double sum = 0.0;
    for (std::size_t i = 0; i < row; ++i) {
        if (acc_matrix[i].size() <= i) throw std::invalid_argument("compute_fm: matrix row too short");
        sum += std::abs(acc_matrix[i][i] - acc_matrix[row][i]);
    }
    return sum / static_cast<double>(row);
}

ExperimentConfig effective_settings(const ExperimentConfig& cfg) {
    ExperimentConfig out = cfg;
    if (cfg.method == "er" || cfg.method == "finetune") {
        out.pfi.sigma_m = 0.0;
        out.pfi.sigma_a = 0.0;
        out.pfi.force_zeta = 1.0;
        out.pfi.per_sample_zeta = false;
        out.bsc.num_heads = 1;
        out.bsc.enabled = false;
        out.pima.lr_mode = "off";
        if (cfg.method == "er") {
            out.memory.policy = "reservoir";
        } else {
            out.memory.policy = "none";
            out.memory.capacity = 0;
        }
    }
    return out;
}

std::pair<Dataset, Dataset> load_datasets(const ExperimentConfig& cfg) {
    if (cfg.dataset.kind == "synthetic") {
        Dataset train = make_synthetic(cfg.dataset.classes, cfg.dataset.dims, cfg.dataset.per_class,
                                       cfg.dataset.spread, cfg.seed, "train");
        Dataset test = make_synthetic(cfg.dataset.classes, cfg.dataset.dims,
                                      cfg.dataset.test_per_class, cfg.dataset.spread, cfg.seed,
                                      "test");
        return {std::move(train), std::move(test)};
    }
    if (cfg.dataset.kind == "csv") {
        Dataset train =
            load_csv_dataset(cfg.dataset.train_path, cfg.dataset.has_header, cfg.dataset.declared_classes);
        Dataset test = load_csv_dataset(cfg.dataset.test_path, cfg.dataset.has_header,
                                        train.feature_mean, train.feature_std, train.num_classes);
        return {std::move(train), std::move(test)};
    }
    // binary: the sidecar sits next to the matrix as <path>.json
    Dataset train = load_binary_dataset(cfg.dataset.train_path, cfg.dataset.train_path + ".json",
                                        cfg.dataset.declared_classes);
    Dataset test = load_binary_dataset(cfg.dataset.test_path, cfg.dataset.test_path + ".json",
                                       train.feature_mean, train.feature_std, train.num_classes);
    return {std::move(train), std::move(test)};
}

std::vector<double> anytime_eval(const MlpModel& model, const BscState& bsc, const Dataset& test,
                                 const std::vector<int>& task_of_class, int current_task,
                                 int task_count, RngState eval_rng) {
    if (task_count < 1) throw std::invalid_argument("anytime_eval: task_count must be positive");
    std::vector<long> correct(static_cast<std::size_t>(task_count), 0);
    std::vector<long> total(static_cast<std::size_t>(task_count), 0);
    for (std::size_t i = 0; i < test.size(); ++i) {
        int label = test.labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= task_of_class.size())
            throw DataError("anytime_eval: test label outside class range");
        int task = task_of_class[static_cast<std::size_t>(label)];
        if (task < 0 || task >= task_count)
            throw DataError("anytime_eval: class maps to an invalid task");
        if (task > current_task) continue;  // not reached; consumes no randomness
        RngState sample_rng = eval_rng.substream("sample", i);
        auto [p_bar, branch_ps] = predict_ensemble(model, bsc, test.input(i), sample_rng);
        ++total[static_cast<std::size_t>(task)];
        if (static_cast<int>(argmax(p_bar)) == label) ++correct[static_cast<std::size_t>(task)];
    }
    std::vector<double> acc(static_cast<std::size_t>(task_count), kNaN);
    for (int k = 0; k <= current_task && k < task_count; ++k) {
        std::size_t ks = static_cast<std::size_t>(k);
        if (total[ks] > 0)
            acc[ks] = 100.0 * static_cast<double>(correct[ks]) / static_cast<double>(total[ks]);
    }
    return acc;
}

RunResult run_experiment(const ExperimentConfig& raw_cfg, const Dataset& train, const Dataset& test,
                         const StreamSchedule& schedule) {
    auto t_start = std::chrono::steady_clock::now();
    ExperimentConfig cfg = effective_settings(raw_cfg);
    validate_config(cfg);

    const std::size_t num_classes = train.num_classes;
    if (test.num_classes != num_classes)
        throw DataError("run_experiment: train and test class counts differ");
    if (train.dim() != test.dim())
        throw DataError("run_experiment: train and test feature widths differ");
    if (schedule.task_of_class.size() != num_classes)
        throw DataError("run_experiment: schedule does not match the class count");
    const int K = schedule.task_count;

    RngState root(cfg.seed);
    RunResult result;
    result.settings = cfg;
    result.num_classes = num_classes;
    result.feature_mean = train.feature_mean;
    result.feature_std = train.feature_std;
    result.model.encoder =
        MlpEncoder(train.dim(), cfg.model.hidden, cfg.model.feature_dim, root.substream("init-encoder"));
    result.model.heads = BranchedHeads(cfg.bsc.num_heads, cfg.model.feature_dim, num_classes,
                                       root.substream("init-heads"));
    MlpModel& model = result.model;

    AdamConfig adam_cfg{cfg.train.adam_beta1, cfg.train.adam_beta2, cfg.train.adam_eps};
    result.adam = AdamState(parameters(model), adam_cfg, cfg.train.lr);
    result.tracker = ClassLossTracker(cfg.pfi.ema_coeff);
    result.bsc = BscState(cfg.bsc, num_classes);
    result.memory = ReplayMemory(cfg.memory.capacity, num_classes);
    result.lr = LrState(cfg.train.lr, cfg.pima.omega, parse_lr_mode(cfg.pima.lr_mode));
    StreamBuffer buffer(cfg.train.batch_size / 2);

    const bool mi_policy = cfg.memory.policy == "mi";
    const bool track_information = mi_policy || result.lr.mode() != LrMode::Off;

    MetricsLog& log = result.log;
    log.task_count = K;
    log.acc_matrix.assign(static_cast<std::size_t>(K), {});
    long iteration = 0;
    std::uint64_t eval_ordinal = 0;

    for (std::size_t s = 0; s < schedule.order.size(); ++s) {
        const auto [sample_index, task_id] = schedule.order[s];
        Tensor x = train.input(sample_index);
        const int y = train.labels[sample_index];
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw DataError("run_experiment: train label outside class range");
        buffer.push(x, y);

        // Information score of the arriving sample under the pre-update
        // model; it is the candidate's score when it competes for a slot.
        double arrival_info = 0.0;
        if (mi_policy) {
            RngState ar = root.substream("mi-arrival", s);
            auto [p_bar, branch_ps] = predict_ensemble(model, result.bsc, x, ar);
            arrival_info = mutual_information(p_bar, branch_ps);
        }

        for (int u = 0; u < cfg.train.updates_per_sample; ++u) {
            ++iteration;
            result.adam.set_learning_rate(result.lr.rate());

            RngState br = root.substream("batch", static_cast<std::uint64_t>(iteration));
            std::vector<BatchSample> batch =
                draw_training_batch(result.memory, buffer, cfg.train.batch_size, br);

            RngState pr = root.substream("pfi", static_cast<std::uint64_t>(iteration));
            ForwardTape tape =
                pfi_batch(model, batch, cfg.pfi, result.tracker, num_classes, pr, iteration);

            double loss = batch_loss(tape);
            if (!std::isfinite(loss))
                throw NumericError("training loss is not finite at iteration " +
                                   std::to_string(iteration));
            ModelGrads grads = backward(model, tape);
            auto params = parameters(model);
            result.adam.step(params, grads);

            // Per-class loss average, attributed to each slot's dominant label.
            for (std::size_t k = 0; k < batch.size(); ++k) {
                int dominant = tape.zeta[k] >= 0.5 ? batch[k].label
                                                   : batch[tape.partner[k]].label;
                double slot_loss = 0.0;
                for (const Tensor& logits : tape.head_logits[k])
                    slot_loss += soft_cross_entropy(logits, one_hot(dominant, num_classes));
                slot_loss /= static_cast<double>(tape.head_logits[k].size());
                result.tracker.update(dominant, slot_loss);
            }

            // Snapshot machinery: classes trained for the first time register
            // now (their initial snapshot), then periodic snapshots fire.
            std::set<int> batch_labels;
            for (const BatchSample& b : batch) batch_labels.insert(b.label);
            bool any_mean_updated = false;
            for (int c : batch_labels) {
                if (!result.bsc.class_registered(c)) {
                    result.bsc.register_class(c, iteration, model.heads);
                    any_mean_updated = true;
                }
            }
            any_mean_updated |= result.bsc.take_due_snapshots(iteration, model.heads);

            // Refresh the information history of every replayed member under
            // the just-updated model.
            if (track_information) {
                RngState mr = root.substream("mi-train", static_cast<std::uint64_t>(iteration));
                for (std::size_t k = 0; k < batch.size(); ++k) {
                    if (batch[k].memory_slot < 0) continue;
                    std::size_t slot = static_cast<std::size_t>(batch[k].memory_slot);
                    RngState sr = mr.substream("slot", k);
                    auto [p_bar, branch_ps] =
                        predict_ensemble(model, result.bsc, result.memory.entry(slot).x, sr);
                    result.memory.update_history(slot, mutual_information(p_bar, branch_ps),
                                                 cfg.pima.gamma);
                }
            }

            result.lr.adapt(result.memory, any_mean_updated);
        }

        if (mi_policy) {
            result.memory.insert_by_information(x, y, arrival_info, iteration);
        } else if (cfg.memory.policy == "reservoir") {
            RngState rr = root.substream("reservoir", s);
            result.memory.insert_reservoir(x, y, iteration, s, rr);
        }

        // Evaluation cadence plus every task boundary (several boundaries can
        // coincide when a task holds no samples).
        std::vector<int> ending;
        for (int k = 0; k < K; ++k)
            if (schedule.task_end[static_cast<std::size_t>(k)] == s + 1 &&
                log.acc_matrix[static_cast<std::size_t>(k)].empty())
                ending.push_back(k);
        const bool periodic = (s + 1) % cfg.eval.every == 0;
        if (!ending.empty() || periodic) {
            int current = task_id;
            for (int k : ending) current = std::max(current, k);
            RngState er = root.substream("eval", eval_ordinal++);
            std::vector<double> acc =
                anytime_eval(model, result.bsc, test, schedule.task_of_class, current, K, er);
            EvalRow row;
            row.iteration = iteration;
            row.task_id = task_id;
            row.task_acc = acc;
            row.avg_acc = mean_of_finite(acc, static_cast<std::size_t>(current) + 1);
            row.lr = result.lr.rate();
            row.mem_size = result.memory.size();
            row.mean_history = result.memory.mean_history();
            log.rows.push_back(std::move(row));
            for (int k : ending) log.acc_matrix[static_cast<std::size_t>(k)] = acc;
        }
    }

    log.total_iterations = iteration;
    result.iterations = iteration;
    for (int k = 0; k < K; ++k)
        if (log.acc_matrix[static_cast<std::size_t>(k)].empty())
            throw DataError("run_experiment: schedule never closed task " + std::to_string(k));
    log.final_avg_acc = compute_acc(log.acc_matrix, static_cast<std::size_t>(K - 1));
    log.final_forgetting = K >= 2 ? compute_fm(log.acc_matrix, static_cast<std::size_t>(K - 1)) : kNaN;

    auto t_end = std::chrono::steady_clock::now();
    result.wall_time_seconds = std::chrono::duration<double>(t_end - t_start).count();
    return result;
}

std::vector<LandscapePoint> weight_landscape_probe(const MlpModel& model, const Dataset& data,
                                                   std::uint64_t direction_seed, int points,
                                                   double range) {
    if (points < 1) throw std::invalid_argument("weight_landscape_probe: need at least one point");
    if (!(range > 0.0)) throw std::invalid_argument("weight_landscape_probe: range must be positive");
    if (data.size() == 0) throw DataError("weight_landscape_probe: empty dataset");

    const std::size_t num_heads = model.heads.count();
    RngState rng = RngState(direction_seed).substream("landscape");
    std::vector<Tensor> dir_w(num_heads), dir_b(num_heads);
    double dir_sq = 0.0, weight_sq = 0.0;
    for (std::size_t n = 0; n < num_heads; ++n) {
        const LinearHead& head = model.heads.heads()[n];
        dir_w[n] = sample_gaussian(rng, head.w.shape());
        dir_b[n] = sample_gaussian(rng, head.b.shape());
        for (std::size_t i = 0; i < dir_w[n].size(); ++i) dir_sq += dir_w[n][i] * dir_w[n][i];
        for (std::size_t i = 0; i < dir_b[n].size(); ++i) dir_sq += dir_b[n][i] * dir_b[n][i];
        for (std::size_t i = 0; i < head.w.size(); ++i) weight_sq += head.w[i] * head.w[i];
        for (std::size_t i = 0; i < head.b.size(); ++i) weight_sq += head.b[i] * head.b[i];
    }
    if (weight_sq == 0.0)
        throw NumericError("weight_landscape_probe: classifier weights have zero norm");
    const double dir_norm = std::sqrt(dir_sq);
    const double scale = dir_norm == 0.0 ? 0.0 : std::sqrt(weight_sq) / dir_norm;

    auto loss_at = [&](const BranchedHeads& heads) {
        double total = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            Tensor feature = model.encoder.forward(data.input(i));
            Tensor target = one_hot(data.labels[i], heads.classes());
            double sample_loss = 0.0;
            for (std::size_t n = 0; n < heads.count(); ++n)
                sample_loss += soft_cross_entropy(heads.logits(n, feature), target);
            total += sample_loss / static_cast<double>(heads.count());
        }
        return total / static_cast<double>(data.size());
    };

    std::vector<LandscapePoint> out;
    for (int p = 0; p < points; ++p) {
        double s = points == 1
                       ? 0.0
                       : -range + 2.0 * range * static_cast<double>(p) / static_cast<double>(points - 1);
        if (p * 2 == points - 1) s = 0.0;  // exact center for odd grids
        if (s == 0.0) {
            out.push_back({0.0, loss_at(model.heads)});
            continue;
        }
        BranchedHeads shifted = model.heads;
        for (std::size_t n = 0; n < num_heads; ++n) {
            LinearHead& head = shifted.heads()[n];
            for (std::size_t i = 0; i < head.w.size(); ++i) head.w[i] += s * scale * dir_w[n][i];
            for (std::size_t i = 0; i < head.b.size(); ++i) head.b[i] += s * scale * dir_b[n][i];
        }
        out.push_back({s, loss_at(shifted)});
    }
    return out;
}

void emit_results(const RunResult& result, const std::string& out_dir) {
    const MetricsLog& log = result.log;
    const std::string metrics_path = out_dir + "/metrics.csv";
    std::ofstream csv(metrics_path);
    if (!csv) throw DataError("cannot write " + metrics_path);
    csv << "iteration,task_id";
    for (int k = 0; k < log.task_count; ++k) csv << ",acc_task_" << k;
    csv << ",avg_acc,lr,mem_size,mean_history\n";
    for (const EvalRow& row : log.rows) {
        csv << row.iteration << "," << row.task_id;
        for (int k = 0; k < log.task_count; ++k)
            csv << "," << fixed4(row.task_acc[static_cast<std::size_t>(k)]);
        csv << "," << fixed4(row.avg_acc) << "," << general10(row.lr) << "," << row.mem_size << ","
            << general10(row.mean_history) << "\n";
    }
    csv.close();

    nlohmann::json summary;
    summary["method"] = result.settings.method;
    summary["seed"] = result.settings.seed;
    summary["task_count"] = log.task_count;
    summary["iterations"] = log.total_iterations;
    summary["final_avg_acc"] = log.final_avg_acc;
    summary["final_forgetting"] = log.final_forgetting;
    summary["acc_matrix"] = log.acc_matrix;
    summary["memory_size"] = result.memory.size();
    std::vector<std::size_t> mem_hist;
    for (std::size_t c = 0; c < result.memory.num_classes(); ++c)
        mem_hist.push_back(result.memory.class_count(static_cast<int>(c)));
    summary["memory_class_counts"] = mem_hist;
    summary["wall_time_seconds"] = result.wall_time_seconds;
    nlohmann::json cfg_echo;
    for (const auto& [key, value] : config_to_map(result.settings)) cfg_echo[key] = value;
    summary["config"] = cfg_echo;
    const std::string summary_path = out_dir + "/summary.json";
    std::ofstream js(summary_path);
    if (!js) throw DataError("cannot write " + summary_path);
    js << summary.dump(2) << "\n";
}

}  // namespace dpcl
