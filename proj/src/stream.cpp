#include "dpcl/stream.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dpcl/errors.hpp"
#include "dpcl/rng.hpp"

namespace dpcl {

namespace {

using nlohmann::json;

void shuffle_indices(std::vector<std::size_t>& v, RngState rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.next_below(i)]);
}

std::vector<std::size_t> shuffled_classes(std::size_t count, RngState rng) {
    std::vector<std::size_t> cls(count);
    for (std::size_t i = 0; i < count; ++i) cls[i] = i;
    shuffle_indices(cls, rng);
    return cls;
}

// Shared standardization: zero mean, unit variance per column. Constant
// columns keep std 1 so the transform stays invertible.
void standardize(Dataset& ds, const std::vector<double>& mean, const std::vector<double>& stddev) {
    const std::size_t n = ds.size();
    const std::size_t d = ds.dim();
    if (mean.size() != d || stddev.size() != d)
        throw DataError("standardization statistics do not match feature width");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            ds.inputs.at(i, j) = (ds.inputs.at(i, j) - mean[j]) / stddev[j];
    ds.feature_mean = mean;
    ds.feature_std = stddev;
}

std::pair<std::vector<double>, std::vector<double>> column_stats(const Tensor& inputs) {
    const std::size_t n = inputs.rows();
    const std::size_t d = inputs.cols();
    std::vector<double> mean(d, 0.0), stddev(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += inputs.at(i, j);
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double dv = inputs.at(i, j) - mean[j];
            stddev[j] += dv * dv;
        }
    for (std::size_t j = 0; j < d; ++j) {
        stddev[j] = std::sqrt(stddev[j] / static_cast<double>(n));
        if (stddev[j] == 0.0) stddev[j] = 1.0;
    }
    return {std::move(mean), std::move(stddev)};
}

struct ParsedRows {
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t dim = 0;
};

ParsedRows parse_csv(const std::string& path, bool has_header, std::size_t declared_classes) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);
    ParsedRows rows;
    std::string line;
    std::size_t line_no = 0;
    bool skipped_header = !has_header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!skipped_header) {
            skipped_header = true;
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() < 2)
            throw DataError(path + ": line " + std::to_string(line_no) +
                            ": expected label and at least one feature");
        std::size_t pos = 0;
        int label = 0;
        try {
            label = std::stoi(fields[0], &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != fields[0].size() || label < 0)
            throw DataError(path + ": line " + std::to_string(line_no) +
                            ": label must be a nonnegative integer");
        if (declared_classes > 0 && static_cast<std::size_t>(label) >= declared_classes)
            throw DataError(path + ": line " + std::to_string(line_no) + ": label " +
                            std::to_string(label) + " outside declared class range " +
                            std::to_string(declared_classes));
        std::size_t d = fields.size() - 1;
        if (rows.dim == 0)
            rows.dim = d;
        else if (d != rows.dim)
            throw DataError(path + ": line " + std::to_string(line_no) +
                            ": inconsistent feature count");
        for (std::size_t j = 1; j < fields.size(); ++j) {
            try {
                rows.values.push_back(std::stod(fields[j], &pos));
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos != fields[j].size())
                throw DataError(path + ": line " + std::to_string(line_no) +
                                ": malformed feature value");
        }
        rows.labels.push_back(label);
    }
    if (rows.labels.empty()) throw DataError(path + ": empty dataset");
    return rows;
}

Dataset dataset_from_rows(ParsedRows rows, std::size_t declared_classes, std::string split) {
    Dataset ds;
    std::size_t n = rows.labels.size();
    ds.inputs = Tensor({n, rows.dim}, std::move(rows.values));
    ds.labels = std::move(rows.labels);
    int max_label = 0;
    for (int l : ds.labels) max_label = std::max(max_label, l);
    ds.num_classes = declared_classes > 0 ? declared_classes
                                          : static_cast<std::size_t>(max_label) + 1;
    ds.split = std::move(split);
    return ds;
}

}  // namespace

Tensor Dataset::input(std::size_t i) const {
    const std::size_t d = dim();
    Tensor out({d});
    for (std::size_t j = 0; j < d; ++j) out[j] = inputs.at(i, j);
    return out;
}

Dataset make_synthetic(std::size_t classes, std::size_t dims, std::size_t per_class, double spread,
                       std::uint64_t seed, std::string_view split) {
    if (classes == 0 || dims == 0 || per_class == 0)
        throw ConfigError("make_synthetic: classes, dims and per_class must be positive");
    if (!(spread >= 0.0)) throw ConfigError("make_synthetic: spread must be nonnegative");

    RngState root(seed);
    Dataset ds;
    ds.num_classes = classes;
    ds.split = std::string(split);
    ds.inputs = Tensor({classes * per_class, dims});
    ds.labels.resize(classes * per_class);

    for (std::size_t c = 0; c < classes; ++c) {
        // Class mean: normalized Gaussian direction, shared across splits.
        RngState mr = root.substream("blob-means", c);
        std::vector<double> mean(dims);
        double norm = 0.0;
        for (std::size_t j = 0; j < dims; ++j) {
            mean[j] = mr.next_gaussian();
            norm += mean[j] * mean[j];
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) norm = 1.0;
        for (std::size_t j = 0; j < dims; ++j) mean[j] /= norm;

        RngState cr = root.substream("blob-noise").substream(split).substream("class", c);
        for (std::size_t i = 0; i < per_class; ++i) {
            std::size_t row = c * per_class + i;
            ds.labels[row] = static_cast<int>(c);
            for (std::size_t j = 0; j < dims; ++j)
                ds.inputs.at(row, j) = mean[j] + spread * cr.next_gaussian();
        }
    }
    return ds;
}

StreamSchedule build_schedule(const Dataset& data, const StreamConfig& cfg) {
    if (data.size() == 0) throw DataError("build_schedule: empty dataset");
    if (cfg.task_count < 1) throw ConfigError("build_schedule: need at least one task");
    const std::size_t C = data.num_classes;
    const std::size_t K = static_cast<std::size_t>(cfg.task_count);
    if (cfg.minor_fraction < 0.0 || cfg.minor_fraction >= 1.0)
        throw ConfigError("build_schedule: minor fraction must be in [0, 1)");
    if (cfg.disjoint_fraction < 0.0 || cfg.disjoint_fraction > 1.0)
        throw ConfigError("build_schedule: disjoint fraction must be in [0, 1]");

    std::vector<std::vector<std::size_t>> by_class(C);
    for (std::size_t i = 0; i < data.size(); ++i) {
        int l = data.labels[i];
        if (l < 0 || static_cast<std::size_t>(l) >= C)
            throw DataError("build_schedule: label outside class range");
        by_class[static_cast<std::size_t>(l)].push_back(i);
    }

    RngState root(cfg.seed);
    // home_task: the task evaluated as "owning" the class. minor routing only
    // applies to shared (non-disjoint) classes.
    std::vector<int> home_task(C, -1);
    std::vector<bool> is_disjoint(C, false);

    if (cfg.setup == StreamSetup::Disjoint) {
        if (C % K != 0)
            throw ConfigError("build_schedule: infeasible partition, classes not divisible by tasks");
        std::size_t per_task = C / K;
        for (std::size_t c = 0; c < C; ++c) {
            home_task[c] = static_cast<int>(c / per_task);
            is_disjoint[c] = true;
        }
    } else if (cfg.setup == StreamSetup::Blurry) {
        if (C < K)
            throw ConfigError("build_schedule: infeasible partition, fewer classes than tasks");
        auto order = shuffled_classes(C, root.substream("class-order"));
        for (std::size_t pos = 0; pos < order.size(); ++pos)
            home_task[order[pos]] = static_cast<int>(pos % K);
    } else {
        auto order = shuffled_classes(C, root.substream("class-split"));
        std::size_t n_disjoint =
            static_cast<std::size_t>(std::llround(cfg.disjoint_fraction * static_cast<double>(C)));
        if (n_disjoint % K != 0)
            throw ConfigError(
                "build_schedule: infeasible partition, disjoint classes not divisible by tasks");
        std::size_t per_task = n_disjoint / K;
        for (std::size_t pos = 0; pos < n_disjoint; ++pos) {
            home_task[order[pos]] = per_task == 0 ? -1 : static_cast<int>(pos / per_task);
            is_disjoint[order[pos]] = true;
        }
        for (std::size_t pos = n_disjoint; pos < C; ++pos)
            home_task[order[pos]] = static_cast<int>((pos - n_disjoint) % K);
    }

    std::vector<std::vector<std::size_t>> task_samples(K);
    for (std::size_t c = 0; c < C; ++c) {
        auto samples = by_class[c];
        if (samples.empty()) continue;
        int home = home_task[c];
        if (home < 0) throw ConfigError("build_schedule: infeasible partition");
        if (is_disjoint[c] || K == 1) {
            auto& dst = task_samples[static_cast<std::size_t>(home)];
            dst.insert(dst.end(), samples.begin(), samples.end());
            continue;
        }
        // Shared class: a minor share is spread evenly over the other tasks.
        shuffle_indices(samples, root.substream("class-samples", c));
        std::size_t minor =
            static_cast<std::size_t>(std::llround(cfg.minor_fraction * static_cast<double>(samples.size())));
        std::size_t major_n = samples.size() - minor;
        auto& dst = task_samples[static_cast<std::size_t>(home)];
        dst.insert(dst.end(), samples.begin(), samples.begin() + major_n);
        std::size_t others = K - 1;
        std::size_t base = minor / others;
        std::size_t rem = minor % others;
        std::size_t offset = major_n;
        std::size_t rank = 0;
        for (std::size_t k = 0; k < K; ++k) {
            if (static_cast<int>(k) == home) continue;
            std::size_t take = base + (rank < rem ? 1 : 0);
            ++rank;
            task_samples[k].insert(task_samples[k].end(), samples.begin() + offset,
                                   samples.begin() + offset + take);
            offset += take;
        }
    }

    for (std::size_t k = 0; k < K; ++k) {
        bool owns_class = false;
        for (std::size_t c = 0; c < C; ++c)
            if (home_task[c] == static_cast<int>(k)) owns_class = true;
        if (!owns_class) throw ConfigError("build_schedule: infeasible partition, task owns no class");
    }

    StreamSchedule schedule;
    schedule.task_count = static_cast<int>(K);
    schedule.task_of_class = home_task;
    for (std::size_t k = 0; k < K; ++k) {
        shuffle_indices(task_samples[k], root.substream("task-order", k));
        for (std::size_t idx : task_samples[k])
            schedule.order.emplace_back(idx, static_cast<int>(k));
        schedule.task_end.push_back(schedule.order.size());
    }
    return schedule;
}

Dataset load_csv_dataset(const std::string& path, bool has_header, std::size_t declared_classes) {
    Dataset ds = dataset_from_rows(parse_csv(path, has_header, declared_classes),
                                   declared_classes, "train");
    auto [mean, stddev] = column_stats(ds.inputs);
    standardize(ds, mean, stddev);
    return ds;
}

Dataset load_csv_dataset(const std::string& path, bool has_header,
                         const std::vector<double>& mean, const std::vector<double>& stddev,
                         std::size_t declared_classes) {
    Dataset ds = dataset_from_rows(parse_csv(path, has_header, declared_classes),
                                   declared_classes, "test");
    standardize(ds, mean, stddev);
    return ds;
}

namespace {

ParsedRows parse_binary(const std::string& bin_path, const std::string& sidecar_path,
                        std::size_t declared_classes, std::size_t& sidecar_classes) {
    std::ifstream side(sidecar_path);
    if (!side) throw DataError("cannot open sidecar file: " + sidecar_path);
    json meta;
    try {
        side >> meta;
    } catch (const json::exception& e) {
        throw DataError(sidecar_path + ": invalid sidecar: " + e.what());
    }
    if (!meta.contains("rows") || !meta.contains("cols") || !meta.contains("labels"))
        throw DataError(sidecar_path + ": sidecar needs rows, cols and labels");
    std::size_t n = meta["rows"].get<std::size_t>();
    std::size_t d = meta["cols"].get<std::size_t>();
    std::vector<int> labels = meta["labels"].get<std::vector<int>>();
    if (labels.size() != n) throw DataError(sidecar_path + ": label count does not match rows");

    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw DataError("cannot open dataset file: " + bin_path);
    std::vector<double> values(n * d);
    for (std::size_t i = 0; i < values.size(); ++i) {
        unsigned char bytes[8];
        if (!bin.read(reinterpret_cast<char*>(bytes), 8))
            throw DataError(bin_path + ": truncated matrix data");
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b) bits = (bits << 8) | bytes[b];  // little-endian
        double v;
        std::memcpy(&v, &bits, 8);
        values[i] = v;
    }

    ParsedRows rows;
    rows.values = std::move(values);
    rows.labels = std::move(labels);
    rows.dim = d;
    for (int l : rows.labels)
        if (l < 0 || (declared_classes > 0 && static_cast<std::size_t>(l) >= declared_classes))
            throw DataError(bin_path + ": label outside declared class range");
    sidecar_classes = meta.contains("classes") ? meta["classes"].get<std::size_t>() : 0;
    return rows;
}

}  // namespace

Dataset load_binary_dataset(const std::string& bin_path, const std::string& sidecar_path,
                            std::size_t declared_classes) {
    std::size_t sidecar_classes = 0;
    ParsedRows rows = parse_binary(bin_path, sidecar_path, declared_classes, sidecar_classes);
    if (declared_classes == 0) declared_classes = sidecar_classes;
    Dataset ds = dataset_from_rows(std::move(rows), declared_classes, "train");
    auto [mean, stddev] = column_stats(ds.inputs);
    standardize(ds, mean, stddev);
    return ds;
}

Dataset load_binary_dataset(const std::string& bin_path, const std::string& sidecar_path,
                            const std::vector<double>& mean, const std::vector<double>& stddev,
                            std::size_t declared_classes) {
    std::size_t sidecar_classes = 0;
    ParsedRows rows = parse_binary(bin_path, sidecar_path, declared_classes, sidecar_classes);
    if (declared_classes == 0) declared_classes = sidecar_classes;
    Dataset ds = dataset_from_rows(std::move(rows), declared_classes, "test");
    standardize(ds, mean, stddev);
    return ds;
}

void save_binary_dataset(const Dataset& raw, const std::string& bin_path,
                         const std::string& sidecar_path) {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw DataError("cannot write dataset file: " + bin_path);
    for (std::size_t i = 0; i < raw.inputs.size(); ++i) {
        double v = raw.inputs[i];
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        unsigned char bytes[8];
        for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
        bin.write(reinterpret_cast<const char*>(bytes), 8);
    }
    json meta;
    meta["rows"] = raw.inputs.rows();
    meta["cols"] = raw.inputs.cols();
    meta["labels"] = raw.labels;
    meta["classes"] = raw.num_classes;
    std::ofstream side(sidecar_path);
    if (!side) throw DataError("cannot write sidecar file: " + sidecar_path);
    side << meta.dump(2) << "\n";
}

void export_schedule_csv(const StreamSchedule& schedule, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write schedule file: " + path);
    out << "iteration,sample_index,task_id\n";
    for (std::size_t i = 0; i < schedule.order.size(); ++i)
        out << i << "," << schedule.order[i].first << "," << schedule.order[i].second << "\n";
}

}  // namespace dpcl
