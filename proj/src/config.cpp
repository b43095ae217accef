#include "dpcl/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "dpcl/errors.hpp"

namespace dpcl {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

long long parse_int(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(value, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != value.size()) throw ConfigError(key + ": expected an integer, got '" + value + "'");
    return v;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    long long v = parse_int(key, value);
    if (v < 0) throw ConfigError(key + ": expected a nonnegative integer, got '" + value + "'");
    return static_cast<std::size_t>(v);
}

double parse_real(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != value.size()) throw ConfigError(key + ": expected a number, got '" + value + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + value + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    std::stringstream ss(value);
    std::string field;
    while (std::getline(ss, field, ',')) {
        field = trim(field);
        if (field.empty()) throw ConfigError(key + ": empty list entry");
        out.push_back(parse_size(key, field));
    }
    if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
    return out;
}

std::string format_real(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ",";
        os << v[i];
    }
    return os.str();
}

}  // namespace

LrMode parse_lr_mode(const std::string& name) {
    if (name == "main_text" || name == "main") return LrMode::MainText;
    if (name == "appendix") return LrMode::Appendix;
    if (name == "off") return LrMode::Off;
    throw ConfigError("pima.lr_mode: expected main_text, appendix or off, got '" + name + "'");
}

StreamSetup parse_stream_setup(const std::string& name) {
    if (name == "disjoint") return StreamSetup::Disjoint;
    if (name == "blurry") return StreamSetup::Blurry;
    if (name == "iblurry") return StreamSetup::IBlurry;
    throw ConfigError("stream.setup: expected disjoint, blurry or iblurry, got '" + name + "'");
}

std::string stream_setup_name(StreamSetup setup) {
    switch (setup) {
        case StreamSetup::Disjoint: return "disjoint";
        case StreamSetup::Blurry: return "blurry";
        case StreamSetup::IBlurry: return "iblurry";
    }
    return "disjoint";
}

void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "method") {
        if (value != "dpcl" && value != "er" && value != "finetune")
            throw ConfigError("method: expected dpcl, er or finetune, got '" + value + "'");
        cfg.method = value;
    } else if (key == "seed") {
        long long v = parse_int(key, value);
        if (v < 0) throw ConfigError("seed: must be nonnegative");
        cfg.seed = static_cast<std::uint64_t>(v);
    } else if (key == "out") {
        cfg.out_dir = value;
    } else if (key == "dataset.kind") {
        if (value != "synthetic" && value != "csv" && value != "binary")
            throw ConfigError("dataset.kind: expected synthetic, csv or binary, got '" + value + "'");
        cfg.dataset.kind = value;
    } else if (key == "dataset.classes") {
        cfg.dataset.classes = parse_size(key, value);
    } else if (key == "dataset.dims") {
        cfg.dataset.dims = parse_size(key, value);
    } else if (key == "dataset.per_class") {
        cfg.dataset.per_class = parse_size(key, value);
    } else if (key == "dataset.test_per_class") {
        cfg.dataset.test_per_class = parse_size(key, value);
    } else if (key == "dataset.spread") {
        cfg.dataset.spread = parse_real(key, value);
    } else if (key == "dataset.train_path") {
        cfg.dataset.train_path = value;
    } else if (key == "dataset.test_path") {
        cfg.dataset.test_path = value;
    } else if (key == "dataset.has_header") {
        cfg.dataset.has_header = parse_bool(key, value);
    } else if (key == "dataset.declared_classes") {
        cfg.dataset.declared_classes = parse_size(key, value);
    } else if (key == "stream.setup") {
        cfg.stream.setup = parse_stream_setup(value);
    } else if (key == "stream.tasks") {
        cfg.stream.tasks = static_cast<int>(parse_int(key, value));
    } else if (key == "stream.disjoint_fraction") {
        cfg.stream.disjoint_fraction = parse_real(key, value);
    } else if (key == "stream.minor_fraction") {
        cfg.stream.minor_fraction = parse_real(key, value);
    } else if (key == "model.hidden") {
        cfg.model.hidden = parse_size_list(key, value);
    } else if (key == "model.feature_dim") {
        cfg.model.feature_dim = parse_size(key, value);
    } else if (key == "train.batch_size") {
        cfg.train.batch_size = parse_size(key, value);
    } else if (key == "train.updates_per_sample") {
        cfg.train.updates_per_sample = static_cast<int>(parse_int(key, value));
    } else if (key == "train.lr") {
        cfg.train.lr = parse_real(key, value);
    } else if (key == "train.adam_beta1") {
        cfg.train.adam_beta1 = parse_real(key, value);
    } else if (key == "train.adam_beta2") {
        cfg.train.adam_beta2 = parse_real(key, value);
    } else if (key == "train.adam_eps") {
        cfg.train.adam_eps = parse_real(key, value);
    } else if (key == "pfi.sigma_m") {
        cfg.pfi.sigma_m = parse_real(key, value);
    } else if (key == "pfi.sigma_a") {
        cfg.pfi.sigma_a = parse_real(key, value);
    } else if (key == "pfi.alpha") {
        cfg.pfi.alpha = parse_real(key, value);
    } else if (key == "pfi.beta") {
        cfg.pfi.beta = parse_real(key, value);
    } else if (key == "pfi.ema_coeff") {
        cfg.pfi.ema_coeff = parse_real(key, value);
    } else if (key == "pfi.per_sample_zeta") {
        cfg.pfi.per_sample_zeta = parse_bool(key, value);
    } else if (key == "pfi.force_zeta") {
        cfg.pfi.force_zeta = parse_real(key, value);
    } else if (key == "bsc.num_heads") {
        cfg.bsc.num_heads = parse_size(key, value);
    } else if (key == "bsc.period_p") {
        cfg.bsc.period = parse_int(key, value);
    } else if (key == "bsc.rank_a") {
        cfg.bsc.rank = parse_size(key, value);
    } else if (key == "bsc.num_mc_samples_r") {
        cfg.bsc.mc_samples = parse_size(key, value);
    } else if (key == "bsc.enabled") {
        cfg.bsc.enabled = parse_bool(key, value);
    } else if (key == "pima.gamma") {
        cfg.pima.gamma = parse_real(key, value);
    } else if (key == "pima.omega") {
        cfg.pima.omega = parse_real(key, value);
    } else if (key == "pima.lr_mode") {
        parse_lr_mode(value);  // validates
        cfg.pima.lr_mode = value;
    } else if (key == "memory.capacity") {
        cfg.memory.capacity = parse_size(key, value);
    } else if (key == "memory.policy") {
        if (value != "mi" && value != "reservoir" && value != "none")
            throw ConfigError("memory.policy: expected mi, reservoir or none, got '" + value + "'");
        cfg.memory.policy = value;
    } else if (key == "eval.every") {
        cfg.eval.every = parse_size(key, value);
    } else {
        throw ConfigError("unknown config key: '" + key + "'");
    }
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    ExperimentConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ": line " + std::to_string(line_no) +
                              ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(path + ": line " + std::to_string(line_no) + ": empty key");
        apply_config_entry(cfg, key, value);
    }
    validate_config(cfg);
    return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.dataset.kind == "synthetic") {
        if (cfg.dataset.classes == 0 || cfg.dataset.dims == 0 || cfg.dataset.per_class == 0 ||
            cfg.dataset.test_per_class == 0)
            throw ConfigError("dataset: classes, dims, per_class and test_per_class must be positive");
        if (!(cfg.dataset.spread >= 0.0)) throw ConfigError("dataset.spread: must be nonnegative");
    } else {
        if (cfg.dataset.train_path.empty())
            throw ConfigError("dataset.train_path: required for file-backed datasets");
        if (cfg.dataset.test_path.empty())
            throw ConfigError("dataset.test_path: required for file-backed datasets");
    }
    if (cfg.stream.tasks < 1) throw ConfigError("stream.tasks: must be at least 1");
    if (cfg.stream.disjoint_fraction < 0.0 || cfg.stream.disjoint_fraction > 1.0)
        throw ConfigError("stream.disjoint_fraction: must be in [0, 1]");
    if (cfg.stream.minor_fraction < 0.0 || cfg.stream.minor_fraction >= 1.0)
        throw ConfigError("stream.minor_fraction: must be in [0, 1)");
    if (cfg.model.feature_dim == 0) throw ConfigError("model.feature_dim: must be positive");
    for (std::size_t h : cfg.model.hidden)
        if (h == 0) throw ConfigError("model.hidden: layer widths must be positive");
    if (cfg.train.batch_size == 0 || cfg.train.batch_size % 2 != 0)
        throw ConfigError("train.batch_size: must be a positive even number");
    if (cfg.train.updates_per_sample < 1)
        throw ConfigError("train.updates_per_sample: must be at least 1");
    if (!(cfg.train.lr > 0.0)) throw ConfigError("train.lr: must be positive");
    if (cfg.train.adam_beta1 < 0.0 || cfg.train.adam_beta1 >= 1.0)
        throw ConfigError("train.adam_beta1: must be in [0, 1)");
    if (cfg.train.adam_beta2 < 0.0 || cfg.train.adam_beta2 >= 1.0)
        throw ConfigError("train.adam_beta2: must be in [0, 1)");
    if (!(cfg.train.adam_eps > 0.0)) throw ConfigError("train.adam_eps: must be positive");
    if (cfg.pfi.sigma_m < 0.0 || cfg.pfi.sigma_a < 0.0)
        throw ConfigError("pfi.sigma_m/sigma_a: must be nonnegative");
    if (!(cfg.pfi.alpha > 0.0) || !(cfg.pfi.beta > 0.0))
        throw ConfigError("pfi.alpha/beta: must be positive");
    if (!(cfg.pfi.ema_coeff > 0.0) || cfg.pfi.ema_coeff > 1.0)
        throw ConfigError("pfi.ema_coeff: must be in (0, 1]");
    if (cfg.pfi.force_zeta >= 0.0 && cfg.pfi.force_zeta > 1.0)
        throw ConfigError("pfi.force_zeta: must be in [0, 1] or negative to disable");
    if (cfg.bsc.num_heads < 1) throw ConfigError("bsc.num_heads: must be at least 1");
    if (cfg.bsc.period < 1) throw ConfigError("bsc.period_p: must be at least 1");
    if (cfg.bsc.rank < 2) throw ConfigError("bsc.rank_a: must be at least 2");
    if (cfg.bsc.mc_samples < 1) throw ConfigError("bsc.num_mc_samples_r: must be at least 1");
    if (!(cfg.pima.gamma > 0.0) || cfg.pima.gamma > 1.0)
        throw ConfigError("pima.gamma: must be in (0, 1]");
    LrMode mode = parse_lr_mode(cfg.pima.lr_mode);
    if (mode == LrMode::MainText && !(cfg.pima.omega > 1.0))
        throw ConfigError("pima.omega: must exceed 1 in main_text mode");
    if (mode == LrMode::Appendix && !(cfg.pima.omega > 0.0 && cfg.pima.omega < 1.0))
        throw ConfigError("pima.omega: must be in (0, 1) in appendix mode");
    if (cfg.memory.policy != "none" && cfg.memory.capacity == 0)
        throw ConfigError("memory.capacity: must be positive unless the policy is none");
    if (cfg.eval.every < 1) throw ConfigError("eval.every: must be at least 1");
}

std::map<std::string, std::string> config_to_map(const ExperimentConfig& cfg) {
    std::map<std::string, std::string> m;
    m["method"] = cfg.method;
    m["seed"] = std::to_string(cfg.seed);
    m["out"] = cfg.out_dir;
    m["dataset.kind"] = cfg.dataset.kind;
    m["dataset.classes"] = std::to_string(cfg.dataset.classes);
    m["dataset.dims"] = std::to_string(cfg.dataset.dims);
    m["dataset.per_class"] = std::to_string(cfg.dataset.per_class);
    m["dataset.test_per_class"] = std::to_string(cfg.dataset.test_per_class);
    m["dataset.spread"] = format_real(cfg.dataset.spread);
    m["dataset.train_path"] = cfg.dataset.train_path;
    m["dataset.test_path"] = cfg.dataset.test_path;
    m["dataset.has_header"] = cfg.dataset.has_header ? "true" : "false";
    m["dataset.declared_classes"] = std::to_string(cfg.dataset.declared_classes);
    m["stream.setup"] = stream_setup_name(cfg.stream.setup);
    m["stream.tasks"] = std::to_string(cfg.stream.tasks);
    m["stream.disjoint_fraction"] = format_real(cfg.stream.disjoint_fraction);
    m["stream.minor_fraction"] = format_real(cfg.stream.minor_fraction);
    m["model.hidden"] = join_sizes(cfg.model.hidden);
    m["model.feature_dim"] = std::to_string(cfg.model.feature_dim);
    m["train.batch_size"] = std::to_string(cfg.train.batch_size);
    m["train.updates_per_sample"] = std::to_string(cfg.train.updates_per_sample);
    m["train.lr"] = format_real(cfg.train.lr);
    m["train.adam_beta1"] = format_real(cfg.train.adam_beta1);
    m["train.adam_beta2"] = format_real(cfg.train.adam_beta2);
    m["train.adam_eps"] = format_real(cfg.train.adam_eps);
    m["pfi.sigma_m"] = format_real(cfg.pfi.sigma_m);
    m["pfi.sigma_a"] = format_real(cfg.pfi.sigma_a);
    m["pfi.alpha"] = format_real(cfg.pfi.alpha);
    m["pfi.beta"] = format_real(cfg.pfi.beta);
    m["pfi.ema_coeff"] = format_real(cfg.pfi.ema_coeff);
    m["pfi.per_sample_zeta"] = cfg.pfi.per_sample_zeta ? "true" : "false";
    m["pfi.force_zeta"] = format_real(cfg.pfi.force_zeta);
    m["bsc.num_heads"] = std::to_string(cfg.bsc.num_heads);
    m["bsc.period_p"] = std::to_string(cfg.bsc.period);
    m["bsc.rank_a"] = std::to_string(cfg.bsc.rank);
    m["bsc.num_mc_samples_r"] = std::to_string(cfg.bsc.mc_samples);
    m["bsc.enabled"] = cfg.bsc.enabled ? "true" : "false";
    m["pima.gamma"] = format_real(cfg.pima.gamma);
    m["pima.omega"] = format_real(cfg.pima.omega);
    m["pima.lr_mode"] = cfg.pima.lr_mode;
    m["memory.capacity"] = std::to_string(cfg.memory.capacity);
    m["memory.policy"] = cfg.memory.policy;
    m["eval.every"] = std::to_string(cfg.eval.every);
    return m;
}

}  // namespace dpcl
