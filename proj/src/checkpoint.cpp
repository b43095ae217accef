#include "dpcl/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "dpcl/config.hpp"
#include "dpcl/errors.hpp"

namespace dpcl {

namespace {

using nlohmann::json;

json tensor_to_json(const Tensor& t) {
    json j;
    j["shape"] = t.shape();
    j["data"] = t.values();
    return j;
}

Tensor tensor_from_json(const json& j) {
    return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                  j.at("data").get<std::vector<double>>());
}

json stats_to_json(const SwagNodeStats& stats) {
    if (stats.snapshots == 0) return nullptr;
    json j;
    j["snapshots"] = stats.snapshots;
    j["mean"] = tensor_to_json(stats.mean);
    j["sq_mean"] = tensor_to_json(stats.sq_mean);
    json devs = json::array();
    for (const Tensor& d : stats.deviations) devs.push_back(tensor_to_json(d));
    j["deviations"] = devs;
    return j;
}

SwagNodeStats stats_from_json(const json& j) {
    SwagNodeStats stats;
    stats.snapshots = j.at("snapshots").get<long>();
    stats.mean = tensor_from_json(j.at("mean"));
    stats.sq_mean = tensor_from_json(j.at("sq_mean"));
    for (const json& d : j.at("deviations")) stats.deviations.push_back(tensor_from_json(d));
    return stats;
}

std::string activation_name(Activation act) {
    return act == Activation::Relu ? "relu" : "identity";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "identity") return Activation::Identity;
    throw DataError("checkpoint: unknown activation '" + name + "'");
}

}  // namespace

void save_checkpoint(const std::string& path, const RunResult& result) {
    json j;
    j["format"] = "dpcl-checkpoint";
    j["version"] = 1;
    j["seed"] = result.settings.seed;
    j["method"] = result.settings.method;
    j["iteration"] = result.iterations;
    j["num_classes"] = result.num_classes;

    json encoder;
    encoder["input_dim"] = result.model.encoder.input_dim();
    json layers = json::array();
    for (const DenseLayer& layer : result.model.encoder.layers()) {
        json l;
        l["w"] = tensor_to_json(layer.w);
        l["b"] = tensor_to_json(layer.b);
        l["activation"] = activation_name(layer.act);
        layers.push_back(l);
    }
    encoder["layers"] = layers;
    j["encoder"] = encoder;

    json heads = json::array();
    for (const LinearHead& head : result.model.heads.heads()) {
        json h;
        h["w"] = tensor_to_json(head.w);
        h["b"] = tensor_to_json(head.b);
        heads.push_back(h);
    }
    j["heads"] = heads;

    json adam;
    adam["beta1"] = result.adam.config().beta1;
    adam["beta2"] = result.adam.config().beta2;
    adam["eps"] = result.adam.config().eps;
    adam["lr"] = result.adam.learning_rate();
    adam["step"] = result.adam.step_count();
    json m = json::array(), v = json::array();
    for (const Tensor& t : result.adam.first_moments()) m.push_back(tensor_to_json(t));
    for (const Tensor& t : result.adam.second_moments()) v.push_back(tensor_to_json(t));
    adam["m"] = m;
    adam["v"] = v;
    j["adam"] = adam;

    json bsc;
    const BscConfig& bc = result.bsc.config();
    bsc["heads"] = bc.num_heads;
    bsc["period"] = bc.period;
    bsc["rank"] = bc.rank;
    bsc["mc_samples"] = bc.mc_samples;
    bsc["enabled"] = bc.enabled;
    json first_seen = json::array();
    for (std::size_t c = 0; c < result.bsc.num_classes(); ++c)
        first_seen.push_back(result.bsc.first_seen(static_cast<int>(c)));
    bsc["first_seen"] = first_seen;
    json stats = json::array();
    for (std::size_t h = 0; h < bc.num_heads; ++h) {
        json per_class = json::array();
        for (std::size_t c = 0; c < result.bsc.num_classes(); ++c)
            per_class.push_back(stats_to_json(result.bsc.stats(h, static_cast<int>(c))));
        stats.push_back(per_class);
    }
    bsc["stats"] = stats;
    j["bsc"] = bsc;

    json tracker;
    tracker["ema_coeff"] = result.tracker.ema_coeff();
    json classes = json::array();
    for (const ClassLossTracker::Entry& e : result.tracker.entries()) {
        json ce;
        ce["label"] = e.label;
        ce["first_seen"] = e.first_seen;
        ce["avg_loss"] = e.avg_loss;
        ce["has_loss"] = e.has_loss;
        classes.push_back(ce);
    }
    tracker["classes"] = classes;
    j["tracker"] = tracker;

    json lr;
    lr["initial"] = result.settings.train.lr;
    lr["omega"] = result.lr.omega();
    lr["mode"] = result.settings.pima.lr_mode;
    lr["exponent"] = result.lr.exponent();
    lr["prev_mean"] = result.lr.previous_mean();
    j["lr"] = lr;

    if (result.feature_mean.empty()) {
        j["standardization"] = nullptr;
    } else {
        json st;
        st["mean"] = result.feature_mean;
        st["std"] = result.feature_std;
        j["standardization"] = st;
    }

    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint file: " + path);
    out << j.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(path + ": invalid checkpoint: " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "dpcl-checkpoint")
            throw DataError(path + ": not a checkpoint file");

        LoadedCheckpoint ck;
        ck.seed = j.at("seed").get<std::uint64_t>();
        ck.iteration = j.at("iteration").get<long>();
        ck.num_classes = j.at("num_classes").get<std::size_t>();

        const json& encoder = j.at("encoder");
        std::size_t input_dim = encoder.at("input_dim").get<std::size_t>();
        const json& layers = encoder.at("layers");
        if (layers.empty()) throw DataError(path + ": encoder has no layers");
        std::vector<std::size_t> hidden;
        for (std::size_t l = 0; l + 1 < layers.size(); ++l)
            hidden.push_back(layers[l].at("w").at("shape")[0].get<std::size_t>());
        std::size_t feature_dim = layers.back().at("w").at("shape")[0].get<std::size_t>();
        ck.model.encoder = MlpEncoder(input_dim, hidden, feature_dim, RngState(0));
        for (std::size_t l = 0; l < layers.size(); ++l) {
            DenseLayer& dst = ck.model.encoder.layers()[l];
            dst.w = tensor_from_json(layers[l].at("w"));
            dst.b = tensor_from_json(layers[l].at("b"));
            dst.act = activation_from_name(layers[l].at("activation").get<std::string>());
        }

        const json& heads = j.at("heads");
        if (heads.empty()) throw DataError(path + ": checkpoint has no classifier heads");
        std::size_t head_classes = heads[0].at("w").at("shape")[0].get<std::size_t>();
        ck.model.heads = BranchedHeads(heads.size(), feature_dim, head_classes, RngState(0));
        for (std::size_t n = 0; n < heads.size(); ++n) {
            LinearHead& dst = ck.model.heads.heads()[n];
            dst.w = tensor_from_json(heads[n].at("w"));
            dst.b = tensor_from_json(heads[n].at("b"));
        }

        const json& adam = j.at("adam");
        AdamConfig acfg{adam.at("beta1").get<double>(), adam.at("beta2").get<double>(),
                        adam.at("eps").get<double>()};
        ck.adam = AdamState(parameters(ck.model), acfg, adam.at("lr").get<double>());
        const json& m = adam.at("m");
        const json& v = adam.at("v");
        if (m.size() != ck.adam.first_moments().size() || v.size() != m.size())
            throw DataError(path + ": optimizer state does not match the model");
        for (std::size_t i = 0; i < m.size(); ++i) {
            ck.adam.first_moments()[i] = tensor_from_json(m[i]);
            ck.adam.second_moments()[i] = tensor_from_json(v[i]);
        }
        ck.adam.restore(adam.at("step").get<long>());

        const json& bsc = j.at("bsc");
        BscConfig bcfg;
        bcfg.num_heads = bsc.at("heads").get<std::size_t>();
        bcfg.period = bsc.at("period").get<long>();
        bcfg.rank = bsc.at("rank").get<std::size_t>();
        bcfg.mc_samples = bsc.at("mc_samples").get<std::size_t>();
        bcfg.enabled = bsc.at("enabled").get<bool>();
        ck.bsc = BscState(bcfg, ck.num_classes);
        const json& first_seen = bsc.at("first_seen");
        for (std::size_t c = 0; c < first_seen.size(); ++c) {
            long it = first_seen[c].get<long>();
            if (it >= 0) ck.bsc.restore_first_seen(static_cast<int>(c), it);
        }
        const json& stats = bsc.at("stats");
        for (std::size_t h = 0; h < stats.size(); ++h)
            for (std::size_t c = 0; c < stats[h].size(); ++c)
                if (!stats[h][c].is_null())
                    ck.bsc.stats_mut(h, static_cast<int>(c)) = stats_from_json(stats[h][c]);

        const json& tracker = j.at("tracker");
        ck.tracker = ClassLossTracker(tracker.at("ema_coeff").get<double>());
        for (const json& ce : tracker.at("classes")) {
            ClassLossTracker::Entry e;
            e.label = ce.at("label").get<int>();
            e.first_seen = ce.at("first_seen").get<long>();
            e.avg_loss = ce.at("avg_loss").get<double>();
            e.has_loss = ce.at("has_loss").get<bool>();
            ck.tracker.restore(e);
        }

        const json& lr = j.at("lr");
        ck.lr = LrState(lr.at("initial").get<double>(), lr.at("omega").get<double>(),
                        parse_lr_mode(lr.at("mode").get<std::string>()));
        ck.lr.restore(lr.at("exponent").get<long>(), lr.at("prev_mean").get<double>());

        if (!j.at("standardization").is_null()) {
            ck.feature_mean = j["standardization"].at("mean").get<std::vector<double>>();
            ck.feature_std = j["standardization"].at("std").get<std::vector<double>>();
        }
        return ck;
    } catch (const json::exception& e) {
        throw DataError(path + ": invalid checkpoint: " + e.what());
    }
}

}  // namespace dpcl
