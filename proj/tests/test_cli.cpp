#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dpcl/stream.hpp"

#ifdef _WIN32
#error "the CLI tests drive the binary through POSIX exit codes"
#endif
#include <sys/wait.h>

using namespace dpcl;

namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& leaf = "") {
    fs::path dir = fs::temp_directory_path() / "cli_tests";
    if (!leaf.empty()) dir /= leaf;
    fs::create_directories(dir);
    return dir;
}

std::string cli_path() {
    const char* p = std::getenv("DPCL_CLI_PATH");
    REQUIRE_MESSAGE(p != nullptr, "DPCL_CLI_PATH must point at the built binary");
    return p;
}

struct CliResult {
    int exit_code;
    std::string output;  // stdout and stderr combined
};

CliResult run_cli(const std::string& args) {
    fs::path cap = scratch_dir() / "capture.txt";
    std::string cmd = cli_path() + " " + args + " > " + cap.string() + " 2>&1";
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(cap);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return {code, text};
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), p.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string write_config() {
    fs::path p = scratch_dir() / "tiny.cfg";
    std::ofstream out(p);
    out << "# minimal fast benchmark\n"
           "seed = 5\n"
           "dataset.kind = synthetic\n"
           "dataset.classes = 4\n"
           "dataset.dims = 8\n"
           "dataset.per_class = 40\n"
           "dataset.test_per_class = 20\n"
           "dataset.spread = 0.2\n"
           "stream.setup = disjoint\n"
           "stream.tasks = 2\n"
           "model.hidden = 16,16\n"
           "model.feature_dim = 8\n"
           "train.batch_size = 8\n"
           "train.updates_per_sample = 2\n"
           "train.lr = 0.003\n"
           "bsc.num_heads = 3\n"
           "bsc.period_p = 10\n"
           "bsc.rank_a = 4\n"
           "bsc.num_mc_samples_r = 2\n"
           "memory.capacity = 64\n"
           "eval.every = 40\n";
    return p.string();
}

// Raw-feature CSV in the loader's format, derived from the same generator the
// run trained on.
std::string write_eval_csv() {
    Dataset data = make_synthetic(4, 8, 10, 0.2, 5, "test");
    fs::path p = scratch_dir() / "eval.csv";
    std::ofstream out(p);
    out.precision(17);
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << data.labels[i];
        for (std::size_t j = 0; j < data.dim(); ++j) out << "," << data.inputs.at(i, j);
        out << "\n";
    }
    return p.string();
}

}  // namespace

TEST_CASE("run writes the full artifact set and reports the result line") {
    std::string cfg = write_config();
    fs::path out = scratch_dir("run1");
    CliResult r = run_cli("run --config " + cfg + " --out " + out.string());
    CAPTURE(r.output);
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("method=dpcl") != std::string::npos);
    CHECK(r.output.find("final_avg_acc=") != std::string::npos);
    CHECK(r.output.find("final_forgetting=") != std::string::npos);

    for (const char* name : {"metrics.csv", "summary.json", "schedule.csv", "checkpoint.json"})
        CHECK_MESSAGE(fs::exists(out / name), name);

    nlohmann::json summary = nlohmann::json::parse(file_bytes(out / "summary.json"));
    CHECK(summary["method"] == "dpcl");
    CHECK(summary["seed"] == 5);
    CHECK(summary["iterations"] == 320);

    std::ifstream sched(out / "schedule.csv");
    std::string header;
    REQUIRE(std::getline(sched, header));
    CHECK(header == "iteration,sample_index,task_id");
}

TEST_CASE("reruns reproduce the metrics bytes; seed and method overrides take effect") {
    std::string cfg = write_config();
    fs::path a = scratch_dir("rep_a"), b = scratch_dir("rep_b"), c = scratch_dir("rep_c");
    REQUIRE(run_cli("run --config " + cfg + " --out " + a.string()).exit_code == 0);
    REQUIRE(run_cli("run --config " + cfg + " --out " + b.string()).exit_code == 0);
    CHECK(file_bytes(a / "metrics.csv") == file_bytes(b / "metrics.csv"));
    CHECK(file_bytes(a / "checkpoint.json") == file_bytes(b / "checkpoint.json"));

    REQUIRE(run_cli("run --config " + cfg + " --out " + c.string() + " --seed 6").exit_code == 0);
    CHECK_FALSE(file_bytes(a / "metrics.csv") == file_bytes(c / "metrics.csv"));

    fs::path er = scratch_dir("rep_er");
    CliResult r = run_cli("run --config " + cfg + " --out " + er.string() + " --method er");
    REQUIRE(r.exit_code == 0);
    nlohmann::json summary = nlohmann::json::parse(file_bytes(er / "summary.json"));
    CHECK(summary["method"] == "er");
    CHECK(summary["config"]["memory.policy"] == "reservoir");

    // --set reaches any config key.
    fs::path small = scratch_dir("rep_set");
    REQUIRE(run_cli("run --config " + cfg + " --out " + small.string() +
                    " --set memory.capacity=10")
                .exit_code == 0);
    nlohmann::json s2 = nlohmann::json::parse(file_bytes(small / "summary.json"));
    CHECK(s2["memory_size"].get<std::size_t>() <= 10);
}

TEST_CASE("configuration problems exit with code 2") {
    CHECK(run_cli("run --config /nonexistent/x.cfg").exit_code == 2);

    std::string cfg = write_config();
    CHECK(run_cli("run --config " + cfg + " --set no.such.key=1").exit_code == 2);
    CHECK(run_cli("run --config " + cfg + " --set train.batch_size=7").exit_code == 2);  // odd
    CHECK(run_cli("run --config " + cfg + " --set pima.omega=abc").exit_code == 2);
    CHECK(run_cli("run --config " + cfg + " --set stream.tasks=3").exit_code == 2);  // 4 % 3 != 0

    fs::path bad = scratch_dir() / "bad.cfg";
    std::ofstream(bad) << "unknown_key = 1\n";
    CHECK(run_cli("run --config " + bad.string()).exit_code == 2);

    // Command-line parse failures are configuration errors too.
    CHECK(run_cli("run").exit_code == 2);           // --config is required
    CHECK(run_cli("no-such-command").exit_code != 0);
    CHECK(run_cli("--help").exit_code == 0);
}

TEST_CASE("missing or malformed data exits with code 3") {
    std::string cfg = write_config();
    CHECK(run_cli("run --config " + cfg +
                  " --set dataset.kind=csv --set dataset.train_path=/nonexistent/a.csv" +
                  " --set dataset.test_path=/nonexistent/b.csv")
              .exit_code == 3);
    CHECK(run_cli("eval --checkpoint /nonexistent/ck.json --data /nonexistent/d.csv").exit_code ==
          3);
}

TEST_CASE("eval and probe-landscape consume a produced checkpoint") {
    std::string cfg = write_config();
    fs::path out = scratch_dir("consume");
    REQUIRE(run_cli("run --config " + cfg + " --out " + out.string()).exit_code == 0);
    std::string ck = (out / "checkpoint.json").string();
    std::string data = write_eval_csv();

    CliResult ev = run_cli("eval --checkpoint " + ck + " --data " + data);
    CAPTURE(ev.output);
    REQUIRE(ev.exit_code == 0);
    nlohmann::json report = nlohmann::json::parse(ev.output);
    CHECK(report["samples"] == 40);
    CHECK(report["correct"].get<long>() >= 0);
    CHECK(report["accuracy"].get<double>() >= 0.0);
    CHECK(report["accuracy"].get<double>() <= 100.0);

    // Same seed, same numbers; the report is deterministic.
    CliResult ev2 = run_cli("eval --checkpoint " + ck + " --data " + data + " --seed 1");
    CHECK(ev2.output == ev.output);

    fs::path land = scratch_dir() / "landscape.csv";
    CliResult pr = run_cli("probe-landscape --checkpoint " + ck + " --data " + data + " --out " +
                           land.string() + " --points 9 --range 0.5");
    CAPTURE(pr.output);
    REQUIRE(pr.exit_code == 0);
    std::ifstream in(land);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "s,loss");
    std::size_t rows = 0;
    bool has_center = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
        if (line.rfind("0,", 0) == 0) has_center = true;
        double loss = std::stod(line.substr(line.find(',') + 1));
        CHECK(loss >= 0.0);
    }
    CHECK(rows == 9);
    CHECK(has_center);

    CHECK(run_cli("probe-landscape --checkpoint " + ck + " --data " + data +
                  " --points 0")
              .exit_code == 4);  // numeric contract violation
}
