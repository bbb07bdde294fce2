#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string tmp(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(GCDG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string run_cli_capture(const std::string& args) {
    const std::string out_path = tmp("gcdg_cli_stdout.txt");
    const std::string cmd =
        std::string(GCDG_CLI_PATH) + " " + args + " >" + out_path + " 2>/dev/null";
    std::system(cmd.c_str());
    std::ifstream in(out_path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_data_rows(const std::string& text) {
    std::stringstream ss(text);
    std::string line;
    std::size_t rows = 0;
    bool past_header = false;
    while (std::getline(ss, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!past_header) {
            past_header = true;  // column header
            continue;
        }
        ++rows;
    }
    return rows;
}

}  // namespace

TEST_CASE("gen-data writes the frozen task deterministically") {
    const std::string out1 = tmp("gcdg_cli_bm1.csv");
    const std::string out2 = tmp("gcdg_cli_bm2.csv");
    REQUIRE(run_cli("gen-data --task bimodal1d --out " + out1 + " --seed 7") == 0);
    REQUIRE(run_cli("gen-data --task bimodal1d --out " + out2 + " --seed 7") == 0);
    const std::string a = slurp(out1), b = slurp(out2);
    CHECK(a == b);
    CHECK(count_data_rows(a) == 600);

    const std::string out3 = tmp("gcdg_cli_bm3.csv");
    REQUIRE(run_cli("gen-data --task bimodal1d --out " + out3 + " --seed 8") == 0);
    CHECK(slurp(out3) != a);
}

TEST_CASE("gen-data usage errors exit with 2") {
    CHECK(run_cli("gen-data --task bimodal1d") == 2);            // missing --out
    CHECK(run_cli("gen-data --out " + tmp("x.csv")) == 2);       // no task or spec
    CHECK(run_cli("gen-data --task nope --out " + tmp("x.csv")) == 2);
}

TEST_CASE("train honors configs, overrides and exit codes") {
    const std::string data = tmp("gcdg_cli_train.csv");
    REQUIRE(run_cli("gen-data --task bimodal1d --out " + data + " --seed 7") == 0);

    const std::string ckpt = tmp("gcdg_cli_ck.txt");
    const std::string metrics = tmp("gcdg_cli_mx.csv");
    REQUIRE(run_cli("train --data " + data + " --target 2 --set iterations=0 --out-ckpt " + ckpt +
                    " --out-metrics " + metrics) == 0);
    CHECK(slurp(ckpt).rfind("GCDG1\n", 0) == 0);
    // Metrics file carries the resolved config echo.
    CHECK(slurp(metrics).find("# iterations = 0") != std::string::npos);

    const std::string bad_cfg = tmp("gcdg_cli_bad.cfg");
    {
        std::ofstream out(bad_cfg);
        out << "iterations = 10\nnot_a_key = 3\n";
    }
    CHECK(run_cli("train --config " + bad_cfg + " --data " + data + " --target 2") == 2);
    CHECK(run_cli("train --data " + data + " --target 9 --set iterations=0") == 2);
    CHECK(run_cli("train --data /no/such/file.csv --target 0 --set iterations=0") == 3);
    CHECK(run_cli("train --data " + data + " --target 2 --set classifier_kind=linear"
                  " --set iterations=20") == 0);
}

TEST_CASE("eval prints domain,acc rows from a checkpoint") {
    const std::string data = tmp("gcdg_cli_eval.csv");
    REQUIRE(run_cli("gen-data --task bimodal1d --out " + data + " --seed 7") == 0);
    const std::string ckpt = tmp("gcdg_cli_eval_ck.txt");
    REQUIRE(run_cli("train --data " + data + " --target 2 --set iterations=200"
                    " --set net.identity=true --set seed=1 --out-ckpt " + ckpt) == 0);
    const std::string out = run_cli_capture("eval --ckpt " + ckpt + " --data " + data +
                                            " --target 2");
    CHECK(out.find("domain,acc") != std::string::npos);
    CHECK(out.find("source_val,") != std::string::npos);
}

TEST_CASE("bench emits one row per target per classifier kind plus averages") {
    const std::string data = tmp("gcdg_cli_bench.csv");
    REQUIRE(run_cli("gen-data --task bimodal1d --out " + data + " --seed 7") == 0);
    const std::string out_path = tmp("gcdg_cli_bench_out.csv");
    REQUIRE(run_cli("bench --data " + data + " --set iterations=40 --set net.identity=true"
                    " --set seed=3 --out " + out_path + " --threads 1") == 0);
    const std::string table = slurp(out_path);
    for (const char* kind : {"generative", "linear", "mlp"}) {
        for (const char* target : {",0,", ",1,", ",2,"}) {
            CHECK(table.find(std::string(kind) + target) != std::string::npos);
        }
        CHECK(table.find(std::string(kind) + ",average,") != std::string::npos);
    }
    CHECK(table.find("# seed = 3") != std::string::npos);
}

TEST_CASE("landscape grid file has the full grid with the config echo") {
    const std::string data = tmp("gcdg_cli_land.csv");
    REQUIRE(run_cli("gen-data --task bimodal1d --out " + data + " --seed 7") == 0);
    const std::string ckpt = tmp("gcdg_cli_land_ck.txt");
    REQUIRE(run_cli("train --data " + data + " --target 2 --set iterations=50"
                    " --set net.identity=true --out-ckpt " + ckpt) == 0);
    const std::string grid_path = tmp("gcdg_cli_grid.csv");
    REQUIRE(run_cli("landscape --ckpt " + ckpt + " --data " + data + " --target 2 --out " +
                    grid_path + " --radius 2 --step 0.05 --seed 5") == 0);
    const std::string grid = slurp(grid_path);
    CHECK(grid.find("alpha,beta,loss") != std::string::npos);
    CHECK(count_data_rows(grid) == 25);
}

TEST_CASE("theory-demo prints the gap and rejects malformed joints") {
    const std::string out = run_cli_capture("theory-demo");
    CHECK(out.find("information gap = 0.8712031656 bits") != std::string::npos);
    CHECK(out.find("encoding invariant across domains: yes") != std::string::npos);

    const std::string fixture = std::string(GCDG_FIXTURE_DIR) + "/theory_joints.txt";
    const std::string out2 = run_cli_capture("theory-demo --joints " + fixture);
    CHECK(out2.find("information gap = 0.8712031656 bits") != std::string::npos);

    const std::string bad = tmp("gcdg_cli_bad_joints.txt");
    {
        std::ofstream f(bad);
        f << "domain 0\n0.5,0.5\n0.6,0.4\n";  // sums to 2, not a joint
    }
    CHECK(run_cli("theory-demo --joints " + bad) == 2);
}

TEST_CASE("unknown subcommands and flags exit with 2") {
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("train --no-such-flag") == 2);
}
