#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#ifndef CLI_PATH
#define CLI_PATH "kaclab"
#endif

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string temp_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

void write(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("simulate writes artifacts and fails cleanly on bad config") {
    const std::string dir = temp_dir("kaclab_test_cli_sim");
    write(dir + "/c.json",
          R"({"study":"simulate","N":16,"t_fin":0.2,"master_seed":1})");
    CHECK(run("simulate --config " + dir + "/c.json --out " + dir + "/out") == 0);
    CHECK(fs::exists(dir + "/out/trajectory.csv"));
    CHECK(fs::exists(dir + "/out/snapshot_final.csv"));

    write(dir + "/bad.json", R"({"N":1})");
    CHECK(run("simulate --config " + dir + "/bad.json --out " + dir) != 0);
    CHECK(run("simulate --config " + dir + "/missing.json") != 0);
    fs::remove_all(dir);
}

TEST_CASE("metric emits a JSON record") {
    const std::string dir = temp_dir("kaclab_test_cli_metric");
    write(dir + "/a.csv", "x0,x1,w\n0,0,0.5\n1,0,0.5\n");
    write(dir + "/b.csv", "x0,x1,w\n0,1,1.0\n");
    const std::string out = dir + "/rec.json";
    CHECK(run("metric --mu " + dir + "/a.csv --nu " + dir +
              "/b.csv --exact --w1 --out " + out) == 0);
    const auto rec = nlohmann::json::parse(std::ifstream(out));
    CHECK(rec.contains("wasserstein_lp"));
    CHECK(rec.contains("w1_ot"));
    CHECK(rec["w1_ot"].get<double>() > 0.0);
    fs::remove_all(dir);
}

TEST_CASE("study subcommand produces a report") {
    const std::string dir = temp_dir("kaclab_test_cli_study");
    write(dir + "/c.json",
          R"({"study":"chaos","N":16,"t_fin":0.0,"replicas":30,"master_seed":2})");
    CHECK(run("study --config " + dir + "/c.json --out " + dir +
              "/out --name rep") == 0);
    CHECK(fs::exists(dir + "/out/rep.json"));
    CHECK(fs::exists(dir + "/out/rep.csv"));
    fs::remove_all(dir);
}

TEST_CASE("unknown subcommand exits nonzero") {
    CHECK(run("transmogrify") != 0);
}

} // TEST_SUITE
