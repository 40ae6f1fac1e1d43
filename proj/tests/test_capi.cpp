#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "kaclab.h"

namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

} // namespace

TEST_SUITE("capi") {

TEST_CASE("derive_seed matches across the boundary") {
    CHECK(kaclab_derive_seed(0, 0, 0) == 0x238275bc38fcbe91ULL);
}

TEST_CASE("null arguments produce INVALID_ARGUMENT with a message") {
    CHECK(kaclab_rng_create(1, nullptr) == KACLAB_ERR_INVALID_ARGUMENT);
    CHECK(std::strlen(kaclab_last_error()) > 0);
}

TEST_CASE("state lifecycle, simulate, snapshot round trip") {
    const std::string dir = temp_dir("kaclab_test_capi");
    kaclab_rng* rng = nullptr;
    REQUIRE(kaclab_rng_create(7, &rng) == KACLAB_OK);

    kaclab_state* st = nullptr;
    REQUIRE(kaclab_state_create("maxwellian", 32, 3, rng, &st) == KACLAB_OK);
    CHECK(kaclab_state_size(st) == 32);
    CHECK(kaclab_state_dim(st) == 3);

    unsigned long events = 0;
    const std::string traj = dir + "/traj.csv";
    REQUIRE(kaclab_simulate(st, 0.5, rng, traj.c_str(), &events) == KACLAB_OK);
    CHECK(events > 0);
    CHECK(fs::exists(traj));

    std::vector<double> buf(32 * 3);
    REQUIRE(kaclab_state_velocities(st, buf.data(), buf.size()) == KACLAB_OK);
    CHECK(kaclab_state_velocities(st, buf.data(), 3) ==
          KACLAB_ERR_INVALID_ARGUMENT);

    const std::string snap = dir + "/snap.csv";
    REQUIRE(kaclab_state_save_csv(st, 0.5, 7, snap.c_str()) == KACLAB_OK);
    kaclab_state* st2 = nullptr;
    REQUIRE(kaclab_state_load_csv(snap.c_str(), &st2) == KACLAB_OK);
    std::vector<double> buf2(32 * 3);
    REQUIRE(kaclab_state_velocities(st2, buf2.data(), buf2.size()) == KACLAB_OK);
    CHECK(buf == buf2);

    kaclab_state_destroy(st);
    kaclab_state_destroy(st2);
    kaclab_rng_destroy(rng);
    fs::remove_all(dir);
}

TEST_CASE("unknown init kind is an invalid argument") {
    kaclab_rng* rng = nullptr;
    REQUIRE(kaclab_rng_create(1, &rng) == KACLAB_OK);
    kaclab_state* st = nullptr;
    CHECK(kaclab_state_create("plasma", 8, 3, rng, &st) ==
          KACLAB_ERR_INVALID_ARGUMENT);
    kaclab_rng_destroy(rng);
}

TEST_CASE("metric functions work on clouds built from states") {
    kaclab_rng* rng = nullptr;
    REQUIRE(kaclab_rng_create(2, &rng) == KACLAB_OK);
    kaclab_state *a = nullptr, *b = nullptr;
    REQUIRE(kaclab_state_create("maxwellian", 24, 3, rng, &a) == KACLAB_OK);
    REQUIRE(kaclab_state_create("maxwellian", 24, 3, rng, &b) == KACLAB_OK);
    kaclab_cloud *ca = nullptr, *cb = nullptr;
    REQUIRE(kaclab_cloud_from_state(a, &ca) == KACLAB_OK);
    REQUIRE(kaclab_cloud_from_state(b, &cb) == KACLAB_OK);
    CHECK(kaclab_cloud_size(ca) == 24);
    CHECK(kaclab_cloud_dim(ca) == 3);

    double lp = 0.0, w1 = 0.0, up = 0.0, rem = 0.0, lo = 0.0, lam = 0.0;
    REQUIRE(kaclab_wasserstein_lp(ca, cb, 2000, &lp) == KACLAB_OK);
    REQUIRE(kaclab_w1_ot(ca, cb, &w1) == KACLAB_OK);
    REQUIRE(kaclab_dyadic_upper_bound(ca, cb, 6, 8, &up, &rem) == KACLAB_OK);
    REQUIRE(kaclab_lower_witness(ca, cb, 16, 5, &lo) == KACLAB_OK);
    REQUIRE(kaclab_lambda_k(ca, 2.0, &lam) == KACLAB_OK);
    CHECK(lp > 0.0);
    CHECK(w1 > 0.0);
    CHECK(lo <= lp + 1e-9);
    CHECK(up >= lp - 1e-9);
    CHECK(lam == doctest::Approx(2.0));  // on-sphere states have Lambda_2 = 2

    kaclab_cloud_destroy(ca);
    kaclab_cloud_destroy(cb);
    kaclab_state_destroy(a);
    kaclab_state_destroy(b);
    kaclab_rng_destroy(rng);
}

TEST_CASE("io failures map to the IO status") {
    kaclab_cloud* c = nullptr;
    CHECK(kaclab_cloud_load_csv("/nonexistent/file.csv", &c) == KACLAB_ERR_IO);
}

TEST_CASE("run_study: config errors and a toy chaos study") {
    const std::string dir = temp_dir("kaclab_test_capi_study");
    CHECK(kaclab_run_study("{\"N\": 1}", dir.c_str(), "r") == KACLAB_ERR_CONFIG);

    const std::string cfg = R"({"study":"chaos","N":16,"t_fin":0.0,
        "replicas":50,"master_seed":3})";
    REQUIRE(kaclab_run_study(cfg.c_str(), dir.c_str(), "chaos") == KACLAB_OK);
    CHECK(fs::exists(dir + "/chaos.json"));
    CHECK(fs::exists(dir + "/chaos.csv"));
    CHECK(fs::exists(dir + "/chaos_config.json"));
    fs::remove_all(dir);
}

TEST_CASE("run_simulate writes trajectory and snapshots") {
    const std::string dir = temp_dir("kaclab_test_capi_sim");
    const std::string cfg = R"({"study":"simulate","N":16,"t_fin":0.3,
        "t_grid":[0.1,0.2],"master_seed":4})";
    REQUIRE(kaclab_run_simulate(cfg.c_str(), dir.c_str()) == KACLAB_OK);
    CHECK(fs::exists(dir + "/trajectory.csv"));
    CHECK(fs::exists(dir + "/snapshot_init.csv"));
    CHECK(fs::exists(dir + "/snapshot_0.csv"));
    CHECK(fs::exists(dir + "/snapshot_1.csv"));
    CHECK(fs::exists(dir + "/snapshot_final.csv"));
    fs::remove_all(dir);
}

} // TEST_SUITE
