#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "kaclab/branching.hpp"
#include "kaclab/experiments.hpp"
#include "kaclab/metrics.hpp"

using namespace kaclab;

namespace {

Environment maxwellian_discrete_env(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    const ParticleState st = chaotic_init(
        [](Rng& r) { return maxwellian_sample(MaxwellianSpec{3}, r); }, n, rng);
    return constant_environment(state_cloud(st));
}

} // namespace

TEST_SUITE("branching") {

TEST_CASE("environment validation and lambda3 integral") {
    Environment env = maxwellian_discrete_env(64, 1);
    CHECK(env.lambda3_cache.size() == 1);
    const double l3 = env.lambda3_cache[0];
    CHECK(l3 > 1.0);
    CHECK(env.lambda3_integral(0.0, 2.0) == doctest::Approx(2.0 * l3));
    CHECK(env.lambda3_integral(0.5, 0.5) == doctest::Approx(0.0));
    CHECK(env.z_factor(0.0, 0.0) == doctest::Approx(3.0));

    // piecewise-constant grid
    Environment two;
    two.dim = 3;
    two.times = {0.0, 1.0};
    two.clouds = {env.clouds[0], env.clouds[0]};
    two.finalize();
    CHECK(two.cell_at(0.5) == 0);
    CHECK(two.cell_at(1.0) == 1);
    CHECK(two.lambda3_integral(0.5, 1.5) == doctest::Approx(l3));

    // invalid: mass off by too much
    Environment bad;
    bad.dim = 3;
    bad.times = {0.0};
    WeightedPointCloud c = env.clouds[0];
    c.weights[0] += 0.1;
    bad.clouds = {c};
    CHECK_THROWS_AS(bad.finalize(), std::invalid_argument);
}

TEST_CASE("environment files round-trip") {
    namespace fs = std::filesystem;
    const auto dir = (fs::temp_directory_path() / "kaclab_test_env").string();
    Environment env = maxwellian_discrete_env(32, 2);
    env.times = {0.0};
    save_environment(env, dir, "env");
    const Environment back = load_environment(dir + "/env.json");
    CHECK(back.dim == env.dim);
    CHECK(back.times == env.times);
    REQUIRE(back.clouds.size() == 1);
    CHECK(back.clouds[0].points == env.clouds[0].points);
    CHECK(back.clouds[0].weights == env.clouds[0].weights);
    fs::remove_all(dir);
}

TEST_CASE("branching conserves signed mass, momentum and energy per event") {
    Environment env = maxwellian_discrete_env(48, 3);
    Rng rng(4);
    SignedParticleSystem sys;
    sys.dim = 3;
    Vec v0 = {0.7, -0.2, 0.1};
    sys.push_back(Span(v0), +1);

    unsigned long events = 0;
    const auto res = run_branching(
        sys, env, 1.0, rng, {},
        [&](Span parent, int sign, Span vp, Span vsp, Span vstar) {
            ++events;
            CHECK((sign == 1 || sign == -1));
            // signed replacement (v',s)+(v*',s)-(v*,s) carries the parent's
            // mass, momentum and energy: v' + v*' - v* = v
            double e = 0.0;
            for (int c = 0; c < 3; ++c) {
                CHECK(std::abs(vp[c] + vsp[c] - vstar[c] - parent[c]) < 1e-10);
            }
            e = norm2(vp) + norm2(vsp) - norm2(vstar) - norm2(parent);
            CHECK(std::abs(e) < 1e-10);
        });
    CHECK(!res.truncated);
    CHECK(res.events == events);
    CHECK(sys.size() == 1 + 2 * events);  // population 1 + 2k
    CHECK(sys.time == doctest::Approx(1.0));

    // conserved functionals over the whole tree
    CHECK(sys.signed_mass() == doctest::Approx(1.0));
    const double sm = sys.signed_sum([](Span v) { return v[0]; });
    CHECK(sm == doctest::Approx(v0[0]).epsilon(1e-9));
    const double se = sys.signed_sum([](Span v) { return norm2(v); });
    CHECK(se == doctest::Approx(norm2(Span(v0))).epsilon(1e-9));
}

TEST_CASE("population cap truncates and reports") {
    Environment env = maxwellian_discrete_env(32, 5);
    Rng rng(6);
    SignedParticleSystem sys;
    sys.dim = 3;
    Vec v0 = {2.0, 0.0, 0.0};
    sys.push_back(Span(v0), +1);
    BranchConfig cfg;
    cfg.population_cap = 5;
    const auto res = run_branching(sys, env, 50.0, rng, cfg);
    CHECK(res.truncated);
    CHECK(sys.size() > cfg.population_cap);
    CHECK(sys.size() <= cfg.population_cap + 2);
}

TEST_CASE("estimate_fst of conserved functionals is exact") {
    Environment env = maxwellian_discrete_env(32, 7);
    Vec v0 = {0.5, 0.5, -0.5};
    // f = 1: signed mass is conserved, so every tree returns exactly 1
    const auto mass = estimate_fst([](Span) { return 1.0; }, Span(v0), 0.0, 0.5,
                                   env, 50, 11);
    CHECK(mass.estimate == doctest::Approx(1.0));
    CHECK(mass.se == doctest::Approx(0.0));
    CHECK(!mass.flagged);
    // f = |v|^2: signed energy is conserved
    const auto energy = estimate_fst([](Span v) { return norm2(v); }, Span(v0),
                                     0.0, 0.5, env, 50, 12);
    CHECK(energy.estimate == doctest::Approx(norm2(Span(v0))).epsilon(1e-9));
}

TEST_CASE("growth bound check passes on a Maxwellian-like environment") {
    Environment env = maxwellian_discrete_env(64, 8);
    Vec v0 = {1.0, 0.0, 0.0};
    const auto g = growth_bound_check(Span(v0), 0.5, env, 400, 13);
    CHECK(g.ok);
    CHECK(g.mc_mean > 0.0);
    CHECK(g.bound >= (1.0 + 1.0));  // (1+|v0|^2) e^{8 int Lambda_3} >= 2
}

TEST_CASE("lipschitz profile on a known function") {
    // store ghat * (1+|v|^2) as the estimate field; ghat(v) = v_1 / 2
    WeightedPointCloud mesh;
    mesh.dim = 1;
    for (double x : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
        Vec p = {x};
        mesh.push_back(Span(p), (1.0 + x * x) * (x / 2.0));
    }
    const auto prof = lipschitz_profile(mesh);
    CHECK(prof.sup_norm == doctest::Approx(0.5));
    CHECK(prof.lipschitz_estimate == doctest::Approx(0.5));
}

TEST_CASE("flow derivative: conserved pairings match the initial signed mass") {
    Environment env = maxwellian_discrete_env(32, 9);
    Rng rng(10);
    WeightedPointCloud theta_plus, theta_minus;
    theta_plus.dim = theta_minus.dim = 3;
    Vec a = {0.8, 0.0, 0.0}, b = {-0.3, 0.4, 0.0};
    theta_plus.push_back(Span(a), 1.5);
    theta_minus.push_back(Span(b), 0.75);
    const auto res =
        estimate_flow_derivative(theta_plus, theta_minus, env, 0.3, 4000, 14);
    CHECK(res.discard_fraction < 0.01);
    // E <1, Xi_t> = mass(theta+) - mass(theta-) exactly per run
    CHECK(res.xi_t.total_weight() ==
          doctest::Approx(1.5 - 0.75).epsilon(0.15));
}

TEST_CASE("branching run is reproducible from the seed") {
    Environment env = maxwellian_discrete_env(32, 15);
    Vec v0 = {0.2, 0.1, 0.0};
    auto run = [&](std::uint64_t seed) {
        Rng rng(seed);
        SignedParticleSystem sys;
        sys.dim = 3;
        sys.push_back(Span(v0), +1);
        run_branching(sys, env, 0.8, rng);
        return sys.velocities;
    };
    CHECK(run(77) == run(77));
}

} // TEST_SUITE
