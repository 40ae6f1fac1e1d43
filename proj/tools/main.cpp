// kaclab command line: simulate | metric | branch | study.
// Thin shell over the C API; all numerics live behind kaclab.h.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kaclab.h"

namespace {

int fail(kaclab_status rc) {
    nlohmann::ordered_json err;
    err["error"] = kaclab_last_error();
    err["code"] = int(rc);
    std::cout << err.dump(2) << "\n";
    return int(rc);
}

int fail_msg(const std::string& msg, int code = 1) {
    nlohmann::ordered_json err;
    err["error"] = msg;
    err["code"] = code;
    std::cout << err.dump(2) << "\n";
    return code;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Applies command-line overrides to the raw config text. The strict parse
// itself happens inside the library.
std::string apply_overrides(const std::string& text, const std::string& study,
                            bool has_seed, std::uint64_t seed,
                            const std::string& out_dir, int threads) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (!study.empty()) j["study"] = study;
    if (has_seed) j["master_seed"] = seed;
    if (!out_dir.empty()) j["out_dir"] = out_dir;
    if (threads > 0) j["threads"] = threads;
    return j.dump();
}

std::vector<double> parse_vector(const std::string& csv) {
    std::vector<double> v;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
    return v;
}

void emit_record(const nlohmann::ordered_json& rec, const std::string& out,
                 const std::string& format) {
    std::string text;
    if (format == "csv") {
        std::ostringstream ss;
        ss << "key,value\n";
        for (auto it = rec.begin(); it != rec.end(); ++it)
            ss << it.key() << "," << it.value().dump() << "\n";
        text = ss.str();
    } else {
        text = rec.dump(2) + "\n";
    }
    if (out.empty()) {
        std::cout << text;
    } else {
        std::ofstream f(out, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open " + out);
        f << text;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"kaclab: hard-spheres jump-process laboratory"};
    app.require_subcommand(1);

    std::string config, out_dir, out_file, format = "json", study_kind;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;

    auto add_common = [&](CLI::App* sub, bool with_config) {
        if (with_config)
            sub->add_option("--config", config, "config JSON path")->required();
        sub->add_option("--seed", seed, "master seed override")
            ->each([&](const std::string&) { seed_set = true; });
        sub->add_option("--threads", threads, "worker threads (or KACLAB_THREADS)");
        sub->add_option("--format", format, "output format")
            ->check(CLI::IsMember({"csv", "json"}));
    };

    // simulate
    auto* sim = app.add_subcommand("simulate", "run one trajectory");
    add_common(sim, true);
    sim->add_option("--out", out_dir, "output directory");

    // metric
    auto* met = app.add_subcommand("metric", "distances between two clouds");
    std::string mu_path, nu_path;
    bool do_exact = false, do_w1 = false, do_bracket = false;
    int J = 8, L = 10;
    std::size_t lp_cap = 2000, witness_sample = 0;
    met->add_option("--mu", mu_path)->required();
    met->add_option("--nu", nu_path)->required();
    met->add_flag("--exact", do_exact, "exact dual LP value");
    met->add_flag("--w1", do_w1, "Monge-Kantorovich W1");
    met->add_flag("--bracket", do_bracket, "dyadic upper bound");
    met->add_option("--lp-cap", lp_cap, "union support cap for the LP");
    met->add_option("-J", J);
    met->add_option("-L", L);
    met->add_option("--witness", witness_sample, "certified lower bound, subsample size");
    met->add_option("--out", out_file, "record path (default stdout)");
    add_common(met, false);

    // branch
    auto* brn = app.add_subcommand("branch", "linearised-process estimators");
    std::string env_path, v0_csv;
    double b_s = 0.0, b_t = 0.25;
    std::size_t trees = 1000;
    brn->add_option("--env", env_path, "environment JSON header")->required();
    brn->add_option("--v0", v0_csv, "initial velocity, comma separated")->required();
    brn->add_option("--s", b_s, "start time");
    brn->add_option("--t", b_t, "end time")->required();
    brn->add_option("--trees", trees, "Monte Carlo trees");
    brn->add_option("--out", out_file, "record path (default stdout)");
    add_common(brn, false);

    // study
    auto* stu = app.add_subcommand("study", "scripted experiment");
    stu->add_option("kind", study_kind, "study kind (overrides the config)");
    add_common(stu, true);
    stu->add_option("--out", out_dir, "output directory override");
    std::string report_name = "report";
    stu->add_option("--name", report_name, "report file stem");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            const std::string text =
                apply_overrides(slurp(config), "", seed_set, seed, out_dir, threads);
            nlohmann::json j = nlohmann::json::parse(text);
            const std::string dir =
                !out_dir.empty() ? out_dir : j.value("out_dir", std::string("out"));
            const auto rc = kaclab_run_simulate(text.c_str(), dir.c_str());
            if (rc != KACLAB_OK) return fail(rc);
            std::cout << "{\"status\": \"ok\", \"out_dir\": \"" << dir << "\"}\n";
            return 0;
        }

        if (met->parsed()) {
            kaclab_cloud *mu = nullptr, *nu = nullptr;
            auto rc = kaclab_cloud_load_csv(mu_path.c_str(), &mu);
            if (rc != KACLAB_OK) return fail(rc);
            rc = kaclab_cloud_load_csv(nu_path.c_str(), &nu);
            if (rc != KACLAB_OK) return fail(rc);
            nlohmann::ordered_json rec;
            rec["mu"] = mu_path;
            rec["nu"] = nu_path;
            if (!do_exact && !do_w1 && !do_bracket && witness_sample == 0)
                do_exact = true;
            double v = 0.0;
            if (do_exact) {
                rc = kaclab_wasserstein_lp(mu, nu, lp_cap, &v);
                if (rc != KACLAB_OK) return fail(rc);
                rec["wasserstein_lp"] = v;
            }
            if (do_w1) {
                rc = kaclab_w1_ot(mu, nu, &v);
                if (rc != KACLAB_OK) return fail(rc);
                rec["w1_ot"] = v;
            }
            if (do_bracket) {
                double rem = 0.0;
                rc = kaclab_dyadic_upper_bound(mu, nu, J, L, &v, &rem);
                if (rc != KACLAB_OK) return fail(rc);
                rec["dyadic_upper"] = v;
                rec["dyadic_remainder"] = rem;
            }
            if (witness_sample > 0) {
                rc = kaclab_lower_witness(mu, nu, witness_sample,
                                          seed_set ? seed : 1, &v);
                if (rc != KACLAB_OK) return fail(rc);
                rec["lower_witness"] = v;
            }
            kaclab_cloud_destroy(mu);
            kaclab_cloud_destroy(nu);
            emit_record(rec, out_file, format);
            return 0;
        }

        if (brn->parsed()) {
            const std::vector<double> v0 = parse_vector(v0_csv);
            int ok = 0;
            double mean = 0.0, bound = 0.0, est = 0.0, se = 0.0;
            auto rc = kaclab_growth_bound_check(env_path.c_str(), v0.data(),
                                                int(v0.size()), b_t, trees,
                                                seed_set ? seed : 1, &ok, &mean,
                                                &bound);
            if (rc != KACLAB_OK) return fail(rc);
            rc = kaclab_estimate_fst_tanh(env_path.c_str(), v0.data(),
                                          int(v0.size()), b_s, b_t, trees,
                                          seed_set ? seed : 1, &est, &se);
            if (rc != KACLAB_OK) return fail(rc);
            nlohmann::ordered_json rec;
            rec["env"] = env_path;
            rec["v0"] = v0;
            rec["s"] = b_s;
            rec["t"] = b_t;
            rec["trees"] = trees;
            rec["growth_ok"] = bool(ok);
            rec["growth_mc_mean"] = mean;
            rec["growth_bound"] = bound;
            rec["fst_tanh_estimate"] = est;
            rec["fst_tanh_se"] = se;
            emit_record(rec, out_file, format);
            return 0;
        }

        if (stu->parsed()) {
            const std::string text = apply_overrides(slurp(config), study_kind,
                                                     seed_set, seed, out_dir,
                                                     threads);
            nlohmann::json j = nlohmann::json::parse(text);
            const std::string dir =
                !out_dir.empty() ? out_dir : j.value("out_dir", std::string("out"));
            const auto rc =
                kaclab_run_study(text.c_str(), dir.c_str(), report_name.c_str());
            if (rc != KACLAB_OK) return fail(rc);
            std::cout << "{\"status\": \"ok\", \"report\": \"" << dir << "/"
                      << report_name << ".json\"}\n";
            return 0;
        }
    } catch (const std::exception& e) {
        return fail_msg(e.what());
    }
    return fail_msg("no subcommand", 2);
}
