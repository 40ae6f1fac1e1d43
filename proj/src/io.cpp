#include "kaclab/io.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <type_traits>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace kaclab {

namespace {

std::string join(const std::vector<std::string>& parts) {
    std::string s;
    for (std::size_t i = 0; i < parts.size(); ++i)
        s += (i ? "; " : "") + parts[i];
    return s;
}

} // namespace

ConfigError::ConfigError(std::vector<std::string> v)
    : std::runtime_error("config: " + join(v)), violations(std::move(v)) {}

RunConfig parse_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError({std::string("invalid JSON: ") + e.what()});
    }
    if (!j.is_object()) throw ConfigError({"top level must be an object"});

    RunConfig cfg;
    std::vector<std::string> errs;

    static const char* known[] = {"study",      "d",         "N",
                                  "t_grid",     "t_fin",     "replicas",
                                  "master_seed", "seed_scheme", "J",
                                  "L",          "lp_cap",    "witness_sample",
                                  "n_ref",      "ref_runs",  "init",
                                  "events",     "quantile_samples",
                                  "out_dir",    "threads"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) { ok = true; break; }
        if (!ok) errs.push_back("unknown key '" + it.key() + "'");
    }

    auto get = [&](const char* key, auto& dst) {
        if (!j.contains(key)) return;
        try {
            dst = j.at(key).template get<std::decay_t<decltype(dst)>>();
        } catch (const nlohmann::json::exception&) {
            errs.push_back(std::string("field '") + key + "' has wrong type");
        }
    };
    get("study", cfg.study);
    get("d", cfg.d);
    if (j.contains("N")) {
        // accept a single N or a list
        if (j["N"].is_number()) {
            long long n = -1;
            get("N", n);
            cfg.N = {std::size_t(std::max(0LL, n))};
            if (n < 0) errs.push_back("field 'N' must be nonnegative");
        } else {
            get("N", cfg.N);
        }
    }
    get("t_grid", cfg.t_grid);
    get("t_fin", cfg.t_fin);
    get("replicas", cfg.replicas);
    get("master_seed", cfg.master_seed);
    get("seed_scheme", cfg.seed_scheme);
    get("J", cfg.J);
    get("L", cfg.L);
    get("lp_cap", cfg.lp_cap);
    get("witness_sample", cfg.witness_sample);
    get("n_ref", cfg.n_ref);
    get("ref_runs", cfg.ref_runs);
    get("init", cfg.init);
    get("events", cfg.events);
    get("quantile_samples", cfg.quantile_samples);
    get("out_dir", cfg.out_dir);
    get("threads", cfg.threads);

    // validation: collect every violation, name the field
    if (cfg.d < 1) errs.push_back("field 'd' must be >= 1");
    if (cfg.N.empty()) errs.push_back("field 'N' must be nonempty");
    for (std::size_t n : cfg.N)
        if (n < 2) { errs.push_back("field 'N' entries must be >= 2"); break; }
    if (cfg.t_grid.empty()) errs.push_back("field 't_grid' must be nonempty");
    for (double t : cfg.t_grid)
        if (!(t >= 0.0)) { errs.push_back("field 't_grid' entries must be >= 0"); break; }
    if (!std::is_sorted(cfg.t_grid.begin(), cfg.t_grid.end()))
        errs.push_back("field 't_grid' must be nondecreasing");
    if (!(cfg.t_fin >= 0.0)) errs.push_back("field 't_fin' must be >= 0");
    if (cfg.replicas < 1) errs.push_back("field 'replicas' must be >= 1");
    if (cfg.J < 1) errs.push_back("field 'J' must be >= 1");
    if (cfg.L < 2) errs.push_back("field 'L' must be >= 2");
    if (cfg.lp_cap < 2) errs.push_back("field 'lp_cap' must be >= 2");
    if (cfg.witness_sample < 2) errs.push_back("field 'witness_sample' must be >= 2");
    if (cfg.n_ref < 2) errs.push_back("field 'n_ref' must be >= 2");
    if (cfg.ref_runs < 1) errs.push_back("field 'ref_runs' must be >= 1");
    if (cfg.events < 1) errs.push_back("field 'events' must be >= 1");
    if (cfg.quantile_samples < 100)
        errs.push_back("field 'quantile_samples' must be >= 100");
    if (cfg.threads < 0) errs.push_back("field 'threads' must be >= 0");
    static const char* studies[] = {"convergence", "uniform_time", "baseline_rate",
                                    "moments", "recurrence", "relaxation",
                                    "chaos", "simulate"};
    bool study_ok = false;
    for (const char* s : studies)
        if (cfg.study == s) { study_ok = true; break; }
    if (!study_ok) errs.push_back("field 'study' must be one of convergence, "
                                  "uniform_time, baseline_rate, moments, "
                                  "recurrence, relaxation, chaos, simulate");
    static const char* inits[] = {"maxwellian", "nonchaotic", "equilibrium", "pareto"};
    bool init_ok = false;
    for (const char* s : inits)
        if (cfg.init == s) { init_ok = true; break; }
    if (!init_ok)
        errs.push_back("field 'init' must be one of maxwellian, nonchaotic, "
                       "equilibrium, pareto");
    if (cfg.seed_scheme != "splitmix3")
        errs.push_back("field 'seed_scheme' must be 'splitmix3'");

    if (!errs.empty()) throw ConfigError(std::move(errs));
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot open '" + path + "'"});
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string emit_config(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["study"] = cfg.study;
    j["d"] = cfg.d;
    j["N"] = cfg.N;
    j["t_grid"] = cfg.t_grid;
    j["t_fin"] = cfg.t_fin;
    j["replicas"] = cfg.replicas;
    j["master_seed"] = cfg.master_seed;
    j["seed_scheme"] = cfg.seed_scheme;
    j["J"] = cfg.J;
    j["L"] = cfg.L;
    j["lp_cap"] = cfg.lp_cap;
    j["witness_sample"] = cfg.witness_sample;
    j["n_ref"] = cfg.n_ref;
    j["ref_runs"] = cfg.ref_runs;
    j["init"] = cfg.init;
    j["events"] = cfg.events;
    j["quantile_samples"] = cfg.quantile_samples;
    j["out_dir"] = cfg.out_dir;
    j["threads"] = cfg.threads;
    return j.dump(2) + "\n";
}

int resolve_threads(int configured) {
    if (configured > 0) return configured;
    if (const char* env = std::getenv("KACLAB_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace kaclab
