#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kaclab {

// Validated run configuration. parse_config is strict: unknown keys and
// out-of-range values are rejected with a list of all violations.
struct RunConfig {
    std::string study = "convergence";
    int d = 3;
    std::vector<std::size_t> N = {512};
    std::vector<double> t_grid = {1.0};
    double t_fin = 1.0;
    std::size_t replicas = 100;
    std::uint64_t master_seed = 1;
    std::string seed_scheme = "splitmix3";
    int J = 8;
    int L = 10;
    std::size_t lp_cap = 2000;
    std::size_t witness_sample = 256;
    std::size_t n_ref = 16384;
    std::size_t ref_runs = 8;
    std::string init = "maxwellian";  // maxwellian | nonchaotic | equilibrium | pareto
    unsigned long events = 10000000;        // recurrence: minimum event count
    std::size_t quantile_samples = 1000000; // recurrence: calibration draws
    std::string out_dir = "out";
    int threads = 0;  // 0: use KACLAB_THREADS, else 1

    bool operator==(const RunConfig&) const = default;
};

struct ConfigError : std::runtime_error {
    std::vector<std::string> violations;
    explicit ConfigError(std::vector<std::string> v);
};

RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text);

// Canonical JSON form; emit(parse(emit(c))) is byte-identical.
std::string emit_config(const RunConfig& cfg);

// Worker count: explicit config value, else KACLAB_THREADS, else 1.
int resolve_threads(int configured);

// Write via temp file + rename so readers never observe partial files.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

} // namespace kaclab
