#include "kaclab/cloud.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace kaclab {

bool WeightedPointCloud::is_probability(double tol) const {
    for (double w : weights)
        if (w < 0.0) return false;
    return std::abs(total_weight() - 1.0) <= tol;
}

void WeightedPointCloud::deduplicate() {
    std::map<std::vector<double>, double> acc;
    std::vector<double> key(dim);
    for (std::size_t i = 0; i < size(); ++i) {
        Span p = point(i);
        key.assign(p.begin(), p.end());
        acc[key] += weights[i];
    }
    points.clear();
    weights.clear();
    for (const auto& [p, w] : acc) {
        if (w == 0.0) continue;
        points.insert(points.end(), p.begin(), p.end());
        weights.push_back(w);
    }
}

WeightedPointCloud empirical_cloud(int dim, const std::vector<double>& flat) {
    WeightedPointCloud cloud;
    cloud.dim = dim;
    cloud.points = flat;
    const std::size_t n = flat.size() / dim;
    cloud.weights.assign(n, 1.0 / static_cast<double>(n));
    return cloud;
}

void save_cloud_csv(const WeightedPointCloud& cloud, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (int k = 0; k < cloud.dim; ++k) out << "x" << k << ",";
    out << "w\n";
    char buf[32];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        Span p = cloud.point(i);
        for (int k = 0; k < cloud.dim; ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", p[k]);
            out << buf << ",";
        }
        std::snprintf(buf, sizeof buf, "%.17g", cloud.weights[i]);
        out << buf << "\n";
    }
}

WeightedPointCloud load_cloud_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty cloud file: " + path);
    int dim = 0;
    {
        std::stringstream header(line);
        std::string col;
        std::vector<std::string> cols;
        while (std::getline(header, col, ',')) cols.push_back(col);
        if (cols.empty() || cols.back() != "w")
            throw std::runtime_error("cloud CSV header must end with 'w': " + path);
        dim = static_cast<int>(cols.size()) - 1;
    }
    WeightedPointCloud cloud;
    cloud.dim = dim;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string field;
        std::vector<double> vals;
        while (std::getline(row, field, ',')) vals.push_back(std::stod(field));
        if (static_cast<int>(vals.size()) != dim + 1)
            throw std::runtime_error("bad cloud CSV row in " + path);
        cloud.points.insert(cloud.points.end(), vals.begin(), vals.end() - 1);
        cloud.weights.push_back(vals.back());
    }
    return cloud;
}

} // namespace kaclab
