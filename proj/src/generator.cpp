#include "sbmkit/generator.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sbmkit/rng.hpp"

namespace sbm {

namespace {

using nlohmann::json;

json tri_to_json(const UpperTri<double>& t) {
    json rows = json::array();
    for (int k = 0; k < t.dim(); ++k) {
        json row = json::array();
        for (int l = k; l < t.dim(); ++l) row.push_back(t(k, l));
        rows.push_back(std::move(row));
    }
    return rows;
}

UpperTri<double> tri_from_json(const json& rows) {
    const int dim = static_cast<int>(rows.size());
    UpperTri<double> t(dim);
    for (int k = 0; k < dim; ++k) {
        const json& row = rows.at(k);
        if (static_cast<int>(row.size()) != dim - k)
            throw ConfigError("theta rows must form an upper triangle");
        for (int l = k; l < dim; ++l) t(k, l) = row.at(l - k).get<double>();
    }
    return t;
}

}  // namespace

Labels GeneratorSpec::labels() const {
    Labels out;
    out.reserve(static_cast<std::size_t>(node_count));
    for (int k = 0; k < block_count(); ++k)
        out.insert(out.end(), static_cast<std::size_t>(block_sizes[k]), k);
    return out;
}

void GeneratorSpec::validate() const {
    if (node_count <= 0) throw ConfigError("generator: node_count must be positive");
    if (block_sizes.empty()) throw ConfigError("generator: block_sizes must be non-empty");
    for (NodeId m : block_sizes)
        if (m <= 0) throw ConfigError("generator: block sizes must be positive");
    const auto total = std::accumulate(block_sizes.begin(), block_sizes.end(), std::int64_t{0});
    if (total != node_count)
        throw ConfigError("generator: block_sizes must sum to node_count");
    if (theta.dim() != block_count())
        throw ConfigError("generator: theta dimension must match block count");
    for (int k = 0; k < theta.dim(); ++k)
        for (int l = k; l < theta.dim(); ++l) {
            const double p = theta(k, l);
            if (!(p >= 0.0 && p <= 1.0))
                throw ConfigError("generator: theta entries must lie in [0,1]");
        }
}

namespace {

Network sample_network(NodeId node_count, const Labels& labels,
                       const UpperTri<double>& theta, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Dyad> edges;
    for (NodeId i = 0; i < node_count; ++i) {
        const int ki = labels[static_cast<std::size_t>(i)];
        for (NodeId j = i + 1; j < node_count; ++j) {
            const double p = theta.at_pair(ki, labels[static_cast<std::size_t>(j)]);
            if (rng.bernoulli(p)) edges.push_back({i, j});
        }
    }
    return Network(node_count, edges);
}

}  // namespace

std::pair<Network, Labels> generate(const GeneratorSpec& spec) {
    spec.validate();
    Labels labels = spec.labels();
    Network net = sample_network(spec.node_count, labels, spec.theta, spec.seed);
    return {std::move(net), std::move(labels)};
}

Network resimulate_from_fit(const Labels& labels, const UpperTri<double>& theta_mean,
                            std::uint64_t seed) {
    if (labels.empty()) throw ConfigError("resimulate: labels must be non-empty");
    for (int k : labels)
        if (k < 0 || k >= theta_mean.dim())
            throw ConfigError("resimulate: label out of range for theta");
    return sample_network(static_cast<NodeId>(labels.size()), labels, theta_mean, seed);
}

GeneratorSpec generate_confusable(const GeneratorSpec& base, int target_block,
                                  std::pair<int, int> parents) {
    base.validate();
    const int K = base.block_count();
    const auto [p1, p2] = parents;
    if (target_block < 0 || target_block >= K || p1 < 0 || p1 >= K || p2 < 0 || p2 >= K)
        throw ConfigError("confusable: block index out of range");
    if (p1 == p2 || p1 == target_block || p2 == target_block)
        throw ConfigError("confusable: target and parent blocks must be distinct");

    GeneratorSpec out = base;
    for (int l = 0; l < K; ++l) {
        if (l == target_block) continue;
        const double v1 = (l == p1) ? base.theta(p1, p1) : base.theta.at_pair(p1, l);
        const double v2 = (l == p2) ? base.theta(p2, p2) : base.theta.at_pair(p2, l);
        out.theta.at_pair(target_block, l) = 0.5 * (v1 + v2);
    }
    out.theta(target_block, target_block) =
        0.5 * (base.theta(p1, p1) + base.theta(p2, p2));
    return out;
}

namespace {

GeneratorSpec preset_sim7_easy() {
    GeneratorSpec s;
    s.node_count = 350;
    s.block_sizes.assign(7, 50);
    s.theta = UpperTri<double>(7);
    const double diag[7] = {0.44, 0.52, 0.47, 0.55, 0.46, 0.50, 0.50};
    for (int k = 0; k < 7; ++k) s.theta(k, k) = diag[k];
    auto off = [&s](int k, int l, double v) { s.theta(k - 1, l - 1) = v; };
    off(1, 2, 0.06); off(1, 3, 0.03); off(1, 4, 0.10); off(1, 5, 0.04);
    off(1, 6, 0.08); off(1, 7, 0.14);
    off(2, 3, 0.09); off(2, 4, 0.02); off(2, 5, 0.12); off(2, 6, 0.05);
    off(2, 7, 0.06);
    off(3, 4, 0.05); off(3, 5, 0.08); off(3, 6, 0.11); off(3, 7, 0.10);
    off(4, 5, 0.07); off(4, 6, 0.03); off(4, 7, 0.11);
    off(5, 6, 0.05); off(5, 7, 0.16);
    off(6, 7, 0.04);
    s.seed = 20240117;
    return s;
}

GeneratorSpec preset_sim7_confusable() {
    GeneratorSpec s = generate_confusable(preset_sim7_easy(), 5, {4, 6});
    s.seed = 20240118;
    return s;
}

GeneratorSpec preset_imdb_resim() {
    GeneratorSpec s;
    s.block_sizes = {1167, 1030, 912, 807, 714, 632, 559, 495, 438, 388, 343, 304, 269,
                     238,  210, 186, 165, 146, 129, 114, 101, 89,  79,  70,  62};
    s.node_count = std::accumulate(s.block_sizes.begin(), s.block_sizes.end(), NodeId{0});
    const int K = s.block_count();
    s.theta = UpperTri<double>(K);
    for (int k = 0; k < K; ++k) {
        s.theta(k, k) = 0.16 + 0.012 * k;
        for (int l = k + 1; l < K; ++l)
            s.theta(k, l) = 0.0055 + 0.0011 * ((3 * k + 5 * l) % 9);
    }
    s.seed = 20240119;
    return s;
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"sim7-easy", "sim7-confusable", "imdb-resim"};
}

GeneratorSpec make_preset(const std::string& name) {
    if (name == "sim7-easy") return preset_sim7_easy();
    if (name == "sim7-confusable") return preset_sim7_confusable();
    if (name == "imdb-resim") return preset_imdb_resim();
    throw ConfigError("unknown preset: " + name);
}

void save_generator_spec(const std::string& path, const GeneratorSpec& spec) {
    spec.validate();
    json j;
    j["node_count"] = spec.node_count;
    j["block_sizes"] = spec.block_sizes;
    j["theta"] = tri_to_json(spec.theta);
    j["seed"] = spec.seed;
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

GeneratorSpec load_generator_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open generator spec: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("invalid generator spec json: " + std::string(e.what()));
    }
    GeneratorSpec spec;
    try {
        spec.node_count = j.at("node_count").get<NodeId>();
        spec.block_sizes = j.at("block_sizes").get<std::vector<NodeId>>();
        spec.theta = tri_from_json(j.at("theta"));
        spec.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ConfigError("invalid generator spec json: " + std::string(e.what()));
    }
    spec.validate();
    return spec;
}

}  // namespace sbm
