#include "sbmkit/network.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sbmkit/rng.hpp"

namespace sbm {

namespace {

void sort_unique(std::vector<NodeId>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

bool contains_sorted(std::span<const NodeId> v, NodeId x) {
    return std::binary_search(v.begin(), v.end(), x);
}

}  // namespace

Network::Network(NodeId node_count, std::span<const Dyad> edges, std::span<const Dyad> masked,
                 NodeId bitmap_threshold)
    : node_count_(node_count),
      adjacency_(static_cast<std::size_t>(node_count)),
      masked_(static_cast<std::size_t>(node_count)) {
    if (node_count <= 0) throw std::invalid_argument("Network: node_count must be positive");

    auto check = [&](const Dyad& d, const char* what) {
        if (d.first < 0 || d.second >= node_count || d.first >= d.second)
            throw std::invalid_argument(std::string("Network: invalid ") + what + " (" +
                                        std::to_string(d.first) + "," + std::to_string(d.second) + ")");
    };

    for (const Dyad& d : masked) {
        check(d, "masked dyad");
        masked_[static_cast<std::size_t>(d.first)].push_back(d.second);
        masked_[static_cast<std::size_t>(d.second)].push_back(d.first);
    }
    for (auto& v : masked_) sort_unique(v);
    for (NodeId i = 0; i < node_count; ++i)
        for (NodeId j : masked_[static_cast<std::size_t>(i)])
            if (j > i) ++masked_count_;

    const bool use_bitmap = node_count <= bitmap_threshold;
    if (use_bitmap) edge_bits_.assign((dyad_count(node_count) + 63) / 64, 0);

    for (const Dyad& d : edges) {
        check(d, "edge");
        if (contains_sorted(masked_[static_cast<std::size_t>(d.first)], d.second))
            continue;  // masked dyads carry no observed value
        adjacency_[static_cast<std::size_t>(d.first)].push_back(d.second);
        adjacency_[static_cast<std::size_t>(d.second)].push_back(d.first);
    }
    for (auto& v : adjacency_) sort_unique(v);
    for (NodeId i = 0; i < node_count; ++i) {
        for (NodeId j : adjacency_[static_cast<std::size_t>(i)]) {
            if (j <= i) continue;
            ++edge_count_;
            if (use_bitmap) {
                const std::size_t idx = dyad_index(i, j, node_count);
                edge_bits_[idx >> 6] |= std::uint64_t{1} << (idx & 63);
            }
        }
    }
}

bool Network::is_edge(NodeId u, NodeId v) const {
    if (u == v) return false;
    const Dyad d = pair_key(u, v);
    if (!edge_bits_.empty()) {
        const std::size_t idx = dyad_index(d.first, d.second, node_count_);
        return (edge_bits_[idx >> 6] >> (idx & 63)) & 1;
    }
    return contains_sorted(adjacency_[static_cast<std::size_t>(d.first)], d.second);
}

bool Network::is_masked(NodeId u, NodeId v) const {
    const Dyad d = pair_key(u, v);
    return contains_sorted(masked_[static_cast<std::size_t>(d.first)], d.second);
}

std::vector<Dyad> Network::edges() const {
    std::vector<Dyad> out;
    out.reserve(edge_count_);
    for (NodeId i = 0; i < node_count_; ++i)
        for (NodeId j : adjacency_[static_cast<std::size_t>(i)])
            if (j > i) out.push_back({i, j});
    return out;
}

std::vector<Dyad> Network::masked_dyads() const {
    std::vector<Dyad> out;
    out.reserve(masked_count_);
    for (NodeId i = 0; i < node_count_; ++i)
        for (NodeId j : masked_[static_cast<std::size_t>(i)])
            if (j > i) out.push_back({i, j});
    return out;
}

Network Network::with_mask(std::span<const Dyad> pairs) const {
    std::vector<Dyad> mask = masked_dyads();
    mask.insert(mask.end(), pairs.begin(), pairs.end());
    const NodeId threshold = edge_bits_.empty() ? 0 : std::max(node_count_, kDefaultBitmapThreshold);
    return Network(node_count_, edges(), mask, threshold);
}

LoadedNetwork load_edge_list(const std::string& path, bool one_indexed) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open edge list: " + path);

    std::vector<std::pair<std::int64_t, std::int64_t>> raw;
    std::int64_t declared_nodes = -1;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t pos = line.find_first_not_of(" \t\r");
        if (pos == std::string::npos) continue;
        if (line[pos] == '#') {
            const auto eq = line.find("nodes=");
            if (eq != std::string::npos) {
                std::int64_t n = 0;
                const char* b = line.data() + eq + 6;
                auto [p, ec] = std::from_chars(b, line.data() + line.size(), n);
                if (ec != std::errc{} || n <= 0)
                    throw ParseError("bad node-count header", lineno);
                declared_nodes = n;
            }
            continue;
        }
        std::istringstream ss(line);
        std::int64_t u, v;
        if (!(ss >> u >> v)) throw ParseError("expected two integers", lineno);
        std::string extra;
        if (ss >> extra) throw ParseError("trailing token '" + extra + "'", lineno);
        if (u == v) throw ParseError("self-loop " + std::to_string(u), lineno);
        if (one_indexed && (u < 1 || v < 1)) throw ParseError("node id below 1", lineno);
        if (!one_indexed && (u < 0 || v < 0)) throw ParseError("negative node id", lineno);
        raw.emplace_back(u, v);
    }

    // Dense when the ids are exactly 1..I (or 0..I-1), possibly extended by
    // a header; otherwise re-index in sorted order.
    std::vector<std::int64_t> ids;
    ids.reserve(raw.size() * 2);
    for (auto [u, v] : raw) {
        ids.push_back(u);
        ids.push_back(v);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

    const std::int64_t base = one_indexed ? 1 : 0;
    std::int64_t max_id = ids.empty() ? base - 1 : ids.back();
    bool dense = std::cmp_equal(ids.size(), max_id - base + 1);
    if (declared_nodes > 0) {
        if (max_id - base + 1 > declared_nodes)
            throw std::runtime_error("edge list id exceeds declared node count");
        max_id = declared_nodes + base - 1;
        // header pins the id space, so keep identity mapping
        dense = true;
    }
    if (ids.empty() && declared_nodes <= 0)
        throw std::runtime_error("edge list is empty and declares no node count: " + path);

    LoadedNetwork out;
    NodeId node_count;
    std::vector<Dyad> dyads;
    dyads.reserve(raw.size());
    if (dense) {
        node_count = static_cast<NodeId>(max_id - base + 1);
        out.original_ids.resize(static_cast<std::size_t>(node_count));
        for (NodeId i = 0; i < node_count; ++i)
            out.original_ids[static_cast<std::size_t>(i)] = base + i;
        for (auto [u, v] : raw)
            dyads.push_back(pair_key(static_cast<NodeId>(u - base), static_cast<NodeId>(v - base)));
    } else {
        node_count = static_cast<NodeId>(ids.size());
        out.original_ids = ids;
        auto index_of = [&](std::int64_t id) {
            return static_cast<NodeId>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
        };
        for (auto [u, v] : raw) dyads.push_back(pair_key(index_of(u), index_of(v)));
    }
    out.net = Network(node_count, dyads);
    return out;
}

void write_edge_list(const std::string& path, const Network& net, bool one_indexed) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write edge list: " + path);
    const int base = one_indexed ? 1 : 0;
    out << "# nodes=" << net.node_count() << "\n";
    for (const Dyad& d : net.edges()) out << d.first + base << " " << d.second + base << "\n";
    if (!out) throw std::runtime_error("short write: " + path);
}

namespace {

std::vector<Dyad> observed_dyads_of(const Network& net) {
    std::vector<Dyad> out;
    out.reserve(net.observed_dyad_count());
    for (NodeId i = 0; i < net.node_count(); ++i)
        for (NodeId j = i + 1; j < net.node_count(); ++j)
            if (net.is_observed(i, j)) out.push_back({i, j});
    return out;
}

HoldoutSplit make_split(const Network& net, std::vector<Dyad> test, int fold, std::uint64_t seed) {
    HoldoutSplit split;
    std::sort(test.begin(), test.end());
    split.test_pairs.reserve(test.size());
    for (const Dyad& d : test)
        split.test_pairs.push_back({d.first, d.second, net.is_edge(d.first, d.second)});
    split.train = net.with_mask(test);
    split.fold_id = fold;
    split.seed = seed;
    return split;
}

}  // namespace

std::vector<HoldoutSplit> make_holdout(const Network& net, double fraction, int folds,
                                       std::uint64_t seed, bool balanced) {
    if (folds < 1) throw ConfigError("make_holdout: folds must be >= 1");
    if (folds == 1 && (fraction <= 0.0 || fraction >= 1.0))
        throw ConfigError("make_holdout: fraction must lie in (0,1)");

    std::vector<Dyad> all = observed_dyads_of(net);
    std::vector<std::vector<Dyad>> strata;
    if (balanced) {
        strata.resize(2);
        for (const Dyad& d : all)
            strata[net.is_edge(d.first, d.second) ? 0 : 1].push_back(d);
    } else {
        strata.push_back(std::move(all));
    }

    Rng rng(seed, /*stream=*/0x486f6c64);  // "Hold"
    std::vector<std::vector<Dyad>> fold_sets(static_cast<std::size_t>(folds));
    for (auto& stratum : strata) {
        rng.shuffle(stratum);
        if (folds == 1) {
            const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(stratum.size())));
            if (take == 0 && !stratum.empty())
                throw ConfigError("make_holdout: fraction leaves an empty test set");
            fold_sets[0].insert(fold_sets[0].end(), stratum.begin(), stratum.begin() + static_cast<std::ptrdiff_t>(take));
        } else {
            for (std::size_t idx = 0; idx < stratum.size(); ++idx)
                fold_sets[idx % static_cast<std::size_t>(folds)].push_back(stratum[idx]);
        }
    }

    std::vector<HoldoutSplit> splits;
    splits.reserve(static_cast<std::size_t>(folds));
    for (int f = 0; f < folds; ++f) {
        if (fold_sets[static_cast<std::size_t>(f)].empty())
            throw ConfigError("make_holdout: fold " + std::to_string(f) + " is empty");
        splits.push_back(make_split(net, std::move(fold_sets[static_cast<std::size_t>(f)]), f, seed));
    }
    return splits;
}

void save_holdout(const std::string& path, const HoldoutSplit& split) {
    nlohmann::json j;
    j["fold"] = split.fold_id;
    j["seed"] = split.seed;
    auto& test = j["test"] = nlohmann::json::array();
    for (const TestPair& p : split.test_pairs)
        test.push_back({p.i + 1, p.j + 1, p.y ? 1 : 0});
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write holdout: " + path);
    out << j.dump(2) << "\n";
}

HoldoutSplit load_holdout(const std::string& path, const Network& base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open holdout: " + path);
    nlohmann::json j = nlohmann::json::parse(in);

    HoldoutSplit split;
    split.fold_id = j.at("fold").get<int>();
    split.seed = j.at("seed").get<std::uint64_t>();
    std::vector<Dyad> test;
    for (const auto& row : j.at("test")) {
        const auto i = row.at(0).get<NodeId>() - 1;
        const auto jj = row.at(1).get<NodeId>() - 1;
        split.test_pairs.push_back({i, jj, row.at(2).get<int>() != 0});
        test.push_back({i, jj});
    }
    split.train = base.with_mask(test);
    return split;
}

}  // namespace sbm
