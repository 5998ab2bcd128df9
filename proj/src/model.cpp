#include "sbmkit/model.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "sbmkit/special.hpp"

namespace sbm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// x*log(y) with the 0*log(0) = 0 convention.
double xlogy(double x, double y) {
    if (x == 0.0) return 0.0;
    return x * std::log(y);
}

void check_labels(const Labels& labels, NodeId node_count, int K) {
    if (std::cmp_not_equal(labels.size(), node_count))
        throw std::invalid_argument("labels: wrong length");
    for (int z : labels)
        if (z < 0 || z >= K) throw std::invalid_argument("labels: value out of range");
}

}  // namespace

SufficientStats::SufficientStats(const Network& net, const Labels& labels, int K)
    : s_(K), masked_(K), m_(static_cast<std::size_t>(K), 0) {
    check_labels(labels, net.node_count(), K);
    for (NodeId i = 0; i < net.node_count(); ++i) {
        ++m_[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        for (NodeId j : net.neighbors(i))
            if (j > i)
                ++s_.at_pair(labels[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(j)]);
        for (NodeId j : net.masked_partners(i))
            if (j > i)
                ++masked_.at_pair(labels[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(j)]);
    }
}

void SufficientStats::move_node(const Network& net, Labels& labels, NodeId i, int to) {
    const int from = labels[static_cast<std::size_t>(i)];
    if (from == to) return;
    for (NodeId j : net.neighbors(i)) {
        const int lj = labels[static_cast<std::size_t>(j)];
        --s_.at_pair(from, lj);
        ++s_.at_pair(to, lj);
    }
    for (NodeId j : net.masked_partners(i)) {
        const int lj = labels[static_cast<std::size_t>(j)];
        --masked_.at_pair(from, lj);
        ++masked_.at_pair(to, lj);
    }
    --m_[static_cast<std::size_t>(from)];
    ++m_[static_cast<std::size_t>(to)];
    labels[static_cast<std::size_t>(i)] = to;
}

double log_joint(const SufficientStats& stats, const UpperTri<double>& theta,
                 std::span<const double> w, const Hyperparams& hp) {
    hp.validate();
    const int K = hp.K;
    double lp = 0.0;

    // likelihood and Beta prior, block pair by block pair
    const double log_beta_norm = -log_beta(hp.a, hp.b);
    for (int k = 0; k < K; ++k) {
        for (int l = k; l < K; ++l) {
            const double th = theta(k, l);
            const auto s = static_cast<double>(stats.s(k, l));
            const auto nf = static_cast<double>(stats.n(k, l)) - s;
            if ((s > 0 && th <= 0.0) || (nf > 0 && th >= 1.0)) return kNegInf;
            lp += xlogy(s, th) + xlogy(nf, 1.0 - th);
            lp += log_beta_norm + xlogy(hp.a - 1.0, th) + xlogy(hp.b - 1.0, 1.0 - th);
        }
    }

    // categorical prior given w, then the Dirichlet prior on w
    const double ak = hp.alpha / static_cast<double>(K);
    lp += log_gamma(hp.alpha) - static_cast<double>(K) * log_gamma(ak);
    for (int k = 0; k < K; ++k) {
        const auto mk = static_cast<double>(stats.m(k));
        const double wk = w[static_cast<std::size_t>(k)];
        if (mk > 0 && wk <= 0.0) return kNegInf;
        lp += xlogy(mk, wk) + xlogy(ak - 1.0, wk);
    }
    return lp;
}

double log_joint(const Network& net, const Labels& labels, const UpperTri<double>& theta,
                 std::span<const double> w, const Hyperparams& hp) {
    return log_joint(SufficientStats(net, labels, hp.K), theta, w, hp);
}

double collapsed_prior_predictive(std::span<const std::int64_t> m_minus_i, int k,
                                  const Hyperparams& hp) {
    std::int64_t total = 0;
    for (std::int64_t mk : m_minus_i) total += mk;
    const double ak = hp.alpha / static_cast<double>(hp.K);
    return (static_cast<double>(m_minus_i[static_cast<std::size_t>(k)]) + ak) /
           (static_cast<double>(total) + hp.alpha);
}

namespace {

nlohmann::json tri_to_json(const UpperTri<double>& t) {
    nlohmann::json out = nlohmann::json::array();
    for (int k = 0; k < t.dim(); ++k) {
        nlohmann::json row = nlohmann::json::array();
        for (int l = k; l < t.dim(); ++l) row.push_back(t(k, l));
        out.push_back(std::move(row));
    }
    return out;
}

UpperTri<double> tri_from_json(const nlohmann::json& j) {
    UpperTri<double> t(static_cast<int>(j.size()));
    for (int k = 0; k < t.dim(); ++k)
        for (int l = k; l < t.dim(); ++l)
            t(k, l) = j.at(static_cast<std::size_t>(k)).at(static_cast<std::size_t>(l - k)).get<double>();
    return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& cp) {
    nlohmann::json j;
    j["engine"] = cp.engine;
    j["seed"] = cp.seed;
    j["iteration"] = cp.iteration;
    j["node_count"] = cp.node_count;
    j["hyperparams"] = {{"a", cp.hp.a}, {"b", cp.hp.b}, {"alpha", cp.hp.alpha}, {"K", cp.hp.K}};
    if (cp.labels) j["labels"] = *cp.labels;
    if (cp.theta) j["theta"] = tri_to_json(*cp.theta);
    if (cp.w) j["w"] = *cp.w;
    if (cp.soft) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t i = 0; i < cp.soft->rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t k = 0; k < cp.soft->cols(); ++k) row.push_back((*cp.soft)(i, k));
            rows.push_back(std::move(row));
        }
        j["soft_marginals"] = std::move(rows);
    }
    if (cp.var_a) j["var_a"] = tri_to_json(*cp.var_a);
    if (cp.var_b) j["var_b"] = tri_to_json(*cp.var_b);
    if (cp.label_trace) j["label_trace"] = *cp.label_trace;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    nlohmann::json j = nlohmann::json::parse(in);

    Checkpoint cp;
    cp.engine = j.at("engine").get<std::string>();
    cp.seed = j.at("seed").get<std::uint64_t>();
    cp.iteration = j.at("iteration").get<std::int64_t>();
    cp.node_count = j.at("node_count").get<NodeId>();
    const auto& hp = j.at("hyperparams");
    cp.hp = {hp.at("a").get<double>(), hp.at("b").get<double>(), hp.at("alpha").get<double>(),
             hp.at("K").get<int>()};
    if (j.contains("labels")) cp.labels = j["labels"].get<Labels>();
    if (j.contains("theta")) cp.theta = tri_from_json(j["theta"]);
    if (j.contains("w")) cp.w = j["w"].get<std::vector<double>>();
    if (j.contains("soft_marginals")) {
        const auto& rows = j["soft_marginals"];
        Matrix<double> soft(rows.size(), rows.empty() ? 0 : rows[0].size());
        for (std::size_t i = 0; i < soft.rows(); ++i)
            for (std::size_t k = 0; k < soft.cols(); ++k)
                soft(i, k) = rows[i][k].get<double>();
        cp.soft = std::move(soft);
    }
    if (j.contains("var_a")) cp.var_a = tri_from_json(j["var_a"]);
    if (j.contains("var_b")) cp.var_b = tri_from_json(j["var_b"]);
    if (j.contains("label_trace")) cp.label_trace = j["label_trace"].get<std::vector<Labels>>();
    return cp;
}

}  // namespace sbm
