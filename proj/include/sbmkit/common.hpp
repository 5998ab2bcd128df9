#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sbm {

using NodeId = std::int32_t;

/// Unordered dyad stored canonically with first < second.
struct Dyad {
    NodeId first;
    NodeId second;

    friend bool operator==(const Dyad&, const Dyad&) = default;
    friend auto operator<=>(const Dyad&, const Dyad&) = default;
};

/// Canonical ordering of a node pair: (min{u,v}, max{u,v}).
inline Dyad pair_key(NodeId u, NodeId v) {
    if (u == v) throw std::invalid_argument("pair_key: self-pair " + std::to_string(u));
    return u < v ? Dyad{u, v} : Dyad{v, u};
}

/// Linear index of dyad (i,j), i<j, into the strict upper triangle of an
/// I x I matrix, rows concatenated.
inline std::size_t dyad_index(NodeId i, NodeId j, NodeId node_count) {
    const auto n = static_cast<std::size_t>(node_count);
    const auto a = static_cast<std::size_t>(i);
    const auto b = static_cast<std::size_t>(j);
    return a * n - a * (a + 1) / 2 + (b - a - 1);
}

inline std::size_t dyad_count(NodeId node_count) {
    const auto n = static_cast<std::size_t>(node_count);
    return n * (n - 1) / 2;
}

/// Symmetric K x K matrix stored as its upper triangle (k <= l), row-major.
template <typename T>
class UpperTri {
  public:
    UpperTri() = default;
    explicit UpperTri(int dim, T fill = T{})
        : dim_(dim), data_(static_cast<std::size_t>(dim) * (dim + 1) / 2, fill) {}

    int dim() const { return dim_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(int k, int l) { return data_[tri_index(k, l)]; }
    const T& operator()(int k, int l) const { return data_[tri_index(k, l)]; }

    /// Accessor that accepts either ordering of (k,l).
    T& at_pair(int k, int l) { return k <= l ? (*this)(k, l) : (*this)(l, k); }
    const T& at_pair(int k, int l) const { return k <= l ? (*this)(k, l) : (*this)(l, k); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    void fill(T value) { data_.assign(data_.size(), value); }

    friend bool operator==(const UpperTri&, const UpperTri&) = default;

  private:
    std::size_t tri_index(int k, int l) const {
        const auto kk = static_cast<std::size_t>(k);
        const auto ll = static_cast<std::size_t>(l);
        return kk * dim_ - kk * (kk - 1) / 2 + (ll - kk);
    }

    int dim_ = 0;
    std::vector<T> data_;
};

/// Dense row-major matrix; just enough for soft marginals and co-clustering.
template <typename T>
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    T* row(std::size_t r) { return data_.data() + r * cols_; }
    const T* row(std::size_t r) const { return data_.data() + r * cols_; }

    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    void fill(const T& value) { std::fill(data_.begin(), data_.end(), value); }

    friend bool operator==(const Matrix&, const Matrix&) = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

/// Malformed input file; carries the 1-based line number.
class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const { return line_; }

  private:
    std::size_t line_;
};

/// Invalid run configuration (bad grid, empty fold, conflicting flags, ...).
class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sbm
