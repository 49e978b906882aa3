#pragma once

#include "fggsl/dataset.hpp"
#include "fggsl/graph.hpp"

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

namespace fggsl::test {

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Matrix m(r, c);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = g(rng);
    return m;
}

inline Matrix random_adjacency(int n, double p, std::mt19937_64& rng, bool weighted = false) {
    std::bernoulli_distribution edge(p);
    std::uniform_real_distribution<double> w(0.1, 1.0);
    Matrix a = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (edge(rng)) a(i, j) = a(j, i) = weighted ? w(rng) : 1.0;
    return a;
}

inline Matrix one_hot(const std::vector<int>& labels, int classes) {
    Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    return y;
}

// Small labeled graph with every class present and one split that covers all nodes.
inline LabeledGraph random_graph(int n, int f, int c, std::mt19937_64& rng, double p = 0.4) {
    LabeledGraph g;
    g.adjacency = random_adjacency(n, p, rng);
    g.features = random_matrix(n, f, rng);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) labels[i] = i % c;
    g.labels = one_hot(labels, c);
    Split s;
    for (int i = 0; i < n; ++i) (i % 3 == 0 ? s.test : i % 3 == 1 ? s.val : s.train).push_back(i);
    g.splits = {s};
    return g;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("fggsl_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

}  // namespace fggsl::test
