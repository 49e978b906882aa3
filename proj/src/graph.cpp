#include "fggsl/graph.hpp"

#include "fggsl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace fggsl {

namespace {

void require_square_symmetric(const Matrix& m, double tol, const char* what) {
    if (m.rows() != m.cols())
        throw DimensionError(std::string(what) + ": expected a square matrix, got " + ad::shape_str(m));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = i + 1; j < m.cols(); ++j)
            if (std::abs(m(i, j) - m(j, i)) > tol)
                throw ContractError(std::string(what) + ": matrix is not symmetric at (" + std::to_string(i) +
                                    "," + std::to_string(j) + ")");
}

}  // namespace

int argmax_row(const Matrix& m, Eigen::Index row) {
    int best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c)
        if (m(row, c) > m(row, best)) best = static_cast<int>(c);
    return best;
}

std::vector<int> LabeledGraph::label_index() const {
    std::vector<int> out(static_cast<std::size_t>(labels.rows()));
    for (Eigen::Index i = 0; i < labels.rows(); ++i) out[i] = argmax_row(labels, i);
    return out;
}

std::vector<IndexPair> upper_edges(const Matrix& adjacency, double threshold) {
    std::vector<IndexPair> out;
    for (Eigen::Index i = 0; i < adjacency.rows(); ++i)
        for (Eigen::Index j = i + 1; j < adjacency.cols(); ++j)
            if (adjacency(i, j) > threshold) out.emplace_back(static_cast<int>(i), static_cast<int>(j));
    return out;
}

std::vector<IndexPair> LabeledGraph::edges(double threshold) const { return upper_edges(adjacency, threshold); }

void validate_split(const Split& split, int num_nodes) {
    std::vector<char> seen(static_cast<std::size_t>(num_nodes), 0);
    auto check = [&](const std::vector<int>& set, const char* name) {
        if (set.empty()) throw ValidationError(std::string("split has an empty ") + name + " set");
        for (int idx : set) {
            if (idx < 0 || idx >= num_nodes)
                throw ValidationError(std::string(name) + " index " + std::to_string(idx) + " out of range [0, " +
                                      std::to_string(num_nodes) + ")");
            if (seen[idx]) throw ValidationError("node " + std::to_string(idx) + " appears twice across split sets");
            seen[idx] = 1;
        }
    };
    check(split.train, "train");
    check(split.val, "val");
    check(split.test, "test");
}

void LabeledGraph::validate() const {
    const auto n = adjacency.rows();
    if (adjacency.cols() != n) throw ValidationError("adjacency is not square: " + ad::shape_str(adjacency));
    if (features.rows() != n) throw ValidationError("feature rows do not match node count");
    if (labels.rows() != n) throw ValidationError("label rows do not match node count");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (adjacency(i, i) != 0.0) throw ValidationError("adjacency diagonal is nonzero at node " + std::to_string(i));
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (std::abs(adjacency(i, j) - adjacency(j, i)) > 1e-12)
                throw ValidationError("adjacency is not symmetric at (" + std::to_string(i) + "," + std::to_string(j) + ")");
            if (adjacency(i, j) < 0) throw ValidationError("negative edge weight");
        }
        int ones = 0;
        for (Eigen::Index c = 0; c < labels.cols(); ++c) {
            const double v = labels(i, c);
            if (v == 1.0) ++ones;
            else if (v != 0.0) { ones = -1; break; }
        }
        if (ones != 1) throw ValidationError("label row " + std::to_string(i) + " is not one-hot");
    }
    if (!features.allFinite()) throw ValidationError("features contain NaN or Inf");
    for (const Split& s : splits) validate_split(s, static_cast<int>(n));
}

Matrix normalized_laplacian(const Matrix& weights, double eps) {
    require_square_symmetric(weights, 1e-9, "normalized_laplacian");
    if ((weights.array() < 0).any()) throw ContractError("normalized_laplacian: negative weight");
    const Eigen::VectorXd deg = weights.rowwise().sum();
    const Eigen::VectorXd dinv = deg.unaryExpr([eps](double d) { return 1.0 / std::sqrt(std::max(d, eps)); });
    Matrix l = -(dinv.asDiagonal() * weights * dinv.asDiagonal());
    l.diagonal().array() += 1.0;
    return l;
}

ad::Tensor normalized_laplacian(const ad::Tensor& weights, double eps) {
    const Matrix& w = weights.value();
    if (w.rows() != w.cols())
        throw DimensionError("normalized_laplacian: expected a square matrix, got " + ad::shape_str(w));
    ad::Tape& tape = *weights.tape();
    ad::Tensor dinv = ad::rsqrt_clamped(ad::row_sums(weights), eps);
    ad::Tensor normalized = ad::scale_cols(ad::scale_rows(weights, dinv), dinv);
    ad::Tensor eye = tape.constant(Matrix::Identity(w.rows(), w.cols()));
    return ad::sub(eye, normalized);
}

double heterophily_ratio(const Matrix& adjacency, const Matrix& labels, double edge_threshold) {
    if (adjacency.rows() != adjacency.cols() || labels.rows() != adjacency.rows())
        throw DimensionError("heterophily_ratio: adjacency " + ad::shape_str(adjacency) + " vs labels " +
                             ad::shape_str(labels));
    std::size_t total = 0, cross = 0;
    for (Eigen::Index i = 0; i < adjacency.rows(); ++i) {
        const int li = argmax_row(labels, i);
        for (Eigen::Index j = i + 1; j < adjacency.cols(); ++j) {
            if (!(adjacency(i, j) > edge_threshold)) continue;
            ++total;
            if (argmax_row(labels, j) != li) ++cross;
        }
    }
    if (total == 0) throw ContractError("heterophily_ratio: graph has no edges above the threshold");
    return static_cast<double>(cross) / static_cast<double>(total);
}

void sign_normalize_columns(Matrix& vectors) {
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
        for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
            if (std::abs(vectors(r, c)) > 1e-12) {
                if (vectors(r, c) < 0) vectors.col(c) *= -1.0;
                break;
            }
        }
    }
}

SpectralDecomposition symmetric_eig(const Matrix& m, double tol) {
    require_square_symmetric(m, 1e-9, "symmetric_eig");
    const Eigen::Index n = m.rows();
    Matrix a = 0.5 * (m + m.transpose());
    Matrix v = Matrix::Identity(n, n);

    auto max_offdiag = [&]() {
        double best = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j) best = std::max(best, std::abs(a(i, j)));
        return best;
    };

    int sweep = 0;
    while (max_offdiag() >= tol) {
        if (sweep++ >= kJacobiMaxSweeps)
            throw NumericError("symmetric_eig: no convergence after " + std::to_string(kJacobiMaxSweeps) + " sweeps");
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });

    SpectralDecomposition out;
    out.eigenvalues.resize(n);
    out.eigenvectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.eigenvalues(k) = a(order[k], order[k]);
        out.eigenvectors.col(k) = v.col(order[k]);
    }
    sign_normalize_columns(out.eigenvectors);
    return out;
}

double spectral_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    const Matrix gram = m.transpose() * m;
    const auto eig = symmetric_eig(0.5 * (gram + gram.transpose()), 1e-14 * std::max(1.0, gram.norm()));
    return std::sqrt(std::max(0.0, eig.eigenvalues.maxCoeff()));
}

double operator_distance(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError("operator_distance: " + ad::shape_str(a) + " vs " + ad::shape_str(b));
    const Matrix diff = a - b;
    const auto eig = symmetric_eig(0.5 * (diff + diff.transpose()), 1e-14 * std::max(1.0, diff.norm()));
    return eig.eigenvalues.cwiseAbs().maxCoeff();
}

double eigenvector_misalignment(const Matrix& a, const Matrix& b) {
    const Matrix u = symmetric_eig(a).eigenvectors;
    const Matrix v = symmetric_eig(b).eigenvectors;
    const double gap = spectral_norm(u - v);
    return (gap + 1.0) * (gap + 1.0) - 1.0;
}

Perturbation perturb_laplacian(const Matrix& l, double magnitude, std::uint64_t seed) {
    if (magnitude < 0) throw ContractError("perturb_laplacian: magnitude must be >= 0");
    require_square_symmetric(l, 1e-9, "perturb_laplacian");
    const Eigen::Index n = l.rows();

    Matrix e = Matrix::Zero(n, n);
    if (magnitude > 0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i; j < n; ++j) e(i, j) = e(j, i) = gauss(rng);
        const double norm = operator_distance(e, Matrix::Zero(n, n));
        e *= magnitude / norm;
    }
    Perturbation out;
    out.perturbed = l + e;
    out.error = e;
    out.delta = eigenvector_misalignment(l, e);
    return out;
}

}  // namespace fggsl
