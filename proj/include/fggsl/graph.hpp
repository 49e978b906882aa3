#pragma once

#include "fggsl/autodiff.hpp"

#include <cstdint>
#include <vector>

namespace fggsl {

using ad::Matrix;
using ad::IndexPair;

/// Degree clamp used by every normalized Laplacian in the library.
inline constexpr double kDegreeEps = 1e-8;

struct Split {
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;
};

/// Undirected attributed graph with one-hot labels and evaluation splits.
struct LabeledGraph {
    Matrix adjacency;  // N x N, symmetric, nonnegative, zero diagonal
    Matrix features;   // N x F
    Matrix labels;     // N x C, one-hot rows
    std::vector<Split> splits;

    int num_nodes() const { return static_cast<int>(adjacency.rows()); }
    int num_features() const { return static_cast<int>(features.cols()); }
    int num_classes() const { return static_cast<int>(labels.cols()); }

    /// Argmax of each label row.
    std::vector<int> label_index() const;
    /// Undirected edges (i < j) with weight strictly above `threshold`.
    std::vector<IndexPair> edges(double threshold = 0.0) const;

    /// Throws ValidationError describing the first violated invariant.
    void validate() const;
};

/// Checks one split against a node count: in range, disjoint, non-empty sets.
void validate_split(const Split& split, int num_nodes);

/// Row argmax with ties resolved toward the lowest column.
int argmax_row(const Matrix& m, Eigen::Index row);

/// Undirected edges (i < j) of a symmetric weight matrix above `threshold`.
std::vector<IndexPair> upper_edges(const Matrix& adjacency, double threshold = 0.0);

/// L = I - D^{-1/2} W D^{-1/2} with degrees clamped at eps. Isolated nodes get
/// identity rows. Throws ContractError for asymmetric (> 1e-9) or negative input.
Matrix normalized_laplacian(const Matrix& weights, double eps = kDegreeEps);

/// Differentiable variant for tape-tracked weights (same conventions).
ad::Tensor normalized_laplacian(const ad::Tensor& weights, double eps = kDegreeEps);

/// Fraction of undirected edges with weight > edge_threshold whose endpoints
/// carry different argmax labels.
double heterophily_ratio(const Matrix& adjacency, const Matrix& labels, double edge_threshold = 0.0);

struct SpectralDecomposition {
    Eigen::VectorXd eigenvalues;  // ascending
    Matrix eigenvectors;          // columns, orthonormal, sign-normalized
};

inline constexpr int kJacobiMaxSweeps = 50;

/// Cyclic Jacobi eigensolver. Iterates until every off-diagonal magnitude is
/// below `tol`; throws NumericError after kJacobiMaxSweeps sweeps.
SpectralDecomposition symmetric_eig(const Matrix& m, double tol = 1e-12);

/// Flips each column so its first component with |x| > 1e-12 is positive.
void sign_normalize_columns(Matrix& vectors);

/// Largest singular value of an arbitrary matrix.
double spectral_norm(const Matrix& m);

/// Spectral norm of (a - b) for symmetric a, b: the operator distance at the
/// identity node relabeling.
double operator_distance(const Matrix& a, const Matrix& b);

struct Perturbation {
    Matrix perturbed;  // l + e
    Matrix error;      // symmetric, spectral norm == magnitude
    double delta = 0;  // (||U - V||_2 + 1)^2 - 1
};

/// Adds a random symmetric perturbation of exact spectral norm `magnitude`.
/// The random direction depends only on `seed`, so different magnitudes with the
/// same seed are rescalings of the same matrix.
Perturbation perturb_laplacian(const Matrix& l, double magnitude, std::uint64_t seed);

/// Eigenvector misalignment between two symmetric matrices, using ascending,
/// sign-normalized eigenvectors.
double eigenvector_misalignment(const Matrix& a, const Matrix& b);

}  // namespace fggsl
