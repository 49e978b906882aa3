#pragma once

// Empirical checks of the structural-loss and filter-bank stability bounds,
// similarity-distribution reports, kernel-response tables and learned-graph audits.

#include "fggsl/graph.hpp"
#include "fggsl/model.hpp"
#include "fggsl/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fggsl {

// ---- structural-loss stability -------------------------------------------------------

struct Prop1Record {
    int i = 0;
    int j = 0;
    double lhs = 0;    // |cos(y_i, y_j) - cos(yhat_i, yhat_j)|
    double eps_i = 0;  // ||y_i - yhat_i||
    double eps_j = 0;
    double rhs = 0;    // 2 sqrt(C) (eps_i + eps_j)
    bool holds = true;
};

inline constexpr double kProp1Tolerance = 1e-12;

std::vector<Prop1Record> prop1_check(const Matrix& y, const Matrix& yhat, std::span<const IndexPair> pairs);

struct Prop1Sweep {
    std::size_t draws = 0;
    std::size_t violations = 0;
    double max_lhs_over_rhs = 0;
};

/// Random one-hot y against random softmax predictions, C uniform in [c_min, c_max].
Prop1Sweep prop1_sweep(std::size_t draws, int c_min, int c_max, std::uint64_t seed);

// ---- filter-bank stability -----------------------------------------------------------

struct BoundProbeRecord {
    double epsilon = 0;
    double observed_distance = 0;
    double bound_value = 0;  // 2^(j-1) (1 + delta sqrt(N)) eps (1 + 10 eps)
    double delta = 0;
    int j = 2;
    int trial = 0;
    KernelMode mode = KernelMode::fig3;
    BankKind kind = BankKind::low;
    bool holds_with_slack = true;
};

struct StabilityProbeConfig {
    std::vector<double> epsilons{1e-3, 1e-2};
    int j = 2;
    KernelMode mode = KernelMode::fig3;
    BankKind kind = BankKind::low;
    int trials = 50;
    std::uint64_t seed = 0;
};

/// h_j(L) as a dense matrix through the eigendecomposition, U h(Lambda) U^T.
Matrix spectral_filter_matrix(const Matrix& l, int j, KernelMode mode, BankKind kind);

/// Perturbs `l` (trial t uses one random direction for every epsilon) and
/// compares spectral filter matrices before and after.
std::vector<BoundProbeRecord> stability_probe(const Matrix& l, const StabilityProbeConfig& config);

/// Least-squares slope of log(mean distance) against log(epsilon).
double loglog_slope(std::span<const BoundProbeRecord> records);

/// Normalized Laplacian of a random weighted graph: each pair is an edge with
/// probability p and weight uniform in (0, 1].
Matrix random_laplacian(int n, double p, std::uint64_t seed);

// ---- similarity distributions ----------------------------------------------------------

struct SimilarityHistogram {
    std::vector<double> bin_edges;  // bins + 1 edges over [-1, 1]
    std::vector<std::size_t> intra_counts;
    std::vector<std::size_t> inter_counts;
    std::size_t intra_pairs = 0;
    std::size_t inter_pairs = 0;
    double intra_mean = 0;
    double inter_mean = 0;
    bool exhaustive = false;  // every pair enumerated rather than sampled
    std::vector<int> skipped_classes;  // fewer than two members
    std::size_t zero_rows_excluded = 0;

    double gap() const { return intra_mean - inter_mean; }
};

inline constexpr std::size_t kDefaultMaxPairs = 20000;

/// Cosine similarities of intra-class and inter-class node pairs. Uses every
/// pair when a group has at most max_pairs of them, otherwise a uniform sample.
SimilarityHistogram similarity_histogram(const Matrix& vectors, const Matrix& labels,
                                         std::size_t max_pairs = kDefaultMaxPairs, int bins = 40,
                                         std::uint64_t seed = 0);

// ---- kernel responses ----------------------------------------------------------------------

struct ResponseRow {
    double lambda = 0;
    int j = 2;
    BankKind kind = BankKind::low;
    double value = 0;
};

std::vector<ResponseRow> spectral_response_export(int J, KernelMode mode, int grid_points);

// ---- learned graphs ----------------------------------------------------------------------------

/// Binarizes each weight matrix at `threshold` (w > threshold keeps the edge)
/// and reports edge counts and heterophily ratios.
EdgeAudit learned_edge_audit(const Matrix& w1, const Matrix& w2, const Matrix& labels, double threshold = 0.5);

/// Learned mask weights of a trained model (forward pass without a gradient).
std::pair<Matrix, Matrix> learned_masks(FgGSLModel& model, const ModelInputs& inputs);
/// Filter-bank embedding H of a trained model.
Matrix embedding(FgGSLModel& model, const ModelInputs& inputs);

// ---- outputs ------------------------------------------------------------------------------------

void write_csv(const std::filesystem::path& path, std::span<const BoundProbeRecord> records);
void write_csv(const std::filesystem::path& path, std::span<const Prop1Record> records);
void write_csv(const std::filesystem::path& path, std::span<const ResponseRow> rows);
void write_csv(const std::filesystem::path& path, const SimilarityHistogram& h);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

nlohmann::json to_json(const SimilarityHistogram& h);
nlohmann::json to_json(const EdgeAudit& a);

}  // namespace fggsl
