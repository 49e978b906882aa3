#pragma once

#include "fggsl/graph.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fggsl {

namespace fs = std::filesystem;

struct DatasetBundle {
    LabeledGraph graph;
    std::string name;
    bool feature_normalized = false;
};

enum class CandidateMode { full, given, knn };

struct CandidateSpec {
    CandidateMode mode = CandidateMode::full;
    int k = 0;  // knn only

    /// Accepts "full", "given" or "knn:K".
    static CandidateSpec parse(const std::string& text);
    std::string str() const;
};

/// Edge superset from which the learnable masks carve the learned graphs.
struct CandidateGraph {
    Matrix adjacency;  // {0,1}, symmetric, zero diagonal
    CandidateSpec spec;

    std::vector<IndexPair> edges() const { return upper_edges(adjacency); }
};

// Node file: `id <TAB> f1,f2,...,fF <TAB> label`. Edge file: `src <TAB> dst`.
// `#` lines are comments. A leading column-header line (first token not an
// integer) is tolerated so the WebKB-style exports load unchanged.
LabeledGraph load_raw(const fs::path& node_file, const fs::path& edge_file);
void save_raw(const LabeledGraph& graph, const fs::path& node_file, const fs::path& edge_file);

// Split file: three non-comment lines holding the train, val and test index
// sets (whitespace- or comma-separated).
std::vector<Split> load_splits(std::span<const fs::path> split_files, int num_nodes);
void save_split(const Split& split, const fs::path& file);

/// Divides every nonzero row by its L1 norm; zero rows stay zero.
Matrix row_normalize(Matrix features);

struct SyntheticSpec {
    int n = 300;
    int classes = 3;
    double intra_p = 0.005;
    double inter_p = 0.05;
    double proto_noise = 1.0;
    int features = 16;
    int num_splits = 10;
    double train_frac = 0.48;
    double val_frac = 0.32;
    std::uint64_t seed = 0;
};

/// Balanced stochastic block model (node i has class i mod classes); features
/// are a per-class Gaussian prototype plus Gaussian noise of scale proto_noise.
LabeledGraph gen_synthetic(const SyntheticSpec& spec);

CandidateGraph candidate_graph(const LabeledGraph& graph, const CandidateSpec& spec);

/// Dataset directory layout:
///   node_feature_label.txt (or out1_node_feature_label.txt)
///   graph_edges.txt        (or out1_graph_edges.txt)
///   splits/*.txt           (natural filename order)
DatasetBundle load_dataset_dir(const fs::path& dir, bool normalize_features = true);
void write_dataset_dir(const LabeledGraph& graph, const fs::path& dir);

}  // namespace fggsl
