#include "fggsl/dataset.hpp"

#include "fggsl/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace fggsl {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_int(const std::string& tok, long long& out) {
    const std::string t = trim(tok);
    if (t.empty()) return false;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    return ec == std::errc() && p == t.data() + t.size();
}

bool parse_double(const std::string& tok, double& out) {
    const std::string t = trim(tok);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size();
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

std::ifstream open_in(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    return in;
}

std::string where(const fs::path& p, std::size_t line) { return p.string() + ":" + std::to_string(line) + ": "; }

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

// ---- CandidateSpec --------------------------------------------------------------------

CandidateSpec CandidateSpec::parse(const std::string& text) {
    if (text == "full") return {CandidateMode::full, 0};
    if (text == "given") return {CandidateMode::given, 0};
    if (text.rfind("knn:", 0) == 0) {
        long long k = 0;
        if (!parse_int(text.substr(4), k) || k < 1) throw ValidationError("candidate: bad knn size in '" + text + "'");
        return {CandidateMode::knn, static_cast<int>(k)};
    }
    throw ValidationError("candidate: expected full, given or knn:K, got '" + text + "'");
}

std::string CandidateSpec::str() const {
    switch (mode) {
        case CandidateMode::full: return "full";
        case CandidateMode::given: return "given";
        case CandidateMode::knn: return "knn:" + std::to_string(k);
    }
    return "?";
}

// ---- raw files --------------------------------------------------------------------------

LabeledGraph load_raw(const fs::path& node_file, const fs::path& edge_file) {
    struct Row {
        long long id;
        std::vector<double> feats;
        long long label;
    };
    std::vector<Row> rows;
    {
        std::ifstream in = open_in(node_file);
        std::string line;
        std::size_t lineno = 0;
        bool seen_data = false;
        std::size_t width = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            const auto cols = split_on(t, '\t');
            long long id = 0;
            if (!seen_data && cols.size() >= 1 && !parse_int(cols[0], id)) {
                seen_data = true;  // column header
                continue;
            }
            seen_data = true;
            if (cols.size() != 3) throw ParseError(where(node_file, lineno) + "expected 3 tab-separated fields");
            if (!parse_int(cols[0], id)) throw ParseError(where(node_file, lineno) + "bad node id '" + cols[0] + "'");
            Row r{id, {}, 0};
            for (const auto& f : split_on(trim(cols[1]), ',')) {
                double v = 0;
                if (!parse_double(f, v) || !std::isfinite(v))
                    throw ParseError(where(node_file, lineno) + "bad feature value '" + f + "'");
                r.feats.push_back(v);
            }
            if (!parse_int(cols[2], r.label) || r.label < 0)
                throw ParseError(where(node_file, lineno) + "bad label '" + cols[2] + "'");
            if (rows.empty()) width = r.feats.size();
            else if (r.feats.size() != width)
                throw ParseError(where(node_file, lineno) + "inconsistent feature length " +
                                 std::to_string(r.feats.size()) + " (expected " + std::to_string(width) + ")");
            rows.push_back(std::move(r));
        }
    }
    if (rows.empty()) throw ParseError(node_file.string() + ": no nodes");

    std::unordered_map<long long, int> index;
    long long max_label = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!index.emplace(rows[i].id, static_cast<int>(i)).second)
            throw ParseError(node_file.string() + ": duplicate node id " + std::to_string(rows[i].id));
        max_label = std::max(max_label, rows[i].label);
    }

    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto f = static_cast<Eigen::Index>(rows[0].feats.size());
    LabeledGraph g;
    g.features.resize(n, f);
    g.labels = Matrix::Zero(n, max_label + 1);
    g.adjacency = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < f; ++c) g.features(i, c) = rows[i].feats[c];
        g.labels(i, rows[i].label) = 1.0;
    }

    std::ifstream in = open_in(edge_file);
    std::string line;
    std::size_t lineno = 0;
    bool seen_data = false;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto cols = split_ws(t);
        long long a = 0, b = 0;
        if (!seen_data && !cols.empty() && !parse_int(cols[0], a)) {
            seen_data = true;
            continue;
        }
        seen_data = true;
        if (cols.size() != 2 || !parse_int(cols[0], a) || !parse_int(cols[1], b))
            throw ParseError(where(edge_file, lineno) + "expected 'src<TAB>dst'");
        auto ia = index.find(a), ib = index.find(b);
        if (ia == index.end()) throw ParseError(where(edge_file, lineno) + "unknown node id " + std::to_string(a));
        if (ib == index.end()) throw ParseError(where(edge_file, lineno) + "unknown node id " + std::to_string(b));
        if (ia->second == ib->second) continue;
        g.adjacency(ia->second, ib->second) = 1.0;
        g.adjacency(ib->second, ia->second) = 1.0;
    }
    return g;
}

void save_raw(const LabeledGraph& graph, const fs::path& node_file, const fs::path& edge_file) {
    std::ofstream nodes(node_file);
    if (!nodes) throw IoError("cannot write " + node_file.string());
    const auto labels = graph.label_index();
    for (int i = 0; i < graph.num_nodes(); ++i) {
        nodes << i << '\t';
        for (int c = 0; c < graph.num_features(); ++c) {
            if (c) nodes << ',';
            nodes << format_double(graph.features(i, c));
        }
        nodes << '\t' << labels[i] << '\n';
    }
    std::ofstream edges(edge_file);
    if (!edges) throw IoError("cannot write " + edge_file.string());
    for (const auto& [i, j] : graph.edges()) edges << i << '\t' << j << '\n';
    if (!nodes || !edges) throw IoError("write failed for " + node_file.string());
}

// ---- splits --------------------------------------------------------------------------------

std::vector<Split> load_splits(std::span<const fs::path> split_files, int num_nodes) {
    std::vector<Split> out;
    for (const fs::path& p : split_files) {
        std::ifstream in = open_in(p);
        std::vector<std::vector<int>> sets;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = trim(line);
            if (!t.empty() && t[0] == '#') continue;
            if (t.empty() && sets.size() >= 3) continue;
            std::replace(t.begin(), t.end(), ',', ' ');
            std::vector<int> set;
            for (const auto& tok : split_ws(t)) {
                long long v = 0;
                if (!parse_int(tok, v)) throw ParseError(where(p, lineno) + "bad index '" + tok + "'");
                set.push_back(static_cast<int>(v));
            }
            sets.push_back(std::move(set));
        }
        if (sets.size() != 3)
            throw ValidationError(p.string() + ": expected 3 index-set lines, found " + std::to_string(sets.size()));
        Split s{std::move(sets[0]), std::move(sets[1]), std::move(sets[2])};
        try {
            validate_split(s, num_nodes);
        } catch (const ValidationError& e) {
            throw ValidationError(p.string() + ": " + e.what());
        }
        out.push_back(std::move(s));
    }
    return out;
}

void save_split(const Split& split, const fs::path& file) {
    std::ofstream out(file);
    if (!out) throw IoError("cannot write " + file.string());
    for (const auto* set : {&split.train, &split.val, &split.test}) {
        for (std::size_t k = 0; k < set->size(); ++k) out << (k ? " " : "") << (*set)[k];
        out << '\n';
    }
}

// ---- preprocessing / generation --------------------------------------------------------------

Matrix row_normalize(Matrix features) {
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        const double l1 = features.row(i).cwiseAbs().sum();
        if (l1 > 0) features.row(i) /= l1;
    }
    return features;
}

LabeledGraph gen_synthetic(const SyntheticSpec& spec) {
    if (spec.classes < 1 || spec.n < spec.classes) throw ContractError("gen_synthetic: need n >= classes >= 1");
    if (spec.intra_p < 0 || spec.intra_p > 1 || spec.inter_p < 0 || spec.inter_p > 1)
        throw ContractError("gen_synthetic: edge probabilities must lie in [0, 1]");
    if (spec.features < 1 || spec.proto_noise < 0) throw ContractError("gen_synthetic: bad feature settings");
    if (spec.train_frac <= 0 || spec.val_frac <= 0 || spec.train_frac + spec.val_frac >= 1)
        throw ContractError("gen_synthetic: split fractions must leave a non-empty test set");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const int n = spec.n;
    LabeledGraph g;
    g.labels = Matrix::Zero(n, spec.classes);
    for (int i = 0; i < n; ++i) g.labels(i, i % spec.classes) = 1.0;

    g.adjacency = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double p = (i % spec.classes == j % spec.classes) ? spec.intra_p : spec.inter_p;
            if (unif(rng) < p) g.adjacency(i, j) = g.adjacency(j, i) = 1.0;
        }

    Matrix protos(spec.classes, spec.features);
    for (Eigen::Index k = 0; k < protos.size(); ++k) protos.data()[k] = gauss(rng);
    g.features.resize(n, spec.features);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < spec.features; ++c)
            g.features(i, c) = protos(i % spec.classes, c) + spec.proto_noise * gauss(rng);

    const int n_train = std::max(1, static_cast<int>(std::floor(spec.train_frac * n)));
    const int n_val = std::max(1, static_cast<int>(std::floor(spec.val_frac * n)));
    if (n_train + n_val >= n) throw ContractError("gen_synthetic: too few nodes for the requested split sizes");
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int s = 0; s < spec.num_splits; ++s) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Split sp;
        sp.train.assign(perm.begin(), perm.begin() + n_train);
        sp.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
        sp.test.assign(perm.begin() + n_train + n_val, perm.end());
        for (auto* v : {&sp.train, &sp.val, &sp.test}) std::sort(v->begin(), v->end());
        g.splits.push_back(std::move(sp));
    }
    return g;
}

CandidateGraph candidate_graph(const LabeledGraph& graph, const CandidateSpec& spec) {
    const int n = graph.num_nodes();
    CandidateGraph out;
    out.spec = spec;
    switch (spec.mode) {
        case CandidateMode::full:
            out.adjacency = Matrix::Ones(n, n);
            out.adjacency.diagonal().setZero();
            break;
        case CandidateMode::given:
            out.adjacency = (graph.adjacency.array() > 0).cast<double>().matrix();
            out.adjacency.diagonal().setZero();
            break;
        case CandidateMode::knn: {
            if (spec.k < 1 || spec.k >= n)
                throw ContractError("candidate_graph: knn needs 1 <= k < N (k=" + std::to_string(spec.k) +
                                    ", N=" + std::to_string(n) + ")");
            const Eigen::VectorXd norms = graph.features.rowwise().norm();
            out.adjacency = Matrix::Zero(n, n);
            std::vector<int> order(static_cast<std::size_t>(n - 1));
            std::vector<double> sim(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    const double d = norms(i) * norms(j);
                    sim[j] = d > 0 ? graph.features.row(i).dot(graph.features.row(j)) / d : 0.0;
                }
                order.clear();
                for (int j = 0; j < n; ++j)
                    if (j != i) order.push_back(j);
                // Highest similarity first; equal similarity goes to the lower index.
                std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return sim[x] > sim[y]; });
                for (int r = 0; r < spec.k; ++r) out.adjacency(i, order[r]) = out.adjacency(order[r], i) = 1.0;
            }
            break;
        }
    }
    return out;
}

// ---- dataset directories ---------------------------------------------------------------------

namespace {

fs::path first_existing(const fs::path& dir, std::initializer_list<const char*> names) {
    for (const char* n : names)
        if (fs::exists(dir / n)) return dir / n;
    std::string tried;
    for (const char* n : names) tried += std::string(tried.empty() ? "" : ", ") + n;
    throw IoError(dir.string() + ": none of [" + tried + "] found");
}

// Natural order so split_2 sorts before split_10.
bool natural_less(const std::string& a, const std::string& b) {
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (std::isdigit(static_cast<unsigned char>(a[i])) && std::isdigit(static_cast<unsigned char>(b[j]))) {
            std::size_t ie = i, je = j;
            while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
            while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
            const auto na = std::stoull(a.substr(i, ie - i)), nb = std::stoull(b.substr(j, je - j));
            if (na != nb) return na < nb;
            i = ie;
            j = je;
        } else {
            if (a[i] != b[j]) return a[i] < b[j];
            ++i;
            ++j;
        }
    }
    return a.size() - i < b.size() - j;
}

}  // namespace

DatasetBundle load_dataset_dir(const fs::path& dir, bool normalize_features) {
    if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
    const fs::path nodes = first_existing(dir, {"node_feature_label.txt", "out1_node_feature_label.txt"});
    const fs::path edges = first_existing(dir, {"graph_edges.txt", "out1_graph_edges.txt"});
    DatasetBundle b;
    b.graph = load_raw(nodes, edges);
    std::vector<fs::path> split_files;
    const fs::path sdir = dir / "splits";
    if (fs::is_directory(sdir))
        for (const auto& e : fs::directory_iterator(sdir))
            if (e.is_regular_file() && e.path().extension() == ".txt") split_files.push_back(e.path());
    std::sort(split_files.begin(), split_files.end(),
              [](const fs::path& a, const fs::path& c) { return natural_less(a.filename().string(), c.filename().string()); });
    b.graph.splits = load_splits(split_files, b.graph.num_nodes());
    if (normalize_features) b.graph.features = row_normalize(std::move(b.graph.features));
    b.feature_normalized = normalize_features;
    b.name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    b.graph.validate();
    return b;
}

void write_dataset_dir(const LabeledGraph& graph, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir / "splits", ec);
    if (ec) throw IoError("cannot create " + (dir / "splits").string() + ": " + ec.message());
    save_raw(graph, dir / "node_feature_label.txt", dir / "graph_edges.txt");
    for (std::size_t s = 0; s < graph.splits.size(); ++s)
        save_split(graph.splits[s], dir / "splits" / ("split_" + std::to_string(s) + ".txt"));
}

}  // namespace fggsl
