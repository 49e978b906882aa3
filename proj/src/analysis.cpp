#include "fggsl/analysis.hpp"

#include "fggsl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <random>

namespace fggsl {

using nlohmann::json;

namespace {

double row_cosine(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
    const double na = a.row(i).norm();
    const double nb = b.row(j).norm();
    if (na == 0.0 || nb == 0.0) throw ContractError("cosine of a zero-norm row");
    return std::clamp(a.row(i).dot(b.row(j)) / (na * nb), -1.0, 1.0);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

// ---- structural-loss stability -------------------------------------------------------

std::vector<Prop1Record> prop1_check(const Matrix& y, const Matrix& yhat, std::span<const IndexPair> pairs) {
    if (y.rows() != yhat.rows() || y.cols() != yhat.cols())
        throw DimensionError("prop1_check: y " + ad::shape_str(y) + " vs yhat " + ad::shape_str(yhat));
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        int ones = 0;
        for (Eigen::Index c = 0; c < y.cols(); ++c) {
            if (y(r, c) == 1.0) ++ones;
            else if (y(r, c) != 0.0) ones = -1000;
        }
        if (ones != 1) throw ContractError("prop1_check: row " + std::to_string(r) + " of y is not one-hot");
    }
    const double root_c = std::sqrt(static_cast<double>(y.cols()));
    std::vector<Prop1Record> out;
    out.reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
        if (i < 0 || j < 0 || i >= y.rows() || j >= y.rows()) throw ContractError("prop1_check: pair index out of range");
        Prop1Record rec;
        rec.i = i;
        rec.j = j;
        rec.lhs = std::abs(row_cosine(y, i, y, j) - row_cosine(yhat, i, yhat, j));
        rec.eps_i = (y.row(i) - yhat.row(i)).norm();
        rec.eps_j = (y.row(j) - yhat.row(j)).norm();
        rec.rhs = 2.0 * root_c * (rec.eps_i + rec.eps_j);
        rec.holds = rec.lhs <= rec.rhs + kProp1Tolerance;
        out.push_back(rec);
    }
    return out;
}

Prop1Sweep prop1_sweep(std::size_t draws, int c_min, int c_max, std::uint64_t seed) {
    if (c_min < 2 || c_max < c_min) throw ContractError("prop1_sweep: need 2 <= c_min <= c_max");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick_c(c_min, c_max);
    std::normal_distribution<double> gauss(0.0, 1.0);
    // Logit scales from nearly uniform to nearly one-hot predictions.
    std::uniform_real_distribution<double> log_scale(-3.0, 3.0);
    std::bernoulli_distribution near_label(0.5);

    Prop1Sweep sweep;
    const IndexPair pair{0, 1};
    for (std::size_t d = 0; d < draws; ++d) {
        const int c = pick_c(rng);
        std::uniform_int_distribution<int> pick_label(0, c - 1);
        Matrix y = Matrix::Zero(2, c);
        Matrix yhat(2, c);
        for (int r = 0; r < 2; ++r) {
            const int label = pick_label(rng);
            y(r, label) = 1.0;
            const double s = std::exp(log_scale(rng));
            for (int k = 0; k < c; ++k) yhat(r, k) = s * gauss(rng);
            if (near_label(rng)) yhat(r, label) += 3.0 * s;
            yhat.row(r).array() -= yhat.row(r).maxCoeff();
            yhat.row(r) = yhat.row(r).array().exp().matrix();
            yhat.row(r) /= yhat.row(r).sum();
        }
        const Prop1Record rec = prop1_check(y, yhat, std::span<const IndexPair>(&pair, 1)).front();
        ++sweep.draws;
        if (!rec.holds) ++sweep.violations;
        if (rec.rhs > 0) sweep.max_lhs_over_rhs = std::max(sweep.max_lhs_over_rhs, rec.lhs / rec.rhs);
    }
    return sweep;
}

// ---- filter-bank stability -----------------------------------------------------------

Matrix spectral_filter_matrix(const Matrix& l, int j, KernelMode mode, BankKind kind) {
    const SpectralDecomposition eig = symmetric_eig(l);
    Eigen::VectorXd h(eig.eigenvalues.size());
    for (Eigen::Index k = 0; k < h.size(); ++k) h(k) = kernel_polynomial(j, eig.eigenvalues(k), mode, kind);
    Matrix out = eig.eigenvectors * h.asDiagonal() * eig.eigenvectors.transpose();
    return 0.5 * (out + out.transpose());
}

std::vector<BoundProbeRecord> stability_probe(const Matrix& l, const StabilityProbeConfig& config) {
    if (config.trials < 1) throw ContractError("stability_probe: trials must be >= 1");
    for (double e : config.epsilons)
        if (!(e >= 0.0)) throw ContractError("stability_probe: epsilon must be >= 0");
    const double root_n = std::sqrt(static_cast<double>(l.rows()));
    const double gain = std::ldexp(1.0, config.j - 1);
    const Matrix base = spectral_filter_matrix(l, config.j, config.mode, config.kind);

    std::vector<BoundProbeRecord> out;
    for (int t = 0; t < config.trials; ++t) {
        const std::uint64_t trial_seed = config.seed * 1000003ULL + static_cast<std::uint64_t>(t);
        for (double eps : config.epsilons) {
            const Perturbation p = perturb_laplacian(l, eps, trial_seed);
            BoundProbeRecord rec;
            rec.epsilon = eps;
            rec.delta = p.delta;
            rec.j = config.j;
            rec.trial = t;
            rec.mode = config.mode;
            rec.kind = config.kind;
            rec.observed_distance =
                eps == 0.0 ? 0.0
                           : operator_distance(base, spectral_filter_matrix(p.perturbed, config.j, config.mode, config.kind));
            rec.bound_value = gain * (1.0 + rec.delta * root_n) * eps * (1.0 + 10.0 * eps);
            rec.holds_with_slack = rec.observed_distance <= rec.bound_value;
            out.push_back(rec);
        }
    }
    return out;
}

double loglog_slope(std::span<const BoundProbeRecord> records) {
    std::map<double, std::pair<double, int>> by_eps;
    for (const auto& r : records) {
        if (r.epsilon <= 0) continue;
        auto& [sum, count] = by_eps[r.epsilon];
        sum += r.observed_distance;
        ++count;
    }
    if (by_eps.size() < 2) throw ContractError("loglog_slope: need at least two positive epsilons");
    std::vector<double> xs, ys;
    for (const auto& [eps, acc] : by_eps) {
        const double mean = acc.first / acc.second;
        if (mean <= 0) throw NumericError("loglog_slope: zero mean distance at epsilon " + fmt(eps));
        xs.push_back(std::log(eps));
        ys.push_back(std::log(mean));
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        mx += xs[k];
        my += ys[k];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxy += (xs[k] - mx) * (ys[k] - my);
        sxx += (xs[k] - mx) * (xs[k] - mx);
    }
    return sxy / sxx;
}

Matrix random_laplacian(int n, double p, std::uint64_t seed) {
    if (n < 1) throw ContractError("random_laplacian: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution edge(p);
    std::uniform_real_distribution<double> weight(0.0, 1.0);
    Matrix w = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (edge(rng)) w(i, j) = w(j, i) = 1.0 - weight(rng);
    return normalized_laplacian(w);
}

// ---- similarity distributions ----------------------------------------------------------

SimilarityHistogram similarity_histogram(const Matrix& vectors, const Matrix& labels, std::size_t max_pairs, int bins,
                                         std::uint64_t seed) {
    if (vectors.rows() != labels.rows())
        throw DimensionError("similarity_histogram: vectors " + ad::shape_str(vectors) + " vs labels " +
                             ad::shape_str(labels));
    if (bins < 1) throw ContractError("similarity_histogram: bins must be >= 1");
    if (max_pairs < 1) throw ContractError("similarity_histogram: max_pairs must be >= 1");

    SimilarityHistogram h;
    h.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int b = 0; b <= bins; ++b) h.bin_edges[b] = -1.0 + 2.0 * b / bins;
    h.intra_counts.assign(static_cast<std::size_t>(bins), 0);
    h.inter_counts.assign(static_cast<std::size_t>(bins), 0);

    const int classes = static_cast<int>(labels.cols());
    std::vector<std::vector<int>> members(static_cast<std::size_t>(classes));
    std::vector<int> rows, label_of;
    Eigen::VectorXd norms = vectors.rowwise().norm();
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
        if (norms(i) == 0.0) {
            ++h.zero_rows_excluded;
            continue;
        }
        const int c = argmax_row(labels, i);
        members[c].push_back(static_cast<int>(i));
        rows.push_back(static_cast<int>(i));
        label_of.push_back(c);
    }

    auto cosine = [&](int i, int j) {
        return std::clamp(vectors.row(i).dot(vectors.row(j)) / (norms(i) * norms(j)), -1.0, 1.0);
    };
    auto bin_of = [&](double c) {
        return std::min(bins - 1, static_cast<int>(std::floor((c + 1.0) * 0.5 * bins)));
    };
    double intra_sum = 0, inter_sum = 0;
    auto add_intra = [&](int i, int j) {
        const double c = cosine(i, j);
        ++h.intra_counts[bin_of(c)];
        ++h.intra_pairs;
        intra_sum += c;
    };
    auto add_inter = [&](int i, int j) {
        const double c = cosine(i, j);
        ++h.inter_counts[bin_of(c)];
        ++h.inter_pairs;
        inter_sum += c;
    };

    std::vector<double> class_pairs(static_cast<std::size_t>(classes), 0.0);
    double intra_total = 0;
    for (int c = 0; c < classes; ++c) {
        const double m = static_cast<double>(members[c].size());
        if (m < 2) {
            if (m > 0) h.skipped_classes.push_back(c);
            continue;
        }
        class_pairs[c] = m * (m - 1) / 2;
        intra_total += class_pairs[c];
    }
    const double n = static_cast<double>(rows.size());
    const double inter_total = n * (n - 1) / 2 - [&] {
        double s = 0;
        for (const auto& m : members) s += static_cast<double>(m.size()) * (static_cast<double>(m.size()) - 1) / 2;
        return s;
    }();
    const double cap = static_cast<double>(max_pairs);
    std::mt19937_64 rng(seed);

    const bool intra_exhaustive = intra_total <= cap;
    if (intra_exhaustive) {
        for (int c = 0; c < classes; ++c) {
            if (class_pairs[c] == 0) continue;
            const auto& m = members[c];
            for (std::size_t a = 0; a < m.size(); ++a)
                for (std::size_t b = a + 1; b < m.size(); ++b) add_intra(m[a], m[b]);
        }
    } else {
        std::discrete_distribution<int> pick_class(class_pairs.begin(), class_pairs.end());
        for (std::size_t s = 0; s < max_pairs; ++s) {
            const auto& m = members[pick_class(rng)];
            std::uniform_int_distribution<std::size_t> pick(0, m.size() - 1);
            const std::size_t a = pick(rng);
            std::size_t b = pick(rng);
            while (b == a) b = pick(rng);
            add_intra(m[a], m[b]);
        }
    }

    const bool inter_exhaustive = inter_total <= cap;
    if (inter_exhaustive) {
        for (std::size_t a = 0; a < rows.size(); ++a)
            for (std::size_t b = a + 1; b < rows.size(); ++b)
                if (label_of[a] != label_of[b]) add_inter(rows[a], rows[b]);
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
        for (std::size_t s = 0; s < max_pairs;) {
            const std::size_t a = pick(rng);
            const std::size_t b = pick(rng);
            if (label_of[a] == label_of[b]) continue;
            add_inter(rows[a], rows[b]);
            ++s;
        }
    }

    h.exhaustive = intra_exhaustive && inter_exhaustive;
    h.intra_mean = h.intra_pairs ? intra_sum / static_cast<double>(h.intra_pairs) : 0.0;
    h.inter_mean = h.inter_pairs ? inter_sum / static_cast<double>(h.inter_pairs) : 0.0;
    return h;
}

// ---- kernel responses ----------------------------------------------------------------------

std::vector<ResponseRow> spectral_response_export(int J, KernelMode mode, int grid_points) {
    if (J < 2) throw ContractError("spectral_response_export: J must be >= 2");
    if (grid_points < 2) throw ContractError("spectral_response_export: grid_points must be >= 2");
    std::vector<ResponseRow> rows;
    rows.reserve(static_cast<std::size_t>(grid_points) * (J - 1) * 2);
    for (BankKind kind : {BankKind::low, BankKind::high})
        for (int j = 2; j <= J; ++j)
            for (int k = 0; k < grid_points; ++k) {
                const double lambda = k == grid_points - 1 ? 2.0 : 2.0 * k / (grid_points - 1);
                rows.push_back({lambda, j, kind, kernel_value(j, lambda, mode, kind)});
            }
    return rows;
}

// ---- learned graphs ----------------------------------------------------------------------------

EdgeAudit learned_edge_audit(const Matrix& w1, const Matrix& w2, const Matrix& labels, double threshold) {
    if (w1.rows() != labels.rows() || w2.rows() != labels.rows())
        throw DimensionError("learned_edge_audit: weights and labels disagree on N");
    EdgeAudit a;
    a.threshold = threshold;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    a.ho_edges = upper_edges(w1, threshold).size();
    a.ht_edges = upper_edges(w2, threshold).size();
    a.ho_rhet = a.ho_edges ? heterophily_ratio(w1, labels, threshold) : nan;
    a.ht_rhet = a.ht_edges ? heterophily_ratio(w2, labels, threshold) : nan;
    return a;
}

std::pair<Matrix, Matrix> learned_masks(FgGSLModel& model, const ModelInputs& inputs) {
    ad::Tape tape;
    ForwardResult fwd = model.forward(tape, inputs);
    return {fwd.w1 ? fwd.w1->value() : Matrix(), fwd.w2 ? fwd.w2->value() : Matrix()};
}

Matrix embedding(FgGSLModel& model, const ModelInputs& inputs) {
    ad::Tape tape;
    ForwardResult fwd = model.forward(tape, inputs, true);
    return fwd.embedding->value();
}

// ---- outputs ------------------------------------------------------------------------------------

void write_csv(const std::filesystem::path& path, std::span<const BoundProbeRecord> records) {
    auto out = open_out(path);
    out << "trial,epsilon,j,mode,kind,delta,observed_distance,bound_value,holds_with_slack\n";
    for (const auto& r : records)
        out << r.trial << ',' << fmt(r.epsilon) << ',' << r.j << ',' << to_string(r.mode) << ',' << to_string(r.kind)
            << ',' << fmt(r.delta) << ',' << fmt(r.observed_distance) << ',' << fmt(r.bound_value) << ','
            << (r.holds_with_slack ? 1 : 0) << '\n';
    finish(out, path);
}

void write_csv(const std::filesystem::path& path, std::span<const Prop1Record> records) {
    auto out = open_out(path);
    out << "i,j,lhs,eps_i,eps_j,rhs,holds\n";
    for (const auto& r : records)
        out << r.i << ',' << r.j << ',' << fmt(r.lhs) << ',' << fmt(r.eps_i) << ',' << fmt(r.eps_j) << ','
            << fmt(r.rhs) << ',' << (r.holds ? 1 : 0) << '\n';
    finish(out, path);
}

void write_csv(const std::filesystem::path& path, std::span<const ResponseRow> rows) {
    auto out = open_out(path);
    out << "lambda,j,kind,value\n";
    for (const auto& r : rows)
        out << fmt(r.lambda) << ',' << r.j << ',' << to_string(r.kind) << ',' << fmt(r.value) << '\n';
    finish(out, path);
}

void write_csv(const std::filesystem::path& path, const SimilarityHistogram& h) {
    auto out = open_out(path);
    out << "bin_lo,bin_hi,intra_count,inter_count\n";
    for (std::size_t b = 0; b < h.intra_counts.size(); ++b)
        out << fmt(h.bin_edges[b]) << ',' << fmt(h.bin_edges[b + 1]) << ',' << h.intra_counts[b] << ','
            << h.inter_counts[b] << '\n';
    finish(out, path);
}

void write_json(const std::filesystem::path& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
    finish(out, path);
}

json to_json(const SimilarityHistogram& h) {
    return json{{"bin_edges", h.bin_edges},
                {"intra_counts", h.intra_counts},
                {"inter_counts", h.inter_counts},
                {"intra_pairs", h.intra_pairs},
                {"inter_pairs", h.inter_pairs},
                {"intra_mean", h.intra_mean},
                {"inter_mean", h.inter_mean},
                {"gap", h.gap()},
                {"exhaustive", h.exhaustive},
                {"skipped_classes", h.skipped_classes},
                {"zero_rows_excluded", h.zero_rows_excluded}};
}

json to_json(const EdgeAudit& a) {
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    return json{{"threshold", a.threshold},
                {"ho_edges", a.ho_edges},
                {"ht_edges", a.ht_edges},
                {"ho_rhet", num(a.ho_rhet)},
                {"ht_rhet", num(a.ht_rhet)}};
}

}  // namespace fggsl
