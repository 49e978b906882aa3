#include "fggsl/model.hpp"

#include "fggsl/errors.hpp"

#include <cmath>
#include <random>

namespace fggsl {

std::string to_string(KernelMode m) { return m == KernelMode::fig3 ? "fig3" : "verbatim"; }
std::string to_string(BankKind k) { return k == BankKind::low ? "low" : "high"; }
std::string to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::nm: return "NM";
        case Variant::fbl: return "FBL";
        case Variant::fbh: return "FBH";
    }
    return "?";
}

KernelMode parse_kernel_mode(const std::string& s) {
    if (s == "fig3") return KernelMode::fig3;
    if (s == "verbatim") return KernelMode::verbatim;
    throw ValidationError("kernel mode must be fig3 or verbatim, got '" + s + "'");
}

BankKind parse_bank_kind(const std::string& s) {
    if (s == "low") return BankKind::low;
    if (s == "high") return BankKind::high;
    throw ValidationError("bank kind must be low or high, got '" + s + "'");
}

Variant parse_variant(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "NM" || s == "nm") return Variant::nm;
    if (s == "FBL" || s == "fbl") return Variant::fbl;
    if (s == "FBH" || s == "fbh") return Variant::fbh;
    throw ValidationError("variant must be one of full, NM, FBL, FBH; got '" + s + "'");
}

// ---- kernels ----------------------------------------------------------------------

namespace {

// t^(2^k) by k squarings, the scalar mirror of the matrix path.
double pow2k(double t, int k) {
    for (int i = 0; i < k; ++i) t *= t;
    return t;
}

}  // namespace

double kernel_polynomial(int j, double lambda, KernelMode mode, BankKind kind) {
    if (j < 2) throw ContractError("kernel index j must be >= 2, got " + std::to_string(j));
    const double half = 0.5 * lambda;
    if (mode == KernelMode::fig3) {
        const double t = kind == BankKind::low ? 1.0 - half : half;
        return pow2k(t, j - 1) - pow2k(t, j);
    }
    if (kind == BankKind::low) return pow2k(half, j - 1) - pow2k(0.5, j);
    const double t = 1.0 - half;
    return pow2k(t, j - 1) - pow2k(t, j);
}

double kernel_value(int j, double lambda, KernelMode mode, BankKind kind) {
    if (!(lambda >= 0.0 && lambda <= 2.0))
        throw ContractError("kernel_value: lambda " + std::to_string(lambda) + " outside [0, 2]");
    return kernel_polynomial(j, lambda, mode, kind);
}

std::vector<ad::Tensor> filter_bank_operators(const ad::Tensor& l, const FilterBankSpec& bank) {
    if (bank.J < 2) throw ContractError("filter bank needs J >= 2, got " + std::to_string(bank.J));
    const Matrix& lv = l.value();
    if (lv.rows() != lv.cols()) throw DimensionError("filter bank: Laplacian must be square, got " + ad::shape_str(lv));
    ad::Tape& tape = *l.tape();
    const auto n = lv.rows();
    ad::Tensor eye = tape.constant(Matrix::Identity(n, n));
    ad::Tensor half_l = ad::scale(l, 0.5);

    // Base operator whose dyadic powers give the kernel terms.
    const bool complement = (bank.mode == KernelMode::fig3) == (bank.kind == BankKind::low);
    ad::Tensor t = complement ? ad::sub(eye, half_l) : half_l;

    std::vector<ad::Tensor> powers{t};  // powers[k] = T^(2^k)
    for (int k = 1; k <= bank.J; ++k) powers.push_back(ad::matmul(powers.back(), powers.back()));

    std::vector<ad::Tensor> ops;
    for (int j = 2; j <= bank.J; ++j) {
        if (bank.mode == KernelMode::verbatim && bank.kind == BankKind::low) {
            const double c = pow2k(0.5, j);
            ops.push_back(ad::sub(powers[j - 1], ad::scale(eye, c)));
        } else {
            ops.push_back(ad::sub(powers[j - 1], powers[j]));
        }
    }
    return ops;
}

ad::Tensor filter_apply(const ad::Tensor& l, const ad::Tensor& x, int j, KernelMode mode, BankKind kind) {
    if (j < 2) throw ContractError("filter_apply: j must be >= 2, got " + std::to_string(j));
    auto ops = filter_bank_operators(l, FilterBankSpec{j, mode, kind});
    return ad::matmul(ops.back(), x);
}

ad::Tensor filter_bank_apply(const ad::Tensor& l, const ad::Tensor& x, const FilterBankSpec& bank) {
    auto ops = filter_bank_operators(l, bank);
    std::vector<ad::Tensor> parts;
    for (const auto& op : ops) parts.push_back(ad::matmul(op, x));
    return ad::concat_cols(parts);
}

ad::Tensor filter_bank_combine(const ad::Tensor& l, std::span<const ad::Tensor> blocks, const FilterBankSpec& bank) {
    if (bank.J < 2) throw ContractError("filter bank needs J >= 2, got " + std::to_string(bank.J));
    if (static_cast<int>(blocks.size()) != bank.size())
        throw DimensionError("filter_bank_combine: expected " + std::to_string(bank.size()) + " blocks, got " +
                             std::to_string(blocks.size()));
    const auto n = l.rows();
    const auto k = blocks.front().cols();
    std::optional<ad::Tensor> total;
    auto accumulate = [&](const ad::Tensor& term) { total = total ? ad::add(*total, term) : term; };

    const double chain_cost = std::ldexp(1.0, bank.J + 1) * static_cast<double>(k);
    if (chain_cost >= static_cast<double>(bank.J) * static_cast<double>(n)) {
        auto ops = filter_bank_operators(l, bank);
        for (std::size_t b = 0; b < ops.size(); ++b) accumulate(ad::matmul(ops[b], blocks[b]));
        return *total;
    }

    ad::Tape& tape = *l.tape();
    ad::Tensor half_l = ad::scale(l, 0.5);
    const bool complement = (bank.mode == KernelMode::fig3) == (bank.kind == BankKind::low);
    ad::Tensor t = complement ? ad::sub(tape.constant(Matrix::Identity(n, n)), half_l) : half_l;
    const bool constant_tail = bank.mode == KernelMode::verbatim && bank.kind == BankKind::low;
    for (int j = 2; j <= bank.J; ++j) {
        const ad::Tensor& v = blocks[static_cast<std::size_t>(j - 2)];
        const long head = 1L << (j - 1);
        const long tail = constant_tail ? head : 1L << j;
        ad::Tensor p = v;
        std::optional<ad::Tensor> at_head;
        for (long step = 1; step <= tail; ++step) {
            p = ad::matmul(t, p);
            if (step == head) at_head = p;
        }
        accumulate(constant_tail ? ad::sub(*at_head, ad::scale(v, pow2k(0.5, j))) : ad::sub(*at_head, p));
    }
    return *total;
}

// ---- inputs / masks -----------------------------------------------------------------

ModelInputs ModelInputs::build(const LabeledGraph& graph, const CandidateGraph& candidate) {
    ModelInputs in;
    in.features = graph.features;
    in.candidate = candidate.adjacency;
    in.given = (graph.adjacency.array() > 0).cast<double>().matrix();
    in.given.diagonal().setZero();
    in.candidate_edges = upper_edges(in.candidate);
    in.given_edges = upper_edges(in.given);
    return in;
}

ad::Tensor mask_matrix(const ad::Tensor& weight, const ad::Tensor& bias, const ad::Tensor& x,
                       const ad::Tensor& a_f) {
    if (x.cols() != weight.rows())
        throw DimensionError("mask_matrix: features " + ad::shape_str(x.value()) + " vs mask weight " +
                             ad::shape_str(weight.value()));
    if (a_f.rows() != x.rows() || a_f.cols() != x.rows())
        throw DimensionError("mask_matrix: candidate graph " + ad::shape_str(a_f.value()) + " for " +
                             std::to_string(x.rows()) + " nodes");
    ad::Tensor z = ad::tanh(ad::add_row_vector(ad::matmul(x, weight), bias));
    return ad::hadamard(ad::sigmoid(ad::gram(z)), a_f);
}

// ---- model --------------------------------------------------------------------------------

namespace {

Matrix glorot(int rows, int cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
    return m;
}

}  // namespace

FgGSLModel::FgGSLModel(int num_features, int num_classes, const ModelConfig& config, std::uint64_t seed)
    : num_features_(num_features), num_classes_(num_classes), config_(config) {
    if (config.J < 2) throw ValidationError("J must be >= 2");
    if (config.mask_dim < 1) throw ValidationError("mask dimension D must be >= 1");
    if (num_features < 1 || num_classes < 1) throw ValidationError("model needs F >= 1 and C >= 1");
    std::mt19937_64 rng(seed);
    const int d = config.mask_dim;
    // Every variant carries both masks so checkpoints share one layout; unused
    // parameters simply receive zero gradient.
    params_.add(kMaskHoWeight, glorot(num_features, d, rng));
    params_.add(kMaskHoBias, Matrix::Zero(1, d));
    params_.add(kMaskHtWeight, glorot(num_features, d, rng));
    params_.add(kMaskHtBias, Matrix::Zero(1, d));
    params_.add(kClassifier, glorot(embedding_width(), num_classes, rng));
}

FgGSLModel::FgGSLModel(int num_features, int num_classes, const ModelConfig& config, ad::ParameterSet params)
    : num_features_(num_features), num_classes_(num_classes), config_(config), params_(std::move(params)) {
    check_shapes();
}

void FgGSLModel::check_shapes() const {
    auto expect = [&](const char* name, Eigen::Index r, Eigen::Index c) {
        if (!params_.contains(name)) throw ValidationError(std::string("missing parameter ") + name);
        const Matrix& m = params_.value(name);
        if (m.rows() != r || m.cols() != c)
            throw ValidationError(std::string("parameter ") + name + " has shape " + ad::shape_str(m) + ", expected " +
                                  std::to_string(r) + "x" + std::to_string(c));
    };
    const int d = config_.mask_dim;
    expect(kMaskHoWeight, num_features_, d);
    expect(kMaskHoBias, 1, d);
    expect(kMaskHtWeight, num_features_, d);
    expect(kMaskHtBias, 1, d);
    expect(kClassifier, embedding_width(), num_classes_);
}

const std::vector<IndexPair>& FgGSLModel::structural_edges(const ModelInputs& inputs) const {
    return config_.variant == Variant::nm ? inputs.given_edges : inputs.candidate_edges;
}

ForwardResult FgGSLModel::forward(ad::Tape& tape, const ModelInputs& inputs, bool materialize_embedding) {
    const auto n = inputs.features.rows();
    if (inputs.features.cols() != num_features_)
        throw DimensionError("forward: features " + ad::shape_str(inputs.features) + " for a model with F=" +
                             std::to_string(num_features_));
    if (inputs.candidate.rows() != n || inputs.given.rows() != n)
        throw DimensionError("forward: graph size does not match feature rows");

    ad::Tensor x = tape.constant(inputs.features);
    ForwardResult out;

    auto learned_mask = [&](const char* w, const char* b) {
        ad::Tensor a_f = tape.constant(inputs.candidate);
        return mask_matrix(tape.parameter(params_, w), tape.parameter(params_, b), x, a_f);
    };

    struct Bank {
        ad::Tensor laplacian;
        BankKind kind;
    };
    std::vector<Bank> banks;
    if (config_.variant == Variant::nm) {
        ad::Tensor a = tape.constant(inputs.given);
        out.w1 = a;
        out.w2 = a;
        ad::Tensor l = tape.constant(normalized_laplacian(inputs.given));
        banks.push_back({l, BankKind::low});
        banks.push_back({l, BankKind::high});
    } else {
        if (uses_low_bank()) {
            out.w1 = learned_mask(kMaskHoWeight, kMaskHoBias);
            banks.push_back({normalized_laplacian(*out.w1), BankKind::low});
        }
        if (uses_high_bank()) {
            out.w2 = learned_mask(kMaskHtWeight, kMaskHtBias);
            banks.push_back({normalized_laplacian(*out.w2), BankKind::high});
        }
    }

    ad::Tensor classifier = tape.parameter(params_, kClassifier);
    std::vector<ad::Tensor> responses;
    std::optional<ad::Tensor> logits;
    Eigen::Index block = 0;
    for (const Bank& bank : banks) {
        const FilterBankSpec spec{config_.J, config_.mode, bank.kind};
        if (materialize_embedding) {
            for (const ad::Tensor& op : filter_bank_operators(bank.laplacian, spec)) responses.push_back(ad::matmul(op, x));
            continue;
        }
        std::vector<ad::Tensor> projected;
        for (int j = 2; j <= config_.J; ++j, ++block)
            projected.push_back(ad::matmul(x, ad::slice_rows(classifier, block * num_features_, num_features_)));
        ad::Tensor term = filter_bank_combine(bank.laplacian, projected, spec);
        logits = logits ? ad::add(*logits, term) : term;
    }
    if (materialize_embedding) {
        out.embedding = ad::concat_cols(responses);
        logits = ad::matmul(*out.embedding, classifier);
    }
    out.logits = *logits;
    return out;
}

// ---- losses ----------------------------------------------------------------------------------

namespace {

void check_structural_inputs(const ad::Tensor& w, const ad::Tensor& yhat, std::span<const IndexPair> edges,
                             const char* what) {
    if (edges.empty()) throw ContractError(std::string(what) + ": empty edge list");
    if (w.rows() != yhat.rows() || w.cols() != yhat.rows())
        throw DimensionError(std::string(what) + ": weights " + ad::shape_str(w.value()) + " vs predictions " +
                             ad::shape_str(yhat.value()));
}

}  // namespace

ad::Tensor structural_loss_ho(const ad::Tensor& w1, const ad::Tensor& yhat, std::span<const IndexPair> edges) {
    check_structural_inputs(w1, yhat, edges, "structural_loss_ho");
    ad::Tape& tape = *w1.tape();
    const auto e = static_cast<Eigen::Index>(edges.size());
    ad::Tensor w = ad::gather(w1, edges);
    ad::Tensor cos = ad::cosine_rows(yhat, yhat, edges);
    ad::Tensor dissimilarity = ad::sub(tape.constant(Matrix::Ones(e, 1)), cos);
    return ad::scale(ad::sum(ad::hadamard(w, dissimilarity)), 1.0 / static_cast<double>(e));
}

ad::Tensor structural_loss_ht(const ad::Tensor& w2, const ad::Tensor& yhat, std::span<const IndexPair> edges) {
    check_structural_inputs(w2, yhat, edges, "structural_loss_ht");
    const auto e = static_cast<double>(edges.size());
    ad::Tensor w = ad::gather(w2, edges);
    ad::Tensor cos = ad::cosine_rows(yhat, yhat, edges);
    return ad::scale(ad::sum(ad::hadamard(w, cos)), 1.0 / e);
}

LossResult total_loss(ad::Tape& tape, FgGSLModel& model, const ModelInputs& inputs, const Matrix& labels,
                      std::span<const int> train_rows, const LossOptions& options) {
    if (options.alpha < 0 || options.beta < 0) throw ContractError("total_loss: alpha and beta must be >= 0");
    LossResult r;
    r.forward = model.forward(tape, inputs);
    auto ce = ad::softmax_cross_entropy(r.forward.logits, labels, train_rows);
    r.probs = ce.probs;

    ad::Tensor yhat = options.true_labels_on_train ? ad::replace_rows(ce.probs, train_rows, labels) : ce.probs;
    const auto& edges = model.structural_edges(inputs);

    ad::Tensor total = ce.loss;
    r.values.alpha = options.alpha;
    r.values.beta = options.beta;
    r.values.ce = ce.loss.scalar();
    if (r.forward.w1) {
        ad::Tensor ho = structural_loss_ho(*r.forward.w1, yhat, edges);
        r.values.ho = ho.scalar();
        total = ad::add(total, ad::scale(ho, options.alpha));
    }
    if (r.forward.w2) {
        ad::Tensor ht = structural_loss_ht(*r.forward.w2, yhat, edges);
        r.values.ht = ht.scalar();
        total = ad::add(total, ad::scale(ht, options.beta));
    }
    r.total = total;
    r.values.total = total.scalar();
    return r;
}

}  // namespace fggsl
