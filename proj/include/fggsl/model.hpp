#pragma once

// Frequency-guided structure learning model: two feature-driven edge masks over
// a candidate graph, a low-pass filter bank on the homophilic mask, a high-pass
// bank on the heterophilic mask, and a linear softmax classifier over the
// concatenated filter responses.

#include "fggsl/autodiff.hpp"
#include "fggsl/dataset.hpp"
#include "fggsl/graph.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fggsl {

/// fig3: diffusion-wavelet kernels t^(2^(j-1)) - t^(2^j) with t = 1 - lambda/2
/// (low) or t = lambda/2 (high). verbatim: the printed polynomials, kept for audit.
enum class KernelMode { fig3, verbatim };
enum class BankKind { low, high };
enum class Variant { full, nm, fbl, fbh };

std::string to_string(KernelMode m);
std::string to_string(BankKind k);
std::string to_string(Variant v);
KernelMode parse_kernel_mode(const std::string& s);
BankKind parse_bank_kind(const std::string& s);
Variant parse_variant(const std::string& s);

struct FilterBankSpec {
    int J = 4;
    KernelMode mode = KernelMode::fig3;
    BankKind kind = BankKind::low;

    int size() const { return J - 1; }  // kernels j = 2..J
};

/// Spectral response of kernel j at lambda. Requires j >= 2 and lambda in [0, 2].
double kernel_value(int j, double lambda, KernelMode mode, BankKind kind);
/// Same polynomial without the domain check on lambda (perturbed spectra may
/// leave [0, 2] slightly).
double kernel_polynomial(int j, double lambda, KernelMode mode, BankKind kind);

/// Dense operators h^(j)(L) for j = 2..J, built from T, T^2, T^4, ... by repeated
/// squaring of the kernel's base operator.
std::vector<ad::Tensor> filter_bank_operators(const ad::Tensor& l, const FilterBankSpec& bank);

/// h^(j)(L) X for a single scale.
ad::Tensor filter_apply(const ad::Tensor& l, const ad::Tensor& x, int j, KernelMode mode, BankKind kind);

/// [h^(2)(L) X | ... | h^(J)(L) X].
ad::Tensor filter_bank_apply(const ad::Tensor& l, const ad::Tensor& x, const FilterBankSpec& bank);

/// sum_j h^(j)(L) V_j over blocks V_2..V_J (each N x K). Uses repeated products
/// of the base operator with the thin blocks when 2^(J+1) K < J N, otherwise
/// the dense operators.
ad::Tensor filter_bank_combine(const ad::Tensor& l, std::span<const ad::Tensor> blocks, const FilterBankSpec& bank);

struct ModelConfig {
    int J = 4;
    KernelMode mode = KernelMode::fig3;
    Variant variant = Variant::full;
    int mask_dim = 16;  // D, output width of the mask feature map
};

/// Fixed per-dataset inputs to the forward pass.
struct ModelInputs {
    Matrix features;
    Matrix candidate;  // A_f
    Matrix given;      // binarized dataset adjacency, used by the no-mask variant
    std::vector<IndexPair> candidate_edges;
    std::vector<IndexPair> given_edges;

    static ModelInputs build(const LabeledGraph& graph, const CandidateGraph& candidate);
};

struct ForwardResult {
    ad::Tensor logits;                   // N x C
    std::optional<ad::Tensor> w1;        // homophilic edge weights (N x N)
    std::optional<ad::Tensor> w2;        // heterophilic edge weights (N x N)
    std::optional<ad::Tensor> embedding; // H, only when requested
};

/// Edge weights sigmoid(Z Z^T) masked by a_f, Z = tanh(X W + b).
ad::Tensor mask_matrix(const ad::Tensor& weight, const ad::Tensor& bias, const ad::Tensor& x,
                       const ad::Tensor& a_f);

class FgGSLModel {
public:
    static constexpr const char* kMaskHoWeight = "theta_ho.weight";
    static constexpr const char* kMaskHoBias = "theta_ho.bias";
    static constexpr const char* kMaskHtWeight = "theta_ht.weight";
    static constexpr const char* kMaskHtBias = "theta_ht.bias";
    static constexpr const char* kClassifier = "phi.weight";

    /// Glorot-uniform weights, zero biases.
    FgGSLModel(int num_features, int num_classes, const ModelConfig& config, std::uint64_t seed);
    /// Adopts existing parameters (e.g. from a checkpoint); shapes are validated.
    FgGSLModel(int num_features, int num_classes, const ModelConfig& config, ad::ParameterSet params);

    const ModelConfig& config() const { return config_; }
    ad::ParameterSet& params() { return params_; }
    const ad::ParameterSet& params() const { return params_; }
    int num_features() const { return num_features_; }
    int num_classes() const { return num_classes_; }

    bool uses_low_bank() const { return config_.variant != Variant::fbh; }
    bool uses_high_bank() const { return config_.variant != Variant::fbl; }
    int num_banks() const { return (uses_low_bank() ? 1 : 0) + (uses_high_bank() ? 1 : 0); }
    int embedding_width() const { return num_banks() * (config_.J - 1) * num_features_; }

    /// Records the forward pass on `tape`. With materialize_embedding the logits
    /// are computed as H * W_phi; otherwise as sum_j h_j(L) (X W_phi,j), which is
    /// the same product reassociated so no N x F block is ever formed.
    ForwardResult forward(ad::Tape& tape, const ModelInputs& inputs, bool materialize_embedding = false);

    /// Edge list the structural losses run over for this variant.
    const std::vector<IndexPair>& structural_edges(const ModelInputs& inputs) const;

private:
    void check_shapes() const;

    int num_features_;
    int num_classes_;
    ModelConfig config_;
    ad::ParameterSet params_;
};

struct LossBreakdown {
    double ce = 0;
    double ho = 0;
    double ht = 0;
    double total = 0;
    double alpha = 0;
    double beta = 0;
};

/// mean over edges of w1_ij * (1 - cos(yhat_i, yhat_j)).
ad::Tensor structural_loss_ho(const ad::Tensor& w1, const ad::Tensor& yhat, std::span<const IndexPair> edges);
/// mean over edges of w2_ij * cos(yhat_i, yhat_j).
ad::Tensor structural_loss_ht(const ad::Tensor& w2, const ad::Tensor& yhat, std::span<const IndexPair> edges);

struct LossOptions {
    double alpha = 1.0;
    double beta = 1.0;
    /// Use true labels instead of predictions on train rows inside the
    /// structural losses.
    bool true_labels_on_train = false;
};

struct LossResult {
    ad::Tensor total;
    ad::Tensor probs;
    ForwardResult forward;
    LossBreakdown values;
};

/// ce on train rows + alpha * ho + beta * ht, where the structural terms use
/// the predicted probabilities of every node. Single-bank variants contribute
/// only the structural term of the mask they own.
LossResult total_loss(ad::Tape& tape, FgGSLModel& model, const ModelInputs& inputs, const Matrix& labels,
                      std::span<const int> train_rows, const LossOptions& options);

}  // namespace fggsl
