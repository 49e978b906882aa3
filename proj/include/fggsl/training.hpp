#pragma once

#include "fggsl/autodiff.hpp"
#include "fggsl/dataset.hpp"
#include "fggsl/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace fggsl {

struct TrainConfig {
    double lr = 0.01;
    double weight_decay = 5e-4;  // classifier weights only
    int epochs_max = 500;
    int patience = 100;
    double alpha = 1.0;
    double beta = 1.0;
    int J = 4;
    KernelMode mode = KernelMode::fig3;
    Variant variant = Variant::full;
    CandidateSpec candidate;
    std::uint64_t seed = 0;
    int D = 16;
    bool true_labels_on_train = false;
    bool normalize_features = true;
    int mlp_hidden = 64;

    /// Throws ValidationError naming the offending field.
    void validate() const;
    ModelConfig model_config() const { return {J, mode, variant, D}; }
    std::uint64_t split_seed(int split_index) const { return seed * 1000 + static_cast<std::uint64_t>(split_index); }
};

nlohmann::json to_json(const TrainConfig& c);
/// Overlays the keys of `j` onto `base`. Unknown keys and wrong types are a
/// ValidationError naming the key.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct AdamState {
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    std::unordered_map<std::string, ad::Matrix> m;
    std::unordered_map<std::string, ad::Matrix> v;
    long step = 0;
};

/// Bias-corrected Adam with decoupled weight decay on the `decayed` parameters.
/// Throws NumericError if any gradient entry is not finite.
void adam_step(ad::ParameterSet& params, AdamState& state, double lr, double weight_decay,
               std::span<const std::string> decayed);

/// Fraction of `rows` whose prediction argmax (lowest index on ties) equals the
/// label argmax. Throws ContractError on an empty set.
double evaluate(const ad::Matrix& probs, const ad::Matrix& labels, std::span<const int> rows);

/// Class probabilities of every node under the current parameters.
ad::Matrix predict(FgGSLModel& model, const ModelInputs& inputs);
double evaluate(FgGSLModel& model, const ModelInputs& inputs, const ad::Matrix& labels, std::span<const int> rows);

struct EdgeAudit {
    std::size_t ho_edges = 0;
    std::size_t ht_edges = 0;
    double ho_rhet = 0;  // NaN when the learned graph has no edges
    double ht_rhet = 0;
    double threshold = 0.5;
};

struct SplitResult {
    int split_id = 0;
    double test_acc = 0;
    double val_acc = 0;
    double train_acc = 0;
    int best_epoch = 0;
    int epochs_run = 0;
    double seconds = 0;
    std::vector<double> ce_curve;
    std::vector<double> ho_curve;
    std::vector<double> ht_curve;
    std::vector<double> total_curve;
    std::vector<double> val_curve;
    std::optional<EdgeAudit> audit;
};

struct RunResult {
    std::string label;
    std::vector<SplitResult> splits;
    double mean = 0;
    double std = 0;  // population standard deviation

    std::vector<double> test_accuracies() const;
    double mean_val() const;
};

/// Fills mean and std from the per-split test accuracies.
void aggregate(RunResult& run);

struct TrainedSplit {
    FgGSLModel model;
    SplitResult result;
};

TrainedSplit train_single_split(const DatasetBundle& bundle, const ModelInputs& inputs, int split_index,
                                const TrainConfig& config);
TrainedSplit train_single_split(const DatasetBundle& bundle, int split_index, const TrainConfig& config);

struct ProtocolOptions {
    int parallel_splits = 1;
    /// Receives the restored model of every split, in split order.
    std::vector<FgGSLModel>* models_out = nullptr;
    /// Optional progress callback (split index, result).
    std::function<void(int, const SplitResult&)> on_split;
};

RunResult run_protocol(const DatasetBundle& bundle, const TrainConfig& config, const ProtocolOptions& options = {});

struct AblationResult {
    std::vector<std::pair<Variant, RunResult>> rows;  // full, NM, FBL, FBH

    const RunResult& at(Variant v) const;
};

AblationResult run_ablation(const DatasetBundle& bundle, const TrainConfig& config, const ProtocolOptions& options = {});

/// Two-layer perceptron F -> hidden -> C with tanh, no graph input, trained
/// with the same optimizer, seeds and early stopping.
RunResult mlp_baseline(const DatasetBundle& bundle, const TrainConfig& config, const ProtocolOptions& options = {});

/// Picks J from `grid` by mean validation accuracy (ties go to the smaller J).
int select_scale(const DatasetBundle& bundle, const TrainConfig& config, std::span<const int> grid,
                 const ProtocolOptions& options = {});

nlohmann::json to_json(const SplitResult& r);
nlohmann::json to_json(const RunResult& r);

}  // namespace fggsl
