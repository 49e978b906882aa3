#include "fggsl/training.hpp"

#include "fggsl/analysis.hpp"
#include "fggsl/errors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <set>
#include <thread>

namespace fggsl {

using ad::Matrix;
using nlohmann::json;

// ---- config ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ValidationError("config field '" + field + "': " + why);
    };
    if (!(lr > 0) || !std::isfinite(lr)) fail("lr", "must be > 0");
    if (!(weight_decay >= 0)) fail("weight_decay", "must be >= 0");
    if (epochs_max < 1) fail("epochs_max", "must be >= 1");
    if (patience < 0) fail("patience", "must be >= 0");
    if (patience > epochs_max) fail("patience", "must not exceed epochs_max");
    if (!(alpha >= 0)) fail("alpha", "must be >= 0");
    if (!(beta >= 0)) fail("beta", "must be >= 0");
    if (J < 2) fail("J", "must be >= 2");
    if (J > 12) fail("J", "must be <= 12");
    if (D < 1) fail("D", "must be >= 1");
    if (mlp_hidden < 1) fail("mlp_hidden", "must be >= 1");
}

json to_json(const TrainConfig& c) {
    return json{{"lr", c.lr},
                {"weight_decay", c.weight_decay},
                {"epochs_max", c.epochs_max},
                {"patience", c.patience},
                {"alpha", c.alpha},
                {"beta", c.beta},
                {"J", c.J},
                {"mode", to_string(c.mode)},
                {"variant", to_string(c.variant)},
                {"candidate", c.candidate.str()},
                {"seed", c.seed},
                {"D", c.D},
                {"true_labels_on_train", c.true_labels_on_train},
                {"normalize_features", c.normalize_features},
                {"mlp_hidden", c.mlp_hidden}};
}

TrainConfig config_from_json(const json& j, TrainConfig base) {
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        const json& v = it.value();
        auto number = [&]() -> double {
            if (!v.is_number()) throw ValidationError("config field '" + key + "': expected a number");
            return v.get<double>();
        };
        auto integer = [&]() -> long long {
            if (!v.is_number_integer()) throw ValidationError("config field '" + key + "': expected an integer");
            return v.get<long long>();
        };
        auto text = [&]() -> std::string {
            if (!v.is_string()) throw ValidationError("config field '" + key + "': expected a string");
            return v.get<std::string>();
        };
        auto boolean = [&]() -> bool {
            if (!v.is_boolean()) throw ValidationError("config field '" + key + "': expected true or false");
            return v.get<bool>();
        };
        try {
            if (key == "lr") base.lr = number();
            else if (key == "weight_decay") base.weight_decay = number();
            else if (key == "epochs_max") base.epochs_max = static_cast<int>(integer());
            else if (key == "patience") base.patience = static_cast<int>(integer());
            else if (key == "alpha") base.alpha = number();
            else if (key == "beta") base.beta = number();
            else if (key == "J") base.J = static_cast<int>(integer());
            else if (key == "mode") base.mode = parse_kernel_mode(text());
            else if (key == "variant") base.variant = parse_variant(text());
            else if (key == "candidate") base.candidate = CandidateSpec::parse(text());
            else if (key == "seed") {
                const long long s = integer();
                if (s < 0) throw ValidationError("config field 'seed': must be >= 0");
                base.seed = static_cast<std::uint64_t>(s);
            } else if (key == "D") base.D = static_cast<int>(integer());
            else if (key == "true_labels_on_train") base.true_labels_on_train = boolean();
            else if (key == "normalize_features") base.normalize_features = boolean();
            else if (key == "mlp_hidden") base.mlp_hidden = static_cast<int>(integer());
            else throw ValidationError("config: unknown key '" + key + "'");
        } catch (const ValidationError& e) {
            const std::string msg = e.what();
            if (msg.find(key) == std::string::npos) throw ValidationError("config field '" + key + "': " + msg);
            throw;
        }
    }
    base.validate();
    return base;
}

// ---- optimizer ------------------------------------------------------------------------------

void adam_step(ad::ParameterSet& params, AdamState& state, double lr, double weight_decay,
               std::span<const std::string> decayed) {
    for (const std::string& name : params.names()) {
        const Matrix& g = params.grad(name);
        if (!g.allFinite()) throw NumericError("non-finite gradient in parameter '" + name + "'");
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.step));
    for (const std::string& name : params.names()) {
        Matrix& p = params.value(name);
        const Matrix& g = params.grad(name);
        auto [mit, mnew] = state.m.try_emplace(name, Matrix::Zero(p.rows(), p.cols()));
        auto [vit, vnew] = state.v.try_emplace(name, Matrix::Zero(p.rows(), p.cols()));
        Matrix& m = mit->second;
        Matrix& v = vit->second;
        if (m.rows() != p.rows() || m.cols() != p.cols()) throw DimensionError("Adam moment shape drifted for " + name);
        m = AdamState::kBeta1 * m + (1.0 - AdamState::kBeta1) * g;
        v = AdamState::kBeta2 * v + (1.0 - AdamState::kBeta2) * g.cwiseProduct(g);
        if (weight_decay > 0 && std::find(decayed.begin(), decayed.end(), name) != decayed.end())
            p *= (1.0 - lr * weight_decay);
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + AdamState::kEps);
    }
}

// ---- evaluation ---------------------------------------------------------------------------------

double evaluate(const Matrix& probs, const Matrix& labels, std::span<const int> rows) {
    if (rows.empty()) throw ContractError("evaluate: empty index set");
    if (probs.rows() != labels.rows() || probs.cols() != labels.cols())
        throw DimensionError("evaluate: predictions " + ad::shape_str(probs) + " vs labels " + ad::shape_str(labels));
    std::size_t correct = 0;
    for (int r : rows) {
        if (r < 0 || r >= probs.rows()) throw ContractError("evaluate: row " + std::to_string(r) + " out of range");
        if (argmax_row(probs, r) == argmax_row(labels, r)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(rows.size());
}

Matrix predict(FgGSLModel& model, const ModelInputs& inputs) {
    ad::Tape tape;
    auto fwd = model.forward(tape, inputs);
    return ad::softmax(fwd.logits).value();
}

double evaluate(FgGSLModel& model, const ModelInputs& inputs, const Matrix& labels, std::span<const int> rows) {
    return evaluate(predict(model, inputs), labels, rows);
}

std::vector<double> RunResult::test_accuracies() const {
    std::vector<double> out;
    for (const auto& s : splits) out.push_back(s.test_acc);
    return out;
}

double RunResult::mean_val() const {
    if (splits.empty()) return 0.0;
    double s = 0;
    for (const auto& r : splits) s += r.val_acc;
    return s / static_cast<double>(splits.size());
}

void aggregate(RunResult& run) {
    if (run.splits.empty()) {
        run.mean = run.std = 0;
        return;
    }
    const double n = static_cast<double>(run.splits.size());
    double sum = 0;
    for (const auto& s : run.splits) sum += s.test_acc;
    run.mean = sum / n;
    double var = 0;
    for (const auto& s : run.splits) var += (s.test_acc - run.mean) * (s.test_acc - run.mean);
    run.std = std::sqrt(var / n);
}

// ---- shared training loop ------------------------------------------------------------------------

namespace {

struct EpochOutput {
    ad::Tensor loss;
    ad::Tensor probs;
    LossBreakdown values;
};

using EpochFn = std::function<EpochOutput(ad::Tape&)>;

// Trains until `patience` epochs pass without a strict validation improvement,
// then restores the parameters of the best epoch (earliest on ties).
void run_loop(ad::ParameterSet& params, const EpochFn& epoch_fn, const Matrix& labels, const Split& split,
              const TrainConfig& config, std::span<const std::string> decayed, SplitResult& result) {
    AdamState adam;
    ad::ParameterSet best = params;
    double best_val = -1.0;
    int since_best = 0;
    for (int epoch = 0; epoch < config.epochs_max; ++epoch) {
        ad::Tape tape;
        params.zero_grad();
        EpochOutput out = epoch_fn(tape);
        const Matrix probs = out.probs.value();
        const LossBreakdown& v = out.values;
        if (!std::isfinite(v.total))
            throw NumericError("epoch " + std::to_string(epoch) + ": loss is not finite");
        result.ce_curve.push_back(v.ce);
        result.ho_curve.push_back(v.ho);
        result.ht_curve.push_back(v.ht);
        result.total_curve.push_back(v.total);

        const double val = evaluate(probs, labels, split.val);
        result.val_curve.push_back(val);
        result.epochs_run = epoch + 1;
        if (val > best_val) {
            best_val = val;
            best = params;
            result.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (since_best >= config.patience) break;

        tape.backward(out.loss, params);
        try {
            adam_step(params, adam, config.lr, config.weight_decay, decayed);
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
        }
    }
    params = std::move(best);
    result.val_acc = best_val;
}

const Split& split_at(const DatasetBundle& bundle, int split_index) {
    if (split_index < 0 || split_index >= static_cast<int>(bundle.graph.splits.size()))
        throw ContractError("split index " + std::to_string(split_index) + " out of range (" +
                            std::to_string(bundle.graph.splits.size()) + " splits)");
    return bundle.graph.splits[split_index];
}

template <typename Fn>
void for_each_split(int count, int parallel, Fn&& fn) {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
    if (parallel <= 1 || count <= 1) {
        for (int s = 0; s < count; ++s) fn(s);
        return;
    }
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::vector<std::thread> workers;
    for (int w = 0; w < std::min(parallel, count); ++w) {
        workers.emplace_back([&]() {
            for (int s = next++; s < count && !failed; s = next++) {
                try {
                    fn(s);
                } catch (...) {
                    errors[s] = std::current_exception();
                    failed = true;
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

TrainedSplit train_single_split(const DatasetBundle& bundle, const ModelInputs& inputs, int split_index,
                                const TrainConfig& config) {
    config.validate();
    const Split& split = split_at(bundle, split_index);
    const auto start = std::chrono::steady_clock::now();
    const LabeledGraph& g = bundle.graph;

    FgGSLModel model(g.num_features(), g.num_classes(), config.model_config(), config.split_seed(split_index));
    const LossOptions opts{config.alpha, config.beta, config.true_labels_on_train};
    SplitResult result;
    result.split_id = split_index;
    const std::vector<std::string> decayed{FgGSLModel::kClassifier};

    try {
        run_loop(
            model.params(),
            [&](ad::Tape& tape) {
                LossResult r = total_loss(tape, model, inputs, g.labels, split.train, opts);
                return EpochOutput{r.total, r.probs, r.values};
            },
            g.labels, split, config, decayed, result);
    } catch (const NumericError& e) {
        throw NumericError("split " + std::to_string(split_index) + ", " + e.what());
    }

    {
        ad::Tape tape;
        auto fwd = model.forward(tape, inputs);
        const Matrix probs = ad::softmax(fwd.logits).value();
        result.test_acc = evaluate(probs, g.labels, split.test);
        result.train_acc = evaluate(probs, g.labels, split.train);
        if (fwd.w1 && fwd.w2 && config.variant != Variant::nm)
            result.audit = learned_edge_audit(fwd.w1->value(), fwd.w2->value(), g.labels);
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(model), std::move(result)};
}

TrainedSplit train_single_split(const DatasetBundle& bundle, int split_index, const TrainConfig& config) {
    const ModelInputs inputs = ModelInputs::build(bundle.graph, candidate_graph(bundle.graph, config.candidate));
    return train_single_split(bundle, inputs, split_index, config);
}

RunResult run_protocol(const DatasetBundle& bundle, const TrainConfig& config, const ProtocolOptions& options) {
    config.validate();
    const int count = static_cast<int>(bundle.graph.splits.size());
    if (count < 1) throw ContractError("run_protocol: dataset has no splits");
    const ModelInputs inputs = ModelInputs::build(bundle.graph, candidate_graph(bundle.graph, config.candidate));

    RunResult run;
    run.label = "FgGSL(" + to_string(config.variant) + ")";
    run.splits.resize(static_cast<std::size_t>(count));
    std::vector<std::optional<FgGSLModel>> models(static_cast<std::size_t>(count));
    for_each_split(count, options.parallel_splits, [&](int s) {
        TrainedSplit t = train_single_split(bundle, inputs, s, config);
        run.splits[s] = std::move(t.result);
        if (options.models_out) models[s].emplace(std::move(t.model));
        if (options.on_split) options.on_split(s, run.splits[s]);
    });
    if (options.models_out) {
        options.models_out->clear();
        for (auto& m : models) options.models_out->push_back(std::move(*m));
    }
    aggregate(run);
    return run;
}

const RunResult& AblationResult::at(Variant v) const {
    for (const auto& [variant, run] : rows)
        if (variant == v) return run;
    throw ContractError("ablation has no row for variant " + to_string(v));
}

AblationResult run_ablation(const DatasetBundle& bundle, const TrainConfig& config, const ProtocolOptions& options) {
    AblationResult out;
    for (Variant v : {Variant::full, Variant::nm, Variant::fbl, Variant::fbh}) {
        TrainConfig c = config;
        c.variant = v;
        ProtocolOptions o = options;
        o.models_out = nullptr;
        out.rows.emplace_back(v, run_protocol(bundle, c, o));
    }
    return out;
}

RunResult mlp_baseline(const DatasetBundle& bundle, const TrainConfig& config, const ProtocolOptions& options) {
    config.validate();
    const LabeledGraph& g = bundle.graph;
    const int count = static_cast<int>(g.splits.size());
    if (count < 1) throw ContractError("mlp_baseline: dataset has no splits");
    RunResult run;
    run.label = "MLP";
    run.splits.resize(static_cast<std::size_t>(count));

    for_each_split(count, options.parallel_splits, [&](int s) {
        const auto start = std::chrono::steady_clock::now();
        const Split& split = g.splits[s];
        std::mt19937_64 rng(config.split_seed(s));
        auto glorot = [&](int r, int c) {
            const double limit = std::sqrt(6.0 / static_cast<double>(r + c));
            std::uniform_real_distribution<double> u(-limit, limit);
            Matrix m(r, c);
            for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
            return m;
        };
        ad::ParameterSet params;
        params.add("mlp.w1", glorot(g.num_features(), config.mlp_hidden));
        params.add("mlp.b1", Matrix::Zero(1, config.mlp_hidden));
        params.add("mlp.w2", glorot(config.mlp_hidden, g.num_classes()));
        params.add("mlp.b2", Matrix::Zero(1, g.num_classes()));
        const std::vector<std::string> decayed{"mlp.w1", "mlp.w2"};

        auto logits_of = [&](ad::Tape& tape) {
            ad::Tensor x = tape.constant(g.features);
            ad::Tensor h = ad::tanh(ad::add_row_vector(ad::matmul(x, tape.parameter(params, "mlp.w1")),
                                                       tape.parameter(params, "mlp.b1")));
            return ad::add_row_vector(ad::matmul(h, tape.parameter(params, "mlp.w2")), tape.parameter(params, "mlp.b2"));
        };
        SplitResult result;
        result.split_id = s;
        try {
            run_loop(
                params,
                [&](ad::Tape& tape) {
                    auto ce = ad::softmax_cross_entropy(logits_of(tape), g.labels, split.train);
                    LossBreakdown v;
                    v.ce = v.total = ce.loss.scalar();
                    return EpochOutput{ce.loss, ce.probs, v};
                },
                g.labels, split, config, decayed, result);
        } catch (const NumericError& e) {
            throw NumericError("MLP split " + std::to_string(s) + ", " + e.what());
        }
        ad::Tape tape;
        const Matrix probs = ad::softmax(logits_of(tape)).value();
        result.test_acc = evaluate(probs, g.labels, split.test);
        result.train_acc = evaluate(probs, g.labels, split.train);
        result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        run.splits[s] = std::move(result);
        if (options.on_split) options.on_split(s, run.splits[s]);
    });
    aggregate(run);
    return run;
}

int select_scale(const DatasetBundle& bundle, const TrainConfig& config, std::span<const int> grid,
                 const ProtocolOptions& options) {
    if (grid.empty()) throw ContractError("select_scale: empty grid");
    int best_j = grid[0];
    double best_val = -1;
    std::vector<int> sorted(grid.begin(), grid.end());
    std::sort(sorted.begin(), sorted.end());
    for (int j : sorted) {
        TrainConfig c = config;
        c.J = j;
        ProtocolOptions o = options;
        o.models_out = nullptr;
        const double val = run_protocol(bundle, c, o).mean_val();
        if (val > best_val) {
            best_val = val;
            best_j = j;
        }
    }
    return best_j;
}

// ---- serialization ---------------------------------------------------------------------------------

// Wall-clock time is left out so reports stay byte-identical across runs.
json to_json(const SplitResult& r) {
    json j{{"split_id", r.split_id},
           {"test_acc", r.test_acc},
           {"val_acc", r.val_acc},
           {"train_acc", r.train_acc},
           {"best_epoch", r.best_epoch},
           {"epochs_run", r.epochs_run},
           {"curves",
            {{"ce", r.ce_curve}, {"ho", r.ho_curve}, {"ht", r.ht_curve}, {"total", r.total_curve}, {"val_acc", r.val_curve}}}};
    if (r.audit) j["audit"] = to_json(*r.audit);
    return j;
}

json to_json(const RunResult& r) {
    json splits = json::array();
    for (const auto& s : r.splits) splits.push_back(to_json(s));
    return json{{"label", r.label}, {"mean", r.mean}, {"std", r.std}, {"splits", splits}};
}

}  // namespace fggsl
