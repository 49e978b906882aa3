#include "fggsl/cli.hpp"

#include "fggsl/analysis.hpp"
#include "fggsl/checkpoint.hpp"
#include "fggsl/dataset.hpp"
#include "fggsl/errors.hpp"
#include "fggsl/graph.hpp"
#include "fggsl/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef FGGSL_VERSION
#define FGGSL_VERSION "0.0.0"
#endif

namespace fggsl {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string> kAnalyzeKinds{"similarity", "prop1", "stability", "response", "audit"};

// Flags shared by train, ablate and baseline.
struct RunFlags {
    std::string config;
    std::string data;
    std::string out;
    std::uint64_t seed = 0;
    int parallel = 1;
    std::string variant;
    std::string kernel_mode;
    std::string candidate;
    int J = 0;
    int epochs = 0;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool with_variant) {
    cmd->add_option("--config", f.config, "JSON config file (unknown keys are rejected)");
    cmd->add_option("--data", f.data, "Dataset directory")->required();
    cmd->add_option("--out", f.out, "Output directory")->required();
    cmd->add_option("--seed", f.seed, "Base seed (overrides the config)");
    cmd->add_option("--parallel-splits", f.parallel, "Train up to K splits concurrently")->check(CLI::PositiveNumber);
    if (with_variant) cmd->add_option("--variant", f.variant, "full, NM, FBL or FBH");
    cmd->add_option("--kernel-mode", f.kernel_mode, "fig3 or verbatim");
    cmd->add_option("--candidate", f.candidate, "full, given or knn:K");
    cmd->add_option("--J", f.J, "Number of dyadic scales");
    cmd->add_option("--epochs", f.epochs, "Maximum epochs");
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TrainConfig resolve_config(const CLI::App* cmd, const RunFlags& f) {
    TrainConfig cfg;
    if (!f.config.empty()) {
        const json j = json::parse(read_file(f.config), nullptr, false);
        if (j.is_discarded()) throw ParseError(f.config + ": not valid JSON");
        try {
            cfg = config_from_json(j);
        } catch (const ValidationError& e) {
            throw ValidationError(f.config + ": " + e.what());
        }
    }
    if (cmd->count("--seed")) cfg.seed = f.seed;
    if (cmd->get_option_no_throw("--variant") && cmd->count("--variant")) cfg.variant = parse_variant(f.variant);
    if (cmd->count("--kernel-mode")) cfg.mode = parse_kernel_mode(f.kernel_mode);
    if (cmd->count("--candidate")) cfg.candidate = CandidateSpec::parse(f.candidate);
    if (cmd->count("--J")) cfg.J = f.J;
    if (cmd->count("--epochs")) {
        cfg.epochs_max = f.epochs;
        cfg.patience = std::min(cfg.patience, f.epochs);
    }
    cfg.validate();
    return cfg;
}

int thread_cap(int requested) {
    if (const char* env = std::getenv("FGGSL_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || cap < 1) throw ValidationError("FGGSL_THREADS must be a positive integer");
        return std::max(1, std::min<int>(requested, static_cast<int>(cap)));
    }
    return std::max(1, requested);
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json fingerprint(const DatasetBundle& b) {
    const LabeledGraph& g = b.graph;
    const auto edges = g.edges();
    json rhet = nullptr;
    if (!edges.empty()) rhet = heterophily_ratio(g.adjacency, g.labels);
    return json{{"name", b.name},
                {"nodes", g.num_nodes()},
                {"edges", edges.size()},
                {"features", g.num_features()},
                {"classes", g.num_classes()},
                {"splits", g.splits.size()},
                {"rhet", rhet},
                {"features_normalized", b.feature_normalized}};
}

json manifest(const std::string& command, const TrainConfig& cfg, const DatasetBundle& b, const RunFlags& f,
              const std::string& started, const std::vector<double>& seconds) {
    json seeds = json::array();
    for (std::size_t s = 0; s < b.graph.splits.size(); ++s) seeds.push_back(cfg.split_seed(static_cast<int>(s)));
    return json{{"command", command},
                {"tool_version", FGGSL_VERSION},
                {"config", to_json(cfg)},
                {"dataset", fingerprint(b)},
                {"data_dir", f.data},
                {"base_seed", cfg.seed},
                {"split_seeds", seeds},
                {"parallel_splits", f.parallel},
                {"eigenvector_convention", "ascending eigenvalues, first nonzero component positive"},
                {"started_utc", started},
                {"finished_utc", utc_now()},
                {"split_seconds", seconds}};
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

ProtocolOptions progress(int parallel, const std::string& label) {
    ProtocolOptions o;
    o.parallel_splits = parallel;
    o.on_split = [label](int s, const SplitResult& r) {
        std::fprintf(stderr, "[%s] split %d: test %.4f (best epoch %d)\n", label.c_str(), s, r.test_acc, r.best_epoch);
    };
    return o;
}

std::vector<double> seconds_of(const RunResult& r) {
    std::vector<double> out;
    for (const auto& s : r.splits) out.push_back(s.seconds);
    return out;
}

// ---- train / baseline ------------------------------------------------------------------

int cmd_train(CLI::App* cmd, RunFlags& f) {
    const std::string started = utc_now();
    const TrainConfig cfg = resolve_config(cmd, f);
    f.parallel = thread_cap(f.parallel);
    const DatasetBundle bundle = load_dataset_dir(f.data, cfg.normalize_features);
    const fs::path out = f.out;
    ensure_dir(out / "checkpoints");

    std::vector<FgGSLModel> models;
    ProtocolOptions opts = progress(f.parallel, "train");
    opts.models_out = &models;
    const RunResult run = run_protocol(bundle, cfg, opts);

    std::string csv = "split_id,test_acc,val_acc,train_acc,best_epoch,epochs_run\n";
    for (const auto& s : run.splits)
        csv += std::to_string(s.split_id) + "," + fmt(s.test_acc) + "," + fmt(s.val_acc) + "," + fmt(s.train_acc) + "," +
               std::to_string(s.best_epoch) + "," + std::to_string(s.epochs_run) + "\n";
    write_text(out / "splits.csv", csv);

    for (std::size_t s = 0; s < models.size(); ++s) {
        CheckpointHeader h;
        h.model = cfg.model_config();
        h.alpha = cfg.alpha;
        h.beta = cfg.beta;
        h.features = bundle.graph.num_features();
        h.classes = bundle.graph.num_classes();
        h.candidate = cfg.candidate.str();
        h.seed = cfg.split_seed(static_cast<int>(s));
        h.split_id = static_cast<int>(s);
        save_checkpoint(out / "checkpoints" / ("split_" + std::to_string(s) + ".ckpt"), models[s], h);
    }
    json report = to_json(run);
    report["manifest"] = "manifest.json";
    write_json(out / "report.json", report);
    write_json(out / "manifest.json", manifest("train", cfg, bundle, f, started, seconds_of(run)));
    std::printf("%s on %s: %.4f +- %.4f over %zu splits\n", run.label.c_str(), bundle.name.c_str(), run.mean, run.std,
                run.splits.size());
    return kExitOk;
}

int cmd_baseline(CLI::App* cmd, RunFlags& f) {
    const std::string started = utc_now();
    const TrainConfig cfg = resolve_config(cmd, f);
    f.parallel = thread_cap(f.parallel);
    const DatasetBundle bundle = load_dataset_dir(f.data, cfg.normalize_features);
    ensure_dir(f.out);
    const RunResult run = mlp_baseline(bundle, cfg, progress(f.parallel, "mlp"));
    json report = to_json(run);
    report["manifest"] = "manifest.json";
    write_json(fs::path(f.out) / "report.json", report);
    write_json(fs::path(f.out) / "manifest.json", manifest("baseline", cfg, bundle, f, started, seconds_of(run)));
    std::printf("MLP on %s: %.4f +- %.4f over %zu splits\n", bundle.name.c_str(), run.mean, run.std, run.splits.size());
    return kExitOk;
}

int cmd_ablate(CLI::App* cmd, RunFlags& f) {
    const std::string started = utc_now();
    const TrainConfig cfg = resolve_config(cmd, f);
    f.parallel = thread_cap(f.parallel);
    const DatasetBundle bundle = load_dataset_dir(f.data, cfg.normalize_features);
    ensure_dir(f.out);
    const AblationResult ab = run_ablation(bundle, cfg, progress(f.parallel, "ablate"));

    std::string csv = "variant,split_id,test_acc,val_acc,best_epoch\n";
    json rows = json::array();
    std::vector<double> seconds;
    for (const auto& [variant, run] : ab.rows) {
        for (const auto& s : run.splits) {
            csv += to_string(variant) + "," + std::to_string(s.split_id) + "," + fmt(s.test_acc) + "," + fmt(s.val_acc) +
                   "," + std::to_string(s.best_epoch) + "\n";
            seconds.push_back(s.seconds);
        }
        json r = to_json(run);
        r["variant"] = to_string(variant);
        rows.push_back(std::move(r));
        std::printf("%-4s %.4f +- %.4f\n", to_string(variant).c_str(), run.mean, run.std);
    }
    write_text(fs::path(f.out) / "ablation.csv", csv);
    write_json(fs::path(f.out) / "report.json", json{{"manifest", "manifest.json"}, {"variants", rows}});
    write_json(fs::path(f.out) / "manifest.json", manifest("ablate", cfg, bundle, f, started, seconds));
    return kExitOk;
}

// ---- gen ------------------------------------------------------------------------------------

struct GenFlags {
    SyntheticSpec spec;
    std::string out;
};

int cmd_gen(GenFlags& g) {
    const SyntheticSpec& s = g.spec;
    if (s.n < 2 || s.classes < 2 || s.classes > s.n || s.features < 1 || s.num_splits < 1)
        throw ValidationError("gen: need n >= classes >= 2, features >= 1 and splits >= 1");
    for (double p : {s.intra_p, s.inter_p})
        if (!(p >= 0 && p <= 1)) throw ValidationError("gen: edge probabilities must lie in [0, 1]");
    if (!(s.proto_noise >= 0)) throw ValidationError("gen: noise must be >= 0");
    if (!(s.train_frac > 0 && s.val_frac > 0 && s.train_frac + s.val_frac < 1))
        throw ValidationError("gen: need train_frac, val_frac > 0 and train_frac + val_frac < 1");

    write_dataset_dir(gen_synthetic(s), g.out);
    const DatasetBundle loaded = load_dataset_dir(g.out, false);
    const auto edges = loaded.graph.edges();
    if (edges.empty()) {
        std::printf("wrote %s: %d nodes, 0 edges\n", g.out.c_str(), loaded.graph.num_nodes());
    } else {
        std::printf("wrote %s: %d nodes, %zu edges, R_het %.6f\n", g.out.c_str(), loaded.graph.num_nodes(), edges.size(),
                    heterophily_ratio(loaded.graph.adjacency, loaded.graph.labels));
    }
    return kExitOk;
}

// ---- analyze ----------------------------------------------------------------------------------

struct AnalyzeFlags {
    std::string kind;
    std::string out = ".";
    std::string data;
    std::string checkpoint;
    std::string kernel_mode = "fig3";
    std::uint64_t seed = 0;
    int J = 4;
    int grid = 201;
    std::optional<std::size_t> trials;  // prop1: 10000 draws, stability: 50 graphs
    int n = 20;
    double p = 0.3;
    std::vector<double> epsilons{1e-3, 1e-2};
    std::size_t max_pairs = kDefaultMaxPairs;
    int bins = 40;
    double threshold = 0.5;
};

int analyze_response(const AnalyzeFlags& a) {
    const KernelMode mode = parse_kernel_mode(a.kernel_mode);
    const auto rows = spectral_response_export(a.J, mode, a.grid);
    write_csv(fs::path(a.out) / "response.csv", rows);
    write_json(fs::path(a.out) / "response.json",
               json{{"J", a.J}, {"mode", to_string(mode)}, {"grid_points", a.grid}, {"rows", rows.size()}});
    std::printf("response: %zu rows (%d kernels x 2 banks x %d points)\n", rows.size(), a.J - 1, a.grid);
    return kExitOk;
}

int analyze_prop1(const AnalyzeFlags& a) {
    const Prop1Sweep s = prop1_sweep(a.trials.value_or(10000), 2, 8, a.seed);
    write_json(fs::path(a.out) / "prop1.json", json{{"draws", s.draws},
                                                    {"violations", s.violations},
                                                    {"max_lhs_over_rhs", s.max_lhs_over_rhs},
                                                    {"tolerance", kProp1Tolerance},
                                                    {"classes", {2, 8}},
                                                    {"seed", a.seed}});
    std::printf("prop1: %zu draws, %zu violations, max lhs/rhs %.6f\n", s.draws, s.violations, s.max_lhs_over_rhs);
    return kExitOk;
}

int analyze_stability(const AnalyzeFlags& a) {
    const KernelMode mode = parse_kernel_mode(a.kernel_mode);
    const std::size_t trials = a.trials.value_or(50);
    if (trials < 1) throw ValidationError("stability: --trials must be >= 1");
    std::vector<BoundProbeRecord> all;
    json summary = json::array();
    for (BankKind kind : {BankKind::low, BankKind::high}) {
        for (int j = 2; j <= a.J; ++j) {
            std::vector<BoundProbeRecord> recs;
            for (std::size_t t = 0; t < trials; ++t) {
                const std::uint64_t s = a.seed * 1000003ULL + t;
                StabilityProbeConfig cfg{a.epsilons, j, mode, kind, 1, s};
                for (auto r : stability_probe(random_laplacian(a.n, a.p, s), cfg)) {
                    r.trial = static_cast<int>(t);
                    recs.push_back(r);
                }
            }
            std::size_t violations = 0;
            for (const auto& r : recs) violations += r.holds_with_slack ? 0 : 1;
            const double slope = loglog_slope(recs);
            summary.push_back({{"kind", to_string(kind)}, {"j", j}, {"violations", violations}, {"loglog_slope", slope}});
            std::printf("stability %s j=%d: %zu violations, slope %.4f\n", to_string(kind).c_str(), j, violations, slope);
            all.insert(all.end(), recs.begin(), recs.end());
        }
    }
    write_csv(fs::path(a.out) / "stability.csv", all);
    write_json(fs::path(a.out) / "stability.json",
               json{{"mode", to_string(mode)},
                    {"n", a.n},
                    {"p", a.p},
                    {"trials", trials},
                    {"epsilons", a.epsilons},
                    {"seed", a.seed},
                    {"slack", "1 + 10 eps"},
                    {"eigenvector_convention", "ascending eigenvalues, first nonzero component positive"},
                    {"summary", summary}});
    return kExitOk;
}

Checkpoint checkpoint_for(const AnalyzeFlags& a, const DatasetBundle& b) {
    Checkpoint ck = load_checkpoint(a.checkpoint);
    if (ck.header.features != b.graph.num_features() || ck.header.classes != b.graph.num_classes())
        throw ValidationError("checkpoint shape (" + std::to_string(ck.header.features) + " features, " +
                              std::to_string(ck.header.classes) + " classes) does not match the dataset");
    return ck;
}

int analyze_similarity(const AnalyzeFlags& a) {
    if (a.data.empty()) throw ValidationError("similarity: --data is required");
    const DatasetBundle b = load_dataset_dir(a.data);
    const fs::path out = a.out;
    auto report = [&](const std::string& tag, const SimilarityHistogram& h) {
        for (int c : h.skipped_classes)
            std::fprintf(stderr, "warning: class %d has fewer than two members; skipped\n", c);
        write_csv(out / ("similarity_" + tag + ".csv"), h);
        std::printf("%s: intra %.4f inter %.4f gap %.4f\n", tag.c_str(), h.intra_mean, h.inter_mean, h.gap());
        return to_json(h);
    };
    json j{{"max_pairs", a.max_pairs}, {"bins", a.bins}, {"seed", a.seed}};
    j["raw"] = report("raw", similarity_histogram(b.graph.features, b.graph.labels, a.max_pairs, a.bins, a.seed));
    if (!a.checkpoint.empty()) {
        Checkpoint ck = checkpoint_for(a, b);
        const ModelInputs inputs =
            ModelInputs::build(b.graph, candidate_graph(b.graph, CandidateSpec::parse(ck.header.candidate)));
        j["embedding"] =
            report("embedding", similarity_histogram(embedding(ck.model, inputs), b.graph.labels, a.max_pairs, a.bins, a.seed));
        j["checkpoint"] = a.checkpoint;
    }
    write_json(out / "similarity.json", j);
    return kExitOk;
}

int analyze_audit(const AnalyzeFlags& a) {
    if (a.data.empty() || a.checkpoint.empty()) throw ValidationError("audit: --data and --checkpoint are required");
    const DatasetBundle b = load_dataset_dir(a.data);
    Checkpoint ck = checkpoint_for(a, b);
    const ModelInputs inputs = ModelInputs::build(b.graph, candidate_graph(b.graph, CandidateSpec::parse(ck.header.candidate)));
    auto [w1, w2] = learned_masks(ck.model, inputs);
    if (w1.size() == 0 || w2.size() == 0)
        throw ValidationError("audit needs a model with both masks; variant is " + to_string(ck.header.model.variant));
    const EdgeAudit audit = learned_edge_audit(w1, w2, b.graph.labels, a.threshold);
    json j = to_json(audit);
    j["checkpoint"] = a.checkpoint;
    write_json(fs::path(a.out) / "audit.json", j);
    std::printf("audit: Ho %zu edges (R_het %.4f), Ht %zu edges (R_het %.4f)\n", audit.ho_edges, audit.ho_rhet,
                audit.ht_edges, audit.ht_rhet);
    return kExitOk;
}

int cmd_analyze(const AnalyzeFlags& a) {
    if (std::find(kAnalyzeKinds.begin(), kAnalyzeKinds.end(), a.kind) == kAnalyzeKinds.end()) {
        std::string kinds;
        for (const auto& k : kAnalyzeKinds) kinds += (kinds.empty() ? "" : ", ") + k;
        throw ValidationError("unknown analysis kind '" + a.kind + "'; valid kinds: " + kinds);
    }
    ensure_dir(a.out);
    if (a.kind == "response") return analyze_response(a);
    if (a.kind == "prop1") return analyze_prop1(a);
    if (a.kind == "stability") return analyze_stability(a);
    if (a.kind == "similarity") return analyze_similarity(a);
    return analyze_audit(a);
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Frequency-guided graph structure learning"};
    app.set_version_flag("--version", FGGSL_VERSION);
    app.require_subcommand(1);

    RunFlags train_flags, ablate_flags, base_flags;
    auto* train = app.add_subcommand("train", "Train on every split of a dataset");
    add_run_flags(train, train_flags, true);
    auto* ablate = app.add_subcommand("ablate", "Train the full, NM, FBL and FBH variants");
    add_run_flags(ablate, ablate_flags, false);
    auto* baseline = app.add_subcommand("baseline", "Train the feature-only MLP baseline");
    add_run_flags(baseline, base_flags, false);

    GenFlags gen_flags;
    auto* gen = app.add_subcommand("gen", "Write a synthetic stochastic block model dataset");
    gen->add_option("--out", gen_flags.out, "Output dataset directory")->required();
    gen->add_option("--n", gen_flags.spec.n, "Nodes");
    gen->add_option("--classes", gen_flags.spec.classes, "Classes");
    gen->add_option("--intra-p", gen_flags.spec.intra_p, "Same-class edge probability");
    gen->add_option("--inter-p", gen_flags.spec.inter_p, "Cross-class edge probability");
    gen->add_option("--noise", gen_flags.spec.proto_noise, "Feature noise scale");
    gen->add_option("--features", gen_flags.spec.features, "Feature width");
    gen->add_option("--splits", gen_flags.spec.num_splits, "Number of splits");
    gen->add_option("--train-frac", gen_flags.spec.train_frac, "Train fraction");
    gen->add_option("--val-frac", gen_flags.spec.val_frac, "Validation fraction");
    gen->add_option("--seed", gen_flags.spec.seed, "Seed");

    AnalyzeFlags an;
    auto* analyze = app.add_subcommand("analyze", "similarity | prop1 | stability | response | audit");
    analyze->add_option("kind", an.kind, "Analysis kind")->required();
    analyze->add_option("--out", an.out, "Output directory");
    analyze->add_option("--data", an.data, "Dataset directory (similarity, audit)");
    analyze->add_option("--checkpoint", an.checkpoint, "Model checkpoint (similarity, audit)");
    analyze->add_option("--kernel-mode", an.kernel_mode, "fig3 or verbatim");
    analyze->add_option("--seed", an.seed, "Seed");
    analyze->add_option("--J", an.J, "Largest scale");
    analyze->add_option("--grid", an.grid, "Grid points over [0, 2] (response)");
    analyze->add_option("--trials", an.trials, "Draws (prop1) or random graphs (stability)");
    analyze->add_option("--n", an.n, "Graph size (stability)");
    analyze->add_option("--p", an.p, "Edge probability (stability)");
    analyze->add_option("--epsilons", an.epsilons, "Perturbation magnitudes (stability)");
    analyze->add_option("--max-pairs", an.max_pairs, "Pair cap per group (similarity)");
    analyze->add_option("--bins", an.bins, "Histogram bins (similarity)");
    analyze->add_option("--threshold", an.threshold, "Edge threshold (audit)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInvalid;
    }

    try {
        if (*train) return cmd_train(train, train_flags);
        if (*ablate) return cmd_ablate(ablate, ablate_flags);
        if (*baseline) return cmd_baseline(baseline, base_flags);
        if (*gen) return cmd_gen(gen_flags);
        return cmd_analyze(an);
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kExitNumeric;
    } catch (const IoError& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return kExitIo;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInvalid;
    } catch (const std::bad_alloc&) {
        std::fprintf(stderr, "error: out of memory\n");
        return kExitNumeric;
    }
}

}  // namespace fggsl
