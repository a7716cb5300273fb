// Command-line surface: gen / train / rank / detect / eval / schema.
//
// Every run resolves its full parameter set, seeds included, and writes a
// manifest next to its outputs (<out>.manifest.json, or manifest.json inside
// --out-dir) recording the resolved parameters plus content digests of every
// input and output file. Reruns with identical inputs and seeds produce
// byte-identical outputs and manifests. No environment variables are read
// and nothing is written outside the declared output paths.
//
// Exit codes: 0 success, 1 runtime or domain error, 2 usage error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mdet/classifier.hpp"
#include "mdet/datagen.hpp"
#include "mdet/digest.hpp"
#include "mdet/eval.hpp"
#include "mdet/explainer.hpp"
#include "mdet/feature_model.hpp"
#include "mdet/metamorphic.hpp"
#include "mdet/ranking.hpp"
#include "mdet/rng.hpp"

using json = nlohmann::json;
using namespace mdet;

namespace {

constexpr const char* kToolVersion = "0.1.0";

FeatureSchema schema_or_default(const std::string& path) {
    return path.empty() ? default_schema() : load_schema(path);
}

std::string schema_label(const std::string& path) {
    return path.empty() ? std::string("builtin:default") : path;
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open config file: " + path);
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw Error(path + ": " + e.what());
    }
    return j;
}

void write_manifest(const std::string& manifest_path, const std::string& subcommand,
                    std::uint64_t seed, const json& parameters,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    json m;
    m["tool"] = "mdet";
    m["version"] = kToolVersion;
    m["subcommand"] = subcommand;
    m["seed"] = seed;
    m["parameters"] = parameters;
    json in = json::object();
    for (const auto& p : inputs) {
        in[p] = file_digest(p);
    }
    json out = json::object();
    for (const auto& p : outputs) {
        out[p] = file_digest(p);
    }
    m["inputs"] = in;
    m["outputs"] = out;

    std::ofstream f(manifest_path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw Error("cannot open file for writing: " + manifest_path);
    }
    f << m.dump(2) << "\n";
    if (!f) {
        throw Error("write failed: " + manifest_path);
    }
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v) {
    return v ? fmt(*v) : std::string("NA");
}

// ---------------------------------------------------------------- gen ----

struct GenArgs {
    std::string schema_path;
    std::string config_path;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t n_benign = 0;
    std::size_t n_malware = 0;
    std::size_t n_repackaged = 0;
    double share_fraction = 0.85;
    std::size_t payload_size = 12;
};

int run_gen(const GenArgs& args, const CLI::App& cmd) {
    const FeatureSchema schema = schema_or_default(args.schema_path);
    GenConfig cfg = default_gen_config(schema, args.n_benign, args.n_malware,
                                       args.n_repackaged, args.seed);
    cfg.share_fraction = args.share_fraction;
    cfg.payload_size = args.payload_size;

    if (!args.config_path.empty()) {
        const json j = load_json(args.config_path);
        if (j.contains("n_benign") && !cmd.count("--n-benign")) {
            cfg.n_benign = j["n_benign"].get<std::size_t>();
        }
        if (j.contains("n_malware") && !cmd.count("--n-malware")) {
            cfg.n_malware = j["n_malware"].get<std::size_t>();
        }
        if (j.contains("n_repackaged") && !cmd.count("--n-repackaged")) {
            cfg.n_repackaged = j["n_repackaged"].get<std::size_t>();
        }
        if (j.contains("share_fraction") && !cmd.count("--share-fraction")) {
            cfg.share_fraction = j["share_fraction"].get<double>();
        }
        if (j.contains("payload_size") && !cmd.count("--payload-size")) {
            cfg.payload_size = j["payload_size"].get<std::size_t>();
        }
        if (j.contains("seed") && !cmd.count("--seed")) {
            cfg.seed = j["seed"].get<std::uint64_t>();
        }
        if (j.contains("benign_profile")) {
            cfg.benign_profile = j["benign_profile"].get<std::vector<double>>();
        }
        if (j.contains("malware_profile")) {
            cfg.malware_profile = j["malware_profile"].get<std::vector<double>>();
        }
    }

    const Dataset ds = generate(cfg);
    write_dataset(ds, args.out);

    json params;
    params["schema"] = schema_label(args.schema_path);
    params["schema_fingerprint"] = schema.fingerprint();
    params["n_benign"] = cfg.n_benign;
    params["n_malware"] = cfg.n_malware;
    params["n_repackaged"] = cfg.n_repackaged;
    params["share_fraction"] = cfg.share_fraction;
    params["payload_size"] = cfg.payload_size;
    std::vector<std::string> inputs;
    if (!args.schema_path.empty()) {
        inputs.push_back(args.schema_path);
    }
    if (!args.config_path.empty()) {
        inputs.push_back(args.config_path);
    }
    write_manifest(args.out + ".manifest.json", "gen", cfg.seed, params, inputs, {args.out});

    std::printf("wrote %zu samples (%zu benign, %zu malware, %zu repackaged) to %s\n",
                ds.samples.size(), cfg.n_benign, cfg.n_malware, cfg.n_repackaged,
                args.out.c_str());
    return 0;
}

// -------------------------------------------------------------- train ----

struct TrainArgs {
    std::string schema_path;
    std::string data_path;
    std::string config_path;
    std::string out;
    std::uint64_t seed = 0;
    double holdout = 0.1;
    std::size_t hidden_width = 200;
    std::size_t epochs = 30;
    double learning_rate = 0.05;
    std::size_t batch_size = 128;
    double l2_penalty = 0.0;
    bool class_weighted = false;
};

int run_train(const TrainArgs& args, const CLI::App& cmd) {
    const FeatureSchema schema = schema_or_default(args.schema_path);
    const Dataset all = parse_dataset(args.data_path, schema);

    TrainConfig cfg;
    cfg.hidden_width = args.hidden_width;
    cfg.epochs = args.epochs;
    cfg.learning_rate = args.learning_rate;
    cfg.batch_size = args.batch_size;
    cfg.l2_penalty = args.l2_penalty;
    cfg.class_weighted = args.class_weighted;
    cfg.seed = args.seed;
    if (!args.config_path.empty()) {
        const json j = load_json(args.config_path);
        if (j.contains("hidden_width") && !cmd.count("--hidden-width")) {
            cfg.hidden_width = j["hidden_width"].get<std::size_t>();
        }
        if (j.contains("epochs") && !cmd.count("--epochs")) {
            cfg.epochs = j["epochs"].get<std::size_t>();
        }
        if (j.contains("learning_rate") && !cmd.count("--learning-rate")) {
            cfg.learning_rate = j["learning_rate"].get<double>();
        }
        if (j.contains("batch_size") && !cmd.count("--batch-size")) {
            cfg.batch_size = j["batch_size"].get<std::size_t>();
        }
        if (j.contains("l2_penalty") && !cmd.count("--l2-penalty")) {
            cfg.l2_penalty = j["l2_penalty"].get<double>();
        }
        if (j.contains("class_weighted") && !cmd.count("--class-weighted")) {
            cfg.class_weighted = j["class_weighted"].get<bool>();
        }
        if (j.contains("seed") && !cmd.count("--seed")) {
            cfg.seed = j["seed"].get<std::uint64_t>();
        }
    }
    if (args.holdout < 0.0 || args.holdout >= 1.0) {
        throw Error("--holdout must be in [0, 1)");
    }

    // deterministic holdout split
    Dataset train_set, held_set;
    train_set.schema_fingerprint = held_set.schema_fingerprint = all.schema_fingerprint;
    std::vector<std::size_t> order(all.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    Rng split_rng(derive_seed(cfg.seed, 0x686f6c64));  // holdout stream
    split_rng.shuffle(order);
    const std::size_t held =
        static_cast<std::size_t>(args.holdout * static_cast<double>(all.samples.size()));
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < held ? held_set : train_set).samples.push_back(all.samples[order[i]]);
    }

    const Model model = train(train_set, cfg);
    save_model(model, args.out);

    std::printf("trained on %zu samples, final loss %.6f\n", train_set.samples.size(),
                model.meta.final_loss);
    if (held > 0) {
        ConfusionMatrix c;
        for (const auto& s : held_set.samples) {
            const bool truth = *s.label == Label::malware;
            const bool predicted = classify(model, s, {0.5}) == Label::malware;
            if (truth) {
                predicted ? ++c.tp : ++c.fn;
            } else {
                predicted ? ++c.fp : ++c.tn;
            }
        }
        const Metrics m = metrics_of(c);
        std::printf("held-out (%zu samples): accuracy=%s precision=%s recall=%s f1=%s\n", held,
                    fmt_opt(m.accuracy).c_str(), fmt_opt(m.precision).c_str(),
                    fmt_opt(m.recall).c_str(), fmt_opt(m.f1).c_str());
    }

    json params;
    params["schema"] = schema_label(args.schema_path);
    params["data"] = args.data_path;
    params["holdout"] = args.holdout;
    params["hidden_width"] = cfg.hidden_width;
    params["epochs"] = cfg.epochs;
    params["learning_rate"] = cfg.learning_rate;
    params["batch_size"] = cfg.batch_size;
    params["l2_penalty"] = cfg.l2_penalty;
    params["class_weighted"] = cfg.class_weighted;
    std::vector<std::string> inputs{args.data_path};
    if (!args.schema_path.empty()) {
        inputs.push_back(args.schema_path);
    }
    if (!args.config_path.empty()) {
        inputs.push_back(args.config_path);
    }
    write_manifest(args.out + ".manifest.json", "train", cfg.seed, params, inputs, {args.out});
    return 0;
}

// --------------------------------------------------------------- rank ----

struct RankArgs {
    std::string schema_path;
    std::string model_path;
    std::string dev_path;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t explain_samples = 1000;
    double kernel_width = 0.0;
    std::size_t top_m = 10;
    double ridge = 1e-3;
    unsigned threads = 1;
};

int run_rank(const RankArgs& args, const CLI::App&) {
    const FeatureSchema schema = schema_or_default(args.schema_path);
    const Model model = load_model(args.model_path);
    if (model.schema_fingerprint != schema.fingerprint()) {
        throw Error("model fingerprint " + model.schema_fingerprint +
                    " does not match schema " + schema.fingerprint());
    }
    const Dataset dev = parse_dataset(args.dev_path, schema);

    ExplainConfig cfg;
    cfg.num_samples = args.explain_samples;
    cfg.kernel_width = args.kernel_width;
    cfg.top_m = args.top_m;
    cfg.ridge_penalty = args.ridge;
    cfg.seed = args.seed;

    const RankedBenignFeatures ranking = rank_benign_features(model, dev, cfg, args.threads);
    save_ranking(ranking, schema, args.out);

    std::printf("ranked %zu benign-indicative features over %zu dev samples (%zu skipped)\n",
                ranking.entries.size(), ranking.dev_set_size, ranking.skipped);
    const std::size_t preview = std::min<std::size_t>(ranking.entries.size(), 10);
    for (std::size_t i = 0; i < preview; ++i) {
        std::printf("  %2zu. %s (%zu)\n", i + 1,
                    schema.at(ranking.entries[i].feature).qualified().c_str(),
                    ranking.entries[i].count);
    }

    json params;
    params["schema"] = schema_label(args.schema_path);
    params["model"] = args.model_path;
    params["dev"] = args.dev_path;
    params["explain_samples"] = cfg.num_samples;
    params["kernel_width"] = cfg.kernel_width;
    params["top_m"] = cfg.top_m;
    params["ridge_penalty"] = cfg.ridge_penalty;
    params["threads"] = args.threads;
    params["explain_config_digest"] = cfg.digest();
    std::vector<std::string> inputs{args.model_path, args.dev_path};
    if (!args.schema_path.empty()) {
        inputs.push_back(args.schema_path);
    }
    write_manifest(args.out + ".manifest.json", "rank", cfg.seed, params, inputs, {args.out});
    return 0;
}

// ------------------------------------------------------------- detect ----

struct DetectArgs {
    std::string schema_path;
    std::string model_path;
    std::string rank_path;
    std::string data_path;
    std::string out;
    std::size_t k = 6;
    double delta = 0.5;
};

int run_detect(const DetectArgs& args, const CLI::App&) {
    const FeatureSchema schema = schema_or_default(args.schema_path);
    const Model model = load_model(args.model_path);
    const RankedBenignFeatures ranking = load_ranking(args.rank_path, schema);
    const Dataset data = parse_dataset(args.data_path, schema);
    const DecisionThreshold threshold{args.delta};

    const std::vector<DetectionResult> results =
        detect_batch(model, data, ranking, args.k, threshold);

    ReportHeader header;
    header.k = args.k;
    header.delta_threshold = args.delta;
    header.model_digest = model_digest(model);
    header.ranking_digest = ranking_digest(ranking);
    write_detection_report(results, header, args.out);

    std::size_t flagged = 0, diverged = 0;
    for (const auto& r : results) {
        flagged += r.final_label == Label::malware;
        diverged += r.diverged;
    }
    std::printf("%zu apps: %zu flagged malware (%zu exposed by the relation)\n", results.size(),
                flagged, diverged);

    json params;
    params["schema"] = schema_label(args.schema_path);
    params["model"] = args.model_path;
    params["rank"] = args.rank_path;
    params["data"] = args.data_path;
    params["k"] = args.k;
    params["delta"] = args.delta;
    std::vector<std::string> inputs{args.model_path, args.rank_path, args.data_path};
    if (!args.schema_path.empty()) {
        inputs.push_back(args.schema_path);
    }
    write_manifest(args.out + ".manifest.json", "detect", 0, params, inputs, {args.out});
    return 0;
}

// --------------------------------------------------------------- eval ----

struct EvalArgs {
    std::string schema_path;
    std::string model_path;
    std::string rank_path;
    std::string data_path;
    std::string out_dir;
    std::size_t k_max = 10;
    double delta = 0.5;
    std::size_t bins = 40;
};

int run_eval(const EvalArgs& args, const CLI::App&) {
    const FeatureSchema schema = schema_or_default(args.schema_path);
    const Model model = load_model(args.model_path);
    const RankedBenignFeatures ranking = load_ranking(args.rank_path, schema);
    const Dataset data = parse_dataset(args.data_path, schema);
    const DecisionThreshold threshold{args.delta};

    const std::vector<SweepPoint> sweep = sweep_k(model, data, ranking, args.k_max, threshold);
    std::vector<DeltaHistogram> histograms;
    histograms.reserve(args.k_max + 1);
    for (std::size_t k = 0; k <= args.k_max; ++k) {
        histograms.push_back(delta_histogram(model, data, ranking, k, args.bins));
    }

    ReportMeta meta;
    meta.model_digest = model_digest(model);
    meta.ranking_digest = ranking_digest(ranking);
    meta.dataset_digest = file_digest(args.data_path);
    meta.schema_fingerprint = schema.fingerprint();
    meta.delta_threshold = args.delta;
    emit_report(sweep, histograms, meta, args.out_dir);

    for (const auto& p : sweep) {
        std::printf("k=%2zu accuracy=%s recall=%s benign_acc=%s repack_acc=%s\n", p.k,
                    fmt_opt(p.metrics.accuracy).c_str(), fmt_opt(p.metrics.recall).c_str(),
                    fmt_opt(p.metrics.benign_accuracy).c_str(),
                    fmt_opt(p.repackaged_accuracy).c_str());
    }

    json params;
    params["schema"] = schema_label(args.schema_path);
    params["model"] = args.model_path;
    params["rank"] = args.rank_path;
    params["data"] = args.data_path;
    params["k_max"] = args.k_max;
    params["delta"] = args.delta;
    params["bins"] = args.bins;
    std::vector<std::string> inputs{args.model_path, args.rank_path, args.data_path};
    if (!args.schema_path.empty()) {
        inputs.push_back(args.schema_path);
    }
    std::vector<std::string> outputs{args.out_dir + "/sweep.csv"};
    for (std::size_t k = 0; k <= args.k_max; ++k) {
        outputs.push_back(args.out_dir + "/deltas_k" + std::to_string(k) + ".csv");
    }
    write_manifest(args.out_dir + "/manifest.json", "eval", 0, params, inputs, outputs);
    return 0;
}

// ------------------------------------------------------------- schema ----

struct SchemaArgs {
    std::string file;
    std::string dump;
};

int run_schema(const SchemaArgs& args, const CLI::App&) {
    const FeatureSchema schema = schema_or_default(args.file);
    if (!args.dump.empty()) {
        write_schema(schema, args.dump);
        json params;
        params["schema"] = schema_label(args.file);
        std::vector<std::string> inputs;
        if (!args.file.empty()) {
            inputs.push_back(args.file);
        }
        write_manifest(args.dump + ".manifest.json", "schema", 0, params, inputs, {args.dump});
        std::printf("wrote %zu features to %s\n", schema.size(), args.dump.c_str());
        return 0;
    }
    std::size_t per_category[kCategoryCount] = {};
    for (const auto& f : schema.features()) {
        ++per_category[static_cast<std::size_t>(f.category)];
    }
    std::printf("schema: %s\n", schema_label(args.file).c_str());
    std::printf("features: %zu\n", schema.size());
    std::printf("fingerprint: %s\n", schema.fingerprint().c_str());
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
        std::printf("  %-10s %zu\n",
                    std::string(to_string(static_cast<FeatureCategory>(c))).c_str(),
                    per_category[c]);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Metamorphic detection of repackaged malware over binary app features"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    GenArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic labeled dataset");
    gen->add_option("--schema", gen_args.schema_path, "Schema file (default: built-in 694)");
    gen->add_option("--config", gen_args.config_path, "Generator config JSON");
    gen->add_option("--n-benign", gen_args.n_benign, "Benign sample count");
    gen->add_option("--n-malware", gen_args.n_malware, "Ordinary malware sample count");
    gen->add_option("--n-repackaged", gen_args.n_repackaged, "Repackaged malware sample count");
    gen->add_option("--share-fraction", gen_args.share_fraction,
                    "Fraction of template set bits a repackaged app retains");
    gen->add_option("--payload-size", gen_args.payload_size,
                    "Malicious features injected per repackaged app");
    gen->add_option("--seed", gen_args.seed, "RNG seed");
    gen->add_option("--out", gen_args.out, "Output dataset path")->required();

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "Train the classifier");
    train_cmd->add_option("--schema", train_args.schema_path, "Schema file");
    train_cmd->add_option("--data", train_args.data_path, "Labeled dataset")->required();
    train_cmd->add_option("--config", train_args.config_path, "Train config JSON");
    train_cmd->add_option("--holdout", train_args.holdout,
                          "Held-out fraction for reported metrics (0 disables)");
    train_cmd->add_option("--hidden-width", train_args.hidden_width, "Hidden layer width");
    train_cmd->add_option("--epochs", train_args.epochs, "Training epochs");
    train_cmd->add_option("--learning-rate", train_args.learning_rate, "SGD learning rate");
    train_cmd->add_option("--batch-size", train_args.batch_size, "Mini-batch size");
    train_cmd->add_option("--l2-penalty", train_args.l2_penalty, "L2 penalty on weights");
    train_cmd->add_flag("--class-weighted", train_args.class_weighted,
                        "Weight classes by inverse frequency");
    train_cmd->add_option("--seed", train_args.seed, "RNG seed");
    train_cmd->add_option("--out", train_args.out, "Output model path")->required();

    RankArgs rank_args;
    CLI::App* rank_cmd = app.add_subcommand("rank", "Rank benign-indicative features");
    rank_cmd->add_option("--schema", rank_args.schema_path, "Schema file");
    rank_cmd->add_option("--model", rank_args.model_path, "Trained model")->required();
    rank_cmd->add_option("--dev", rank_args.dev_path, "Development dataset")->required();
    rank_cmd->add_option("--explain-samples", rank_args.explain_samples,
                         "Perturbations per explanation");
    rank_cmd->add_option("--kernel-width", rank_args.kernel_width,
                         "Proximity kernel width (0 = 0.75*sqrt(active))");
    rank_cmd->add_option("--top-m", rank_args.top_m, "Contributions kept per explanation");
    rank_cmd->add_option("--ridge", rank_args.ridge, "Surrogate ridge penalty");
    rank_cmd->add_option("--threads", rank_args.threads, "Worker threads");
    rank_cmd->add_option("--seed", rank_args.seed, "RNG seed");
    rank_cmd->add_option("--out", rank_args.out, "Output rank file")->required();

    DetectArgs detect_args;
    CLI::App* detect_cmd = app.add_subcommand("detect", "Run detection over a dataset");
    detect_cmd->add_option("--schema", detect_args.schema_path, "Schema file");
    detect_cmd->add_option("--model", detect_args.model_path, "Trained model")->required();
    detect_cmd->add_option("--rank", detect_args.rank_path, "Rank file")->required();
    detect_cmd->add_option("--data", detect_args.data_path, "Dataset to scan")->required();
    detect_cmd->add_option("-k,--k", detect_args.k, "Top benign features to nullify");
    detect_cmd->add_option("--delta", detect_args.delta, "Decision threshold");
    detect_cmd->add_option("--out", detect_args.out, "Output report path")->required();

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Sweep k and emit evaluation reports");
    eval_cmd->add_option("--schema", eval_args.schema_path, "Schema file");
    eval_cmd->add_option("--model", eval_args.model_path, "Trained model")->required();
    eval_cmd->add_option("--rank", eval_args.rank_path, "Rank file")->required();
    eval_cmd->add_option("--data", eval_args.data_path, "Labeled dataset")->required();
    eval_cmd->add_option("--k-max", eval_args.k_max, "Largest k in the sweep");
    eval_cmd->add_option("--delta", eval_args.delta, "Decision threshold");
    eval_cmd->add_option("--bins", eval_args.bins, "Delta histogram bins");
    eval_cmd->add_option("--out-dir", eval_args.out_dir, "Report directory")->required();

    SchemaArgs schema_args;
    CLI::App* schema_cmd = app.add_subcommand("schema", "Inspect or dump a feature schema");
    schema_cmd->add_option("--file", schema_args.file, "Schema file (default: built-in)");
    schema_cmd->add_option("--dump", schema_args.dump, "Write the schema to this path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) {
            return run_gen(gen_args, *gen);
        }
        if (train_cmd->parsed()) {
            return run_train(train_args, *train_cmd);
        }
        if (rank_cmd->parsed()) {
            return run_rank(rank_args, *rank_cmd);
        }
        if (detect_cmd->parsed()) {
            return run_detect(detect_args, *detect_cmd);
        }
        if (eval_cmd->parsed()) {
            return run_eval(eval_args, *eval_cmd);
        }
        if (schema_cmd->parsed()) {
            return run_schema(schema_args, *schema_cmd);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
