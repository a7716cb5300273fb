// Acceptance suite: runs the nine release criteria end to end and prints one
// pass/fail line per criterion. Exits nonzero if any criterion fails.
//
// Usage: mdet_acceptance <path-to-mdet-cli>
//
// The cross-criterion benchmark is fixed: a model trained with default
// settings on a generated training set (seed 11, 5000 benign / 1000
// malware), benign features ranked over a disjoint development set (seed 12,
// 800 / 200), and detection evaluated on a disjoint test set (seed 7, 5000
// benign / 1000 ordinary malware / 1000 repackaged at share 0.85).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "linear_oracle.hpp"
#include "mdet/datagen.hpp"
#include "mdet/eval.hpp"
#include "mdet/rng.hpp"

using namespace mdet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    double seconds = 0.0;
    double limit_seconds = 0.0;
    std::string detail;
};

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool condition, const std::string& message) {
        if (!condition && ok) {
            ok = false;
            detail = message;
        }
    }
    void note(const std::string& message) {
        if (ok) {
            detail = message;
        }
    }
};

CriterionResult run_criterion(int id, const std::string& name, double limit_seconds,
                              const std::function<void(Check&)>& body) {
    CriterionResult r;
    r.id = id;
    r.name = name;
    r.limit_seconds = limit_seconds;
    Check check;
    const auto t0 = Clock::now();
    try {
        body(check);
    } catch (const std::exception& e) {
        check.ok = false;
        check.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    if (check.ok && r.seconds > limit_seconds) {
        check.ok = false;
        check.detail = "runtime limit exceeded";
    }
    r.passed = check.ok;
    r.detail = check.detail;
    return r;
}

// Benchmark artifacts shared by criteria 2, 3, 6 and 7; built inside
// criterion 6 so its runtime budget covers the whole pipeline.
struct Benchmark {
    Model model;
    RankedBenignFeatures ranking;
    Dataset test_set;
    bool ready = false;
};

Benchmark g_benchmark;

double repack_recall(const std::vector<DetectionResult>& results,
                     const std::vector<FeatureVector>& samples) {
    std::size_t total = 0, hit = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (is_repackaged_tag(samples[i].app_id)) {
            ++total;
            hit += results[i].final_label == Label::malware;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(total);
}

double benign_accuracy_of(const std::vector<DetectionResult>& results,
                          const std::vector<FeatureVector>& samples) {
    std::size_t total = 0, hit = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (*samples[i].label == Label::benign) {
            ++total;
            hit += results[i].final_label == Label::benign;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(total);
}

// --- criterion bodies -----------------------------------------------------

void criterion_nullification(Check& check) {
    Rng rng(101);
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t n = 1 + rng.next_below(64);
        FeatureVector v;
        v.bits.resize(n);
        for (auto& b : v.bits) {
            b = rng.bernoulli(0.5) ? 1 : 0;
        }
        std::vector<std::size_t> s1, s2;
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.bernoulli(0.25)) {
                s1.push_back(i);
            }
            if (rng.bernoulli(0.25)) {
                s2.push_back(i);
            }
        }
        const FeatureVector once = nullify(v, s1);
        // bitwise definition
        for (std::size_t i = 0; i < n; ++i) {
            const bool in_set = std::find(s1.begin(), s1.end(), i) != s1.end();
            check.require(once.bits[i] == (in_set ? 0 : v.bits[i]),
                          "bitwise definition violated");
        }
        check.require(once.popcount() <= v.popcount(), "popcount grew");
        // idempotence
        check.require(nullify(once, s1).bits == once.bits, "not idempotent");
        // union composition
        std::vector<std::size_t> su = s1;
        su.insert(su.end(), s2.begin(), s2.end());
        std::sort(su.begin(), su.end());
        su.erase(std::unique(su.begin(), su.end()), su.end());
        check.require(nullify(v, su).bits == nullify(once, s2).bits,
                      "union composition violated");
        if (!check.ok) {
            return;
        }
    }
    check.note("10000 random (vector, set) pairs, exact");
}

void criterion_superset(Check& check) {
    const auto& b = g_benchmark;
    check.require(b.ready, "benchmark pipeline unavailable");
    if (!check.ok) {
        return;
    }
    const DecisionThreshold t{0.5};
    const auto vanilla = detect_batch(b.model, b.test_set, b.ranking, 0, t);
    double prev_recall = -1.0;
    double prev_benign = 2.0;
    for (std::size_t k = 0; k <= 10; ++k) {
        const auto at_k = detect_batch(b.model, b.test_set, b.ranking, k, t);
        for (std::size_t i = 0; i < at_k.size(); ++i) {
            if (vanilla[i].final_label == Label::malware) {
                check.require(at_k[i].final_label == Label::malware,
                              "containment violated at k=" + std::to_string(k));
            }
        }
        const Metrics m = metrics_of(confusion(at_k, b.test_set.samples));
        check.require(*m.recall >= prev_recall, "recall decreased at k=" + std::to_string(k));
        check.require(*m.benign_accuracy <= prev_benign,
                      "benign accuracy increased at k=" + std::to_string(k));
        prev_recall = *m.recall;
        prev_benign = *m.benign_accuracy;
        if (!check.ok) {
            return;
        }
    }
    check.note("containment exact for k=0..10; recall and benign accuracy monotone");
}

void criterion_k0_identity(Check& check) {
    check.require(g_benchmark.ready, "benchmark pipeline unavailable");
    if (!check.ok) {
        return;
    }
    const FeatureSchema schema = default_schema();
    const Dataset big = generate(default_gen_config(schema, 7000, 1500, 1500, 21));
    const DecisionThreshold t{0.5};
    const auto results = detect_batch(g_benchmark.model, big, g_benchmark.ranking, 0, t);
    for (std::size_t i = 0; i < results.size(); ++i) {
        check.require(results[i].final_label == classify(g_benchmark.model, big.samples[i], t),
                      "label mismatch at sample " + std::to_string(i));
        if (!check.ok) {
            return;
        }
    }
    check.note("10000 samples, label-for-label equal to the plain classifier");
}

void criterion_classifier_numerics(Check& check) {
    // gradient check: 6 inputs, 3 hidden units, 8 samples
    Rng rng(303);
    Model m;
    m.schema_fingerprint = "acc";
    m.input_width = 6;
    m.hidden_width = 3;
    auto fill = [&](std::vector<double>& v, std::size_t n) {
        v.resize(n);
        for (auto& w : v) {
            w = 2.0 * rng.next_double() - 1.0;
        }
    };
    fill(m.w1, 18);
    fill(m.b1, 3);
    fill(m.w2, 6);
    fill(m.b2, 2);

    Dataset ds;
    ds.schema_fingerprint = "acc";
    for (int i = 0; i < 8; ++i) {
        FeatureVector v;
        v.app_id = "s" + std::to_string(i);
        v.bits.resize(6);
        for (auto& b : v.bits) {
            b = rng.bernoulli(0.5) ? 1 : 0;
        }
        v.label = i % 2 ? Label::malware : Label::benign;
        ds.samples.push_back(std::move(v));
    }
    const double l2 = 0.01;
    const Gradients g = dataset_gradient(m, ds, l2);
    const double step = 1e-5;
    double worst = 0.0;
    auto check_block = [&](std::vector<double>& params, const std::vector<double>& grad) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double saved = params[i];
            params[i] = saved + step;
            const double up = dataset_loss(m, ds, l2);
            params[i] = saved - step;
            const double down = dataset_loss(m, ds, l2);
            params[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double denom = std::max({std::fabs(numeric), std::fabs(grad[i]), 1e-8});
            worst = std::max(worst, std::fabs(numeric - grad[i]) / denom);
        }
    };
    check_block(m.w1, g.w1);
    check_block(m.b1, g.b1);
    check_block(m.w2, g.w2);
    check_block(m.b2, g.b2);
    check.require(worst <= 1e-4, "gradient relative error " + std::to_string(worst));

    // softmax normalization: the malware probability plus the probability
    // from the class-swapped model must be 1
    Model swapped = m;
    std::swap(swapped.b2[0], swapped.b2[1]);
    for (std::size_t j = 0; j < m.hidden_width; ++j) {
        std::swap(swapped.w2[j], swapped.w2[m.hidden_width + j]);
    }
    double worst_sum = 0.0;
    for (int i = 0; i < 1000; ++i) {
        FeatureVector v;
        v.bits.resize(6);
        for (auto& b : v.bits) {
            b = rng.bernoulli(0.5) ? 1 : 0;
        }
        const double p = predict_proba(m, v);
        const double q = predict_proba(swapped, v);
        worst_sum = std::max(worst_sum, std::fabs(p + q - 1.0));
    }
    check.require(worst_sum <= 1e-9, "softmax normalization error " + std::to_string(worst_sum));
    char buf[128];
    std::snprintf(buf, sizeof(buf), "gradient rel err %.2e; normalization err %.2e", worst,
                  worst_sum);
    check.note(buf);
}

void criterion_explainer_oracle(Check& check) {
    Rng rng(404);
    std::size_t checked = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 14;
        const std::size_t k = 3 + rng.next_below(8);  // 3..10 active
        std::vector<double> c(n);
        for (auto& w : c) {
            w = 6.0 * rng.next_double() - 3.0;
        }
        const double c0 = 2.0 * rng.next_double() - 1.0;
        const Model m = mdet_test::linear_logit_model(c, c0);

        FeatureVector v;
        v.app_id = "oracle-" + std::to_string(trial);
        v.bits.assign(n, 0);
        std::vector<std::size_t> active;
        while (active.size() < k) {
            const std::size_t i = rng.next_below(n);
            if (!v.bits[i]) {
                v.bits[i] = 1;
                active.push_back(i);
            }
        }
        std::sort(active.begin(), active.end());
        const auto oracle = mdet_test::brute_force_coefficients(m, active);

        ExplainConfig cfg;
        cfg.num_samples = 20000;
        cfg.top_m = n;
        cfg.seed = 1000 + static_cast<std::uint64_t>(trial);
        const Explanation e = explain(m, v, cfg);

        for (std::size_t j = 0; j < active.size(); ++j) {
            if (std::fabs(oracle[j]) <= 0.01) {
                continue;
            }
            double got = 0.0;
            for (const auto& contribution : e.contributions) {
                if (contribution.feature == active[j]) {
                    got = contribution.weight;
                    break;
                }
            }
            ++checked;
            check.require(got * oracle[j] > 0.0,
                          "sign mismatch: trial " + std::to_string(trial) + " feature " +
                              std::to_string(active[j]) + " oracle " +
                              std::to_string(oracle[j]) + " got " + std::to_string(got));
            if (!check.ok) {
                return;
            }
        }
    }
    check.note(std::to_string(checked) + " signs checked across 50 random models");
}

void criterion_directional(Check& check) {
    const FeatureSchema schema = default_schema();
    const Dataset train_set = generate(default_gen_config(schema, 5000, 1000, 0, 11));
    const Dataset dev_set = generate(default_gen_config(schema, 800, 200, 0, 12));
    Dataset test_set = generate(default_gen_config(schema, 5000, 1000, 1000, 7));

    TrainConfig tc;
    tc.seed = 11;
    Model model = train(train_set, tc);

    ExplainConfig ec;
    ec.seed = 99;
    RankedBenignFeatures ranking = rank_benign_features(model, dev_set, ec);

    const DecisionThreshold t{0.5};
    const auto vanilla = detect_batch(model, test_set, ranking, 0, t);
    const double vanilla_repack = repack_recall(vanilla, test_set.samples);
    const double vanilla_benign = benign_accuracy_of(vanilla, test_set.samples);

    double best_gain = -1.0;
    std::size_t best_k = 0;
    double benign_at_best = 0.0;
    for (std::size_t k = 1; k <= 10; ++k) {
        const auto at_k = detect_batch(model, test_set, ranking, k, t);
        const double gain = repack_recall(at_k, test_set.samples) - vanilla_repack;
        if (gain > best_gain) {
            best_gain = gain;
            best_k = k;
            benign_at_best = benign_accuracy_of(at_k, test_set.samples);
        }
    }
    const double benign_drop = vanilla_benign - benign_at_best;
    check.require(best_gain >= 0.05, "repackaged recall gain " + std::to_string(best_gain) +
                                         " below 5 points");
    check.require(benign_drop <= 0.03,
                  "benign accuracy drop " + std::to_string(benign_drop) + " above 3 points");

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "repack recall %.3f -> %.3f at k=%zu (+%.1f pts); benign drop %.2f pts",
                  vanilla_repack, vanilla_repack + best_gain, best_k, 100.0 * best_gain,
                  100.0 * benign_drop);
    check.note(buf);

    g_benchmark.model = std::move(model);
    g_benchmark.ranking = std::move(ranking);
    g_benchmark.test_set = std::move(test_set);
    g_benchmark.ready = true;
}

void criterion_delta_distribution(Check& check) {
    // Margin frozen from the first benchmark run, which measured a gap of
    // 0.33 between the repackaged and benign mean deltas at k = 6.
    constexpr double kFrozenMargin = 0.10;
    check.require(g_benchmark.ready, "benchmark pipeline unavailable");
    if (!check.ok) {
        return;
    }
    const DeltaHistogram h =
        delta_histogram(g_benchmark.model, g_benchmark.test_set, g_benchmark.ranking, 6, 40);
    check.require(h.mean_repackaged.has_value() && h.mean_benign.has_value(),
                  "missing group means");
    if (!check.ok) {
        return;
    }
    check.require(*h.mean_repackaged > *h.mean_benign, "repackaged mean not above benign mean");
    check.require(*h.mean_repackaged - *h.mean_benign >= kFrozenMargin,
                  "gap " + std::to_string(*h.mean_repackaged - *h.mean_benign) +
                      " under frozen margin");
    char buf[128];
    std::snprintf(buf, sizeof(buf), "mean delta repackaged %.3f vs benign %.3f (margin %.2f)",
                  *h.mean_repackaged, *h.mean_benign, kFrozenMargin);
    check.note(buf);
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void criterion_cli_determinism(Check& check, const std::string& cli) {
    const fs::path dir = fs::temp_directory_path() / "mdet_acceptance_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string d = dir.string();

    auto run = [&](const std::string& args) {
        const std::string cmd = "\"" + cli + "\" " + args + " > /dev/null 2>&1";
        return std::system(cmd.c_str()) == 0;
    };
    struct Step {
        std::string args;
        std::vector<std::string> outputs;
    };
    const std::vector<Step> steps = {
        {"gen --n-benign 400 --n-malware 100 --n-repackaged 80 --seed 7 --out " + d + "/test.ds",
         {"test.ds", "test.ds.manifest.json"}},
        {"gen --n-benign 800 --n-malware 200 --seed 11 --out " + d + "/train.ds",
         {"train.ds", "train.ds.manifest.json"}},
        {"gen --n-benign 300 --n-malware 80 --seed 12 --out " + d + "/dev.ds",
         {"dev.ds", "dev.ds.manifest.json"}},
        {"train --data " + d + "/train.ds --epochs 15 --seed 11 --out " + d + "/model.bin",
         {"model.bin", "model.bin.manifest.json"}},
        {"rank --model " + d + "/model.bin --dev " + d + "/dev.ds --explain-samples 400"
         " --seed 99 --out " + d + "/rank.txt",
         {"rank.txt", "rank.txt.manifest.json"}},
        {"detect --model " + d + "/model.bin --rank " + d + "/rank.txt --data " + d +
         "/test.ds -k 6 --delta 0.5 --out " + d + "/report.csv",
         {"report.csv", "report.csv.manifest.json"}},
        {"eval --model " + d + "/model.bin --rank " + d + "/rank.txt --data " + d +
         "/test.ds --k-max 4 --out-dir " + d + "/report",
         {"report/sweep.csv", "report/deltas_k0.csv", "report/deltas_k4.csv",
          "report/manifest.json"}},
        {"schema --dump " + d + "/schema.txt", {"schema.txt", "schema.txt.manifest.json"}},
    };

    // first pass
    for (const auto& step : steps) {
        check.require(run(step.args), "command failed: " + step.args);
        if (!check.ok) {
            return;
        }
    }
    std::vector<std::pair<std::string, std::string>> first;
    for (const auto& step : steps) {
        for (const auto& out : step.outputs) {
            first.emplace_back(out, read_bytes(dir / out));
        }
    }
    // second pass over the same paths
    for (const auto& step : steps) {
        check.require(run(step.args), "rerun failed: " + step.args);
        if (!check.ok) {
            return;
        }
    }
    for (const auto& [name, bytes] : first) {
        check.require(read_bytes(dir / name) == bytes, "rerun changed " + name);
        if (!check.ok) {
            return;
        }
    }
    fs::remove_all(dir);
    check.note(std::to_string(first.size()) + " output files byte-identical across reruns");
}

void criterion_metric_oracle(Check& check) {
    Rng rng(505);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t tp = rng.next_below(200);
        const std::size_t fp = rng.next_below(200);
        const std::size_t tn = rng.next_below(200);
        const std::size_t fn = rng.next_below(200);
        const Metrics m = metrics_of({tp, fp, tn, fn});

        // independent formulas
        if (tp + fp > 0) {
            const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            check.require(m.precision && std::fabs(*m.precision - precision) <= 1e-12,
                          "precision mismatch");
        } else {
            check.require(!m.precision.has_value(), "precision should be undefined");
        }
        if (tp + fn > 0) {
            const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
            check.require(m.recall && std::fabs(*m.recall - recall) <= 1e-12, "recall mismatch");
        } else {
            check.require(!m.recall.has_value(), "recall should be undefined");
        }
        const std::size_t total = tp + fp + tn + fn;
        if (total > 0) {
            const double accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
            check.require(m.accuracy && std::fabs(*m.accuracy - accuracy) <= 1e-12,
                          "accuracy mismatch");
        }
        // f1 is the harmonic mean of precision and recall where both are
        // defined and positive
        if (m.precision && m.recall && *m.precision > 0.0 && *m.recall > 0.0) {
            const double harmonic = 2.0 / (1.0 / *m.precision + 1.0 / *m.recall);
            check.require(m.f1 && std::fabs(*m.f1 - harmonic) <= 1e-12,
                          "f1 is not the harmonic mean");
        }
        if (!check.ok) {
            return;
        }
    }
    check.note("100 random confusion matrices, max deviation under 1e-12");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: %s <path-to-mdet-cli>\n", argv[0]);
        return 2;
    }
    const std::string cli = argv[1];

    std::vector<CriterionResult> results;
    results.push_back(
        run_criterion(1, "feature nullification is exact", 1.0, criterion_nullification));
    results.push_back(
        run_criterion(4, "classifier numerics", 1.0, criterion_classifier_numerics));
    results.push_back(run_criterion(5, "explainer signs match the brute-force oracle", 30.0,
                                    criterion_explainer_oracle));
    results.push_back(
        run_criterion(9, "metrics match an independent oracle", 1.0, criterion_metric_oracle));
    results.push_back(run_criterion(
        6, "feature removal recovers hidden repackaged malware", 300.0, criterion_directional));
    results.push_back(run_criterion(2, "detected-malware set contains the vanilla set", 10.0,
                                    criterion_superset));
    results.push_back(run_criterion(3, "k = 0 reduces detection to the plain classifier", 5.0,
                                    criterion_k0_identity));
    results.push_back(run_criterion(7, "repackaged deltas dominate benign deltas", 60.0,
                                    criterion_delta_distribution));
    results.push_back(run_criterion(8, "CLI reruns are byte-identical", 300.0,
                                    [&](Check& check) { criterion_cli_determinism(check, cli); }));

    std::sort(results.begin(), results.end(),
              [](const CriterionResult& a, const CriterionResult& b) { return a.id < b.id; });

    int failures = 0;
    for (const auto& r : results) {
        failures += !r.passed;
        std::printf("[%s] criterion %d (%.2fs/%.0fs) %s%s%s\n", r.passed ? "PASS" : "FAIL", r.id,
                    r.seconds, r.limit_seconds, r.name.c_str(), r.detail.empty() ? "" : ": ",
                    r.detail.c_str());
    }
    if (failures > 0) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all %zu criteria passed\n", results.size());
    return 0;
}
