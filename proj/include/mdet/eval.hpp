#pragma once

// Metrics (malware = positive class), k-sweeps, probability-delta
// distributions and report emission.
//
// Undefined-metric convention: ratios with zero denominators (precision with
// no positive predictions, recall with no positive samples, ...) surface as
// an absent optional and print as "NA" — never silently 0 or 1.
//
// Repackaged-only slices rely on the generator's app-id tag: a sample whose
// app_id starts with "repack" counts as repackaged. Untagged datasets simply
// have no repackaged slice.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdet/classifier.hpp"
#include "mdet/feature_model.hpp"
#include "mdet/metamorphic.hpp"
#include "mdet/ranking.hpp"

namespace mdet {

bool is_repackaged_tag(std::string_view app_id);

struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }

    bool operator==(const ConfusionMatrix&) const = default;
};

struct Metrics {
    std::optional<double> accuracy;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;                // harmonic mean of precision and recall
    std::optional<double> benign_accuracy;   // tn / (tn + fp)
    std::optional<double> malware_accuracy;  // == recall
};

// results[i] is scored against samples[i] (detect_batch preserves order).
// Every sample must carry a ground-truth label.
ConfusionMatrix confusion(std::span<const DetectionResult> results,
                          std::span<const FeatureVector> samples);

Metrics metrics_of(const ConfusionMatrix& c);

struct SweepPoint {
    std::size_t k = 0;
    Metrics vanilla;  // metrics at k = 0, repeated on every point for context
    Metrics metrics;
    std::optional<double> repackaged_accuracy;  // tagged samples only
};

// Detection metrics at every k in 0..k_max. Verifies on every run that each
// k's malware set contains the vanilla (k = 0) malware set and throws if the
// containment is ever violated.
std::vector<SweepPoint> sweep_k(const Model& m, const Dataset& data,
                                const RankedBenignFeatures& r, std::size_t k_max,
                                DecisionThreshold t);

struct DeltaHistogram {
    std::size_t k = 0;
    std::size_t bins = 0;
    // per-bin counts over [-1, 1]; bin i covers [-1 + 2i/bins, -1 + 2(i+1)/bins)
    std::vector<std::size_t> benign;
    std::vector<std::size_t> malware;  // malware-labeled, not repack-tagged
    std::vector<std::size_t> repackaged;
    std::optional<double> mean_benign;
    std::optional<double> mean_malware;
    std::optional<double> mean_repackaged;
};

// Unconditional probability deltas, binned per group. Counts across the
// three groups sum to the dataset size.
DeltaHistogram delta_histogram(const Model& m, const Dataset& data,
                               const RankedBenignFeatures& r, std::size_t k, std::size_t bins);

struct ReportMeta {
    std::string model_digest;
    std::string ranking_digest;
    std::string dataset_digest;
    std::string schema_fingerprint;
    double delta_threshold = 0.5;
};

// Writes out_dir/sweep.csv and out_dir/deltas_k<k>.csv for each histogram.
// Identical inputs re-emit byte-identical files.
void emit_report(std::span<const SweepPoint> sweep, std::span<const DeltaHistogram> histograms,
                 const ReportMeta& meta, const std::string& out_dir);

}  // namespace mdet
