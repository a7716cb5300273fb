#pragma once

// The detection procedure itself. For one app:
//
//   - if the model already gives malware probability >= delta, the verdict is
//     malware and the relation is not applied (apps the classifier flags stay
//     flagged — only benign-leaning evidence is ever removed);
//   - otherwise the top-k globally ranked benign features are nullified and
//     the app is re-classified; a follow-up probability at or above delta
//     exposes the app ("diverged") and the verdict flips to malware.
//
// Consequence, asserted by the evaluation layer: the set of apps this labels
// malware always contains the set the plain classifier labels malware, and
// k = 0 reduces the procedure to the plain classifier exactly.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mdet/classifier.hpp"
#include "mdet/feature_model.hpp"
#include "mdet/ranking.hpp"

namespace mdet {

struct DetectionResult {
    std::string app_id;
    double original_proba = 0.0;
    std::optional<double> followup_proba;      // present only when the relation ran
    std::vector<std::size_t> applied_features; // nullified indices; empty when it did not
    Label final_label = Label::benign;
    bool diverged = false;                     // relation ran and crossed the threshold
    std::optional<double> delta;               // followup_proba - original_proba
};

DetectionResult detect(const Model& m, const FeatureVector& v, const RankedBenignFeatures& r,
                       std::size_t k, DecisionThreshold t);

// Follow-up minus original probability, computed unconditionally (no malware
// short-circuit) — the quantity whose distribution separates repackaged
// malware from truly benign apps.
double probability_delta(const Model& m, const FeatureVector& v, const RankedBenignFeatures& r,
                         std::size_t k);

// Element-wise detect in input order. The first per-sample failure aborts,
// naming the sample index.
std::vector<DetectionResult> detect_batch(const Model& m, const Dataset& data,
                                          const RankedBenignFeatures& r, std::size_t k,
                                          DecisionThreshold t);

// Report file: header lines recording k, delta, the model digest and the
// rank digest, then rows
// "app_id,original_proba,followup_proba|NA,final_label,diverged,delta|NA".
struct ReportHeader {
    std::size_t k = 0;
    double delta_threshold = 0.5;
    std::string model_digest;
    std::string ranking_digest;
};

std::string serialize_detection_report(const std::vector<DetectionResult>& results,
                                       const ReportHeader& header);
void write_detection_report(const std::vector<DetectionResult>& results,
                            const ReportHeader& header, const std::string& path);

}  // namespace mdet
