#pragma once

// Local surrogate explanation of a single prediction. The procedure:
//
//   1. take the active features (1-bits) of the vector being explained;
//   2. draw perturbations by independently zeroing each active bit with
//      probability 1/2 (absent bits are never introduced — presence/absence
//      semantics are preserved);
//   3. query the model's malware probability on each perturbation;
//   4. weight each perturbation by exp(-d^2 / kernel_width^2) where d is the
//      Hamming distance to the original over the active features;
//   5. fit a weighted ridge regression of the probabilities on the
//      active-feature indicator columns (intercept unpenalized);
//   6. report the top coefficients by magnitude.
//
// Sign convention: a positive weight means the feature's presence pushes the
// prediction toward malware; negative pushes toward benign. The surrogate
// always explains the malware-class probability so signs are comparable
// across samples.
//
// explain() is a pure function of (model, vector, config): the perturbation
// stream is seeded from (config.seed, hash(app_id)), so explanations are
// reproducible regardless of evaluation order or concurrency.

#include <cstdint>
#include <string>
#include <vector>

#include "mdet/classifier.hpp"
#include "mdet/feature_model.hpp"

namespace mdet {

struct ExplainConfig {
    std::size_t num_samples = 1000;
    double kernel_width = 0.0;  // <= 0 selects 0.75 * sqrt(active-feature count)
    std::size_t top_m = 10;
    double ridge_penalty = 1e-3;
    std::uint64_t seed = 0;

    void validate() const;

    // Canonical digest of every field; rank files carry it so a ranking
    // cannot be silently reused under a different explainer configuration.
    std::string digest() const;
};

struct Contribution {
    std::size_t feature = 0;
    double weight = 0.0;

    bool operator==(const Contribution&) const = default;
};

struct Explanation {
    std::string app_id;
    std::vector<Contribution> contributions;  // |weight| descending, at most top_m
    double intercept = 0.0;
    double surrogate_fit_r2 = 0.0;  // clamped to [0, 1]
};

Explanation explain(const Model& m, const FeatureVector& v, const ExplainConfig& cfg);

// Indices (ascending) of contributions with strictly negative weight — the
// benign-indicative features of this prediction.
std::vector<std::size_t> benign_features_of(const Explanation& e);

// Audit export: one "app_id,feature_name,weight" row per contribution.
std::string to_csv(const Explanation& e, const FeatureSchema& schema);

}  // namespace mdet
