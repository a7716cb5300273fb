#pragma once

// Deterministic synthetic corpus generator. Three populations:
//
//   benign      — independent Bernoulli draws from the benign profile;
//   malware     — draws from the malware profile;
//   repackaged  — a benign-profile template with a share_fraction of its set
//                 bits retained, plus a payload sampled from the
//                 highest-probability malware-profile features. Labeled
//                 malware.
//
// Retention keeps ceil(share_fraction * popcount) of the template's set
// bits, so each repackaged sample shares at least share_fraction of the
// template's present features by construction.
//
// App ids are "benign-NNNNNN", "malware-NNNNNN" and "repack-NNNNNN"; the
// "repack-" prefix is the tag the evaluation layer uses to slice
// repackaged-only accuracy.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mdet/feature_model.hpp"
#include "mdet/rng.hpp"

namespace mdet {

struct GenConfig {
    FeatureSchema schema;
    std::size_t n_benign = 0;
    std::size_t n_malware = 0;
    std::size_t n_repackaged = 0;
    std::vector<double> benign_profile;   // one Bernoulli probability per feature
    std::vector<double> malware_profile;
    double share_fraction = 0.85;
    std::size_t payload_size = 12;
    std::uint64_t seed = 0;

    void validate() const;
};

// Default profiles over a schema: probability mass concentrated on the
// leading benign-indicative features (the concrete named ones in the default
// schema), a disjoint malicious block, a band of common features both
// classes share, and rare noise elsewhere. Tuned so the two classes are
// separable while repackaged samples land near the benign manifold.
std::pair<std::vector<double>, std::vector<double>> default_profiles(const FeatureSchema& schema);

// Binomial mean of a profile draw's popcount (sum of the probabilities);
// the target the generator's output is checked against.
double expected_popcount(std::span<const double> profile);

// GenConfig with default profiles filled in.
GenConfig default_gen_config(const FeatureSchema& schema, std::size_t n_benign,
                             std::size_t n_malware, std::size_t n_repackaged, std::uint64_t seed);

// The payload candidate pool: the 2 * payload_size features with the highest
// malware-profile probability (ties by ascending index). Throws when fewer
// than payload_size features have nonzero probability.
std::vector<std::size_t> payload_pool(std::span<const double> malware_profile,
                                      std::size_t payload_size);

// One repackaging step, exposed so the sharing guarantee is testable in
// isolation: keeps ceil(share_fraction * popcount) of tmpl's set bits and
// sets `payload` on top. app_id and label are left for the caller.
FeatureVector repackage(const FeatureVector& tmpl, std::span<const std::size_t> payload,
                        double share_fraction, Rng& rng);

Dataset generate(const GenConfig& cfg);

}  // namespace mdet
