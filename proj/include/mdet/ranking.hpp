#pragma once

// Global ranking of benign-indicative features: explain every sample of a
// development set, collect each explanation's benign features, and count
// occurrences. A feature is counted at most once per sample. Entries sort by
// count descending, ties by ascending feature index.
//
// Because per-sample explanation streams derive from (seed, app_id), the
// aggregation is a commutative counter merge: thread count and sample order
// never change the result.

#include <cstdint>
#include <string>
#include <vector>

#include "mdet/classifier.hpp"
#include "mdet/explainer.hpp"
#include "mdet/feature_model.hpp"

namespace mdet {

struct RankEntry {
    std::size_t feature = 0;
    std::size_t count = 0;

    bool operator==(const RankEntry&) const = default;
};

struct RankedBenignFeatures {
    std::vector<RankEntry> entries;
    std::size_t dev_set_size = 0;
    std::size_t skipped = 0;  // samples with no active features
    std::string explain_config_digest;
    std::string schema_fingerprint;
};

// Samples with zero active features are skipped (and counted in `skipped`);
// any other explainer failure aborts, naming the sample.
RankedBenignFeatures rank_benign_features(const Model& m, const Dataset& dev,
                                          const ExplainConfig& cfg, unsigned threads = 1);

// First k feature indices in rank order. Throws if k exceeds the entry count.
std::vector<std::size_t> top_k(const RankedBenignFeatures& r, std::size_t k);

// Rank file: "#schema=", "#dev_size=", "#skipped=", "#explain_config="
// header lines, a "rank,feature_name,count" column line, then one row per
// entry.
std::string serialize_ranking(const RankedBenignFeatures& r, const FeatureSchema& schema);
void save_ranking(const RankedBenignFeatures& r, const FeatureSchema& schema,
                  const std::string& path);
RankedBenignFeatures load_ranking(const std::string& path, const FeatureSchema& schema);

// hex16 digest of the serialized rows; detection reports record it.
std::string ranking_digest(const RankedBenignFeatures& r);

}  // namespace mdet
