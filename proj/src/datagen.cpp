#include "mdet/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace mdet {

namespace {

// Default profile bands over the schema index space. The leading band covers
// the named benign-indicative features of the default schema; the malicious
// block is disjoint from it so the payload pool never collides with the
// benign core.
//
// The malicious block is deliberately only twice the default payload size:
// an ordinary malware draw then carries about as many malicious-block bits
// as a repackaged app's injected payload, which is what puts repackaged
// samples near the decision boundary instead of safely on either side.
constexpr std::size_t kBenignCoreEnd = 20;
constexpr std::size_t kBenignSecondaryEnd = 50;
constexpr std::size_t kMaliciousEnd = 74;
constexpr std::size_t kCommonEnd = 200;

constexpr double kBenignCoreP[2] = {0.80, 0.20};   // {benign, malware} probability
constexpr double kBenignSecondaryP[2] = {0.30, 0.05};
constexpr double kMaliciousP[2] = {0.02, 0.55};
constexpr double kCommonP[2] = {0.12, 0.12};
constexpr double kNoiseP[2] = {0.02, 0.01};

FeatureVector draw_from_profile(std::span<const double> profile, Rng& rng) {
    FeatureVector v;
    v.bits.resize(profile.size());
    for (std::size_t i = 0; i < profile.size(); ++i) {
        v.bits[i] = rng.bernoulli(profile[i]) ? 1 : 0;
    }
    return v;
}

std::string numbered_id(const char* stem, std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%06zu", stem, n);
    return buf;
}

}  // namespace

void GenConfig::validate() const {
    if (schema.size() == 0) {
        throw Error("generator schema is empty");
    }
    if (benign_profile.size() != schema.size() || malware_profile.size() != schema.size()) {
        throw Error("profile length does not match schema size");
    }
    for (const auto* profile : {&benign_profile, &malware_profile}) {
        for (double p : *profile) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw Error("profile probability out of [0, 1]");
            }
        }
    }
    if (!(share_fraction >= 0.0 && share_fraction <= 1.0)) {
        throw Error("share_fraction must be in [0, 1]");
    }
    if (payload_size == 0) {
        throw Error("payload_size must be positive");
    }
}

std::pair<std::vector<double>, std::vector<double>> default_profiles(const FeatureSchema& schema) {
    if (schema.size() == 0) {
        throw Error("cannot build profiles over an empty schema");
    }
    std::vector<double> benign(schema.size());
    std::vector<double> malware(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const double* band = kNoiseP;
        if (i < kBenignCoreEnd) {
            band = kBenignCoreP;
        } else if (i < kBenignSecondaryEnd) {
            band = kBenignSecondaryP;
        } else if (i < kMaliciousEnd) {
            band = kMaliciousP;
        } else if (i < kCommonEnd) {
            band = kCommonP;
        }
        benign[i] = band[0];
        malware[i] = band[1];
    }
    return {std::move(benign), std::move(malware)};
}

double expected_popcount(std::span<const double> profile) {
    double sum = 0.0;
    for (double p : profile) {
        sum += p;
    }
    return sum;
}

GenConfig default_gen_config(const FeatureSchema& schema, std::size_t n_benign,
                             std::size_t n_malware, std::size_t n_repackaged,
                             std::uint64_t seed) {
    GenConfig cfg;
    cfg.schema = schema;
    cfg.n_benign = n_benign;
    cfg.n_malware = n_malware;
    cfg.n_repackaged = n_repackaged;
    auto [benign, malware] = default_profiles(schema);
    cfg.benign_profile = std::move(benign);
    cfg.malware_profile = std::move(malware);
    cfg.seed = seed;
    return cfg;
}

std::vector<std::size_t> payload_pool(std::span<const double> malware_profile,
                                      std::size_t payload_size) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < malware_profile.size(); ++i) {
        if (malware_profile[i] > 0.0) {
            candidates.push_back(i);
        }
    }
    if (candidates.size() < payload_size) {
        throw Error("payload_size " + std::to_string(payload_size) +
                    " exceeds the " + std::to_string(candidates.size()) +
                    " malware-profile features with nonzero probability");
    }
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
        return malware_profile[a] > malware_profile[b];
    });
    candidates.resize(std::min(candidates.size(), 2 * payload_size));
    return candidates;
}

FeatureVector repackage(const FeatureVector& tmpl, std::span<const std::size_t> payload,
                        double share_fraction, Rng& rng) {
    std::vector<std::size_t> set_bits = tmpl.active_indices();
    const std::size_t keep =
        static_cast<std::size_t>(std::ceil(share_fraction * static_cast<double>(set_bits.size())));
    rng.shuffle(set_bits);

    FeatureVector out;
    out.bits.assign(tmpl.bits.size(), 0);
    for (std::size_t i = 0; i < keep; ++i) {
        out.bits[set_bits[i]] = 1;
    }
    for (std::size_t i : payload) {
        if (i >= out.bits.size()) {
            throw Error("payload index out of range");
        }
        out.bits[i] = 1;
    }
    return out;
}

Dataset generate(const GenConfig& cfg) {
    cfg.validate();
    Dataset ds;
    ds.schema_fingerprint = cfg.schema.fingerprint();
    ds.samples.reserve(cfg.n_benign + cfg.n_malware + cfg.n_repackaged);

    Rng rng(derive_seed(cfg.seed, 0x67656e));  // generator stream

    for (std::size_t n = 1; n <= cfg.n_benign; ++n) {
        FeatureVector v = draw_from_profile(cfg.benign_profile, rng);
        v.app_id = numbered_id("benign", n);
        v.label = Label::benign;
        ds.samples.push_back(std::move(v));
    }
    for (std::size_t n = 1; n <= cfg.n_malware; ++n) {
        FeatureVector v = draw_from_profile(cfg.malware_profile, rng);
        v.app_id = numbered_id("malware", n);
        v.label = Label::malware;
        ds.samples.push_back(std::move(v));
    }
    if (cfg.n_repackaged > 0) {
        const std::vector<std::size_t> pool = payload_pool(cfg.malware_profile, cfg.payload_size);
        std::vector<std::size_t> draw = pool;
        for (std::size_t n = 1; n <= cfg.n_repackaged; ++n) {
            const FeatureVector tmpl = draw_from_profile(cfg.benign_profile, rng);
            draw = pool;
            rng.shuffle(draw);
            draw.resize(cfg.payload_size);
            FeatureVector v = repackage(tmpl, draw, cfg.share_fraction, rng);
            // construction guarantee; a violation here is a generator bug
            const std::size_t tmpl_pop = tmpl.popcount();
            if (tmpl_pop > 0) {
                std::size_t shared = 0;
                for (std::size_t i = 0; i < tmpl.bits.size(); ++i) {
                    shared += (tmpl.bits[i] & v.bits[i]);
                }
                if (static_cast<double>(shared) <
                    cfg.share_fraction * static_cast<double>(tmpl_pop)) {
                    throw Error("repackaged sample violates the sharing guarantee");
                }
            }
            v.app_id = numbered_id("repack", n);
            v.label = Label::malware;
            ds.samples.push_back(std::move(v));
        }
    }
    return ds;
}

}  // namespace mdet
