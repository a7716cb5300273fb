#include "doctest.h"

#include <cmath>

#include "mdet/datagen.hpp"

using namespace mdet;

TEST_CASE("zero counts produce an empty dataset with a valid header") {
    const FeatureSchema schema = default_schema();
    const Dataset ds = generate(default_gen_config(schema, 0, 0, 0, 1));
    CHECK(ds.samples.empty());
    CHECK(ds.schema_fingerprint == schema.fingerprint());
    const std::string text = serialize_dataset(ds);
    CHECK(text == "#schema=" + schema.fingerprint() + "\n");
    CHECK(parse_dataset_text(text, schema, "mem").samples.empty());
}

TEST_CASE("label counts match the configuration exactly") {
    const FeatureSchema schema = default_schema();
    const Dataset ds = generate(default_gen_config(schema, 30, 20, 10, 2));
    REQUIRE(ds.samples.size() == 60);
    std::size_t benign = 0, malware = 0, repackaged = 0;
    for (const auto& s : ds.samples) {
        REQUIRE(s.label.has_value());
        if (*s.label == Label::benign) {
            ++benign;
        } else if (s.app_id.starts_with("repack")) {
            ++repackaged;
        } else {
            ++malware;
        }
    }
    CHECK(benign == 30);
    CHECK(malware == 20);
    CHECK(repackaged == 10);
    // repackaged samples are labeled malware
    for (const auto& s : ds.samples) {
        if (s.app_id.starts_with("repack")) {
            CHECK(*s.label == Label::malware);
        }
    }
}

TEST_CASE("generation is deterministic per seed and distinct across seeds") {
    const FeatureSchema schema = default_schema();
    const Dataset a = generate(default_gen_config(schema, 50, 10, 10, 7));
    const Dataset b = generate(default_gen_config(schema, 50, 10, 10, 7));
    CHECK(a == b);
    CHECK(serialize_dataset(a) == serialize_dataset(b));

    const Dataset c = generate(default_gen_config(schema, 50, 10, 10, 8));
    CHECK(serialize_dataset(c) != serialize_dataset(a));
}

TEST_CASE("repackaging keeps at least the configured share of template bits") {
    const FeatureSchema schema = default_schema();
    auto [benign_profile, malware_profile] = default_profiles(schema);
    const auto pool = payload_pool(malware_profile, 12);
    Rng rng(11);

    for (int trial = 0; trial < 200; ++trial) {
        FeatureVector tmpl;
        tmpl.bits.assign(schema.size(), 0);
        for (std::size_t i = 0; i < schema.size(); ++i) {
            tmpl.bits[i] = rng.bernoulli(benign_profile[i]) ? 1 : 0;
        }
        if (tmpl.popcount() == 0) {
            continue;
        }
        std::vector<std::size_t> payload(pool.begin(), pool.begin() + 12);
        const FeatureVector rep = repackage(tmpl, payload, 0.85, rng);

        std::size_t shared = 0;
        for (std::size_t i = 0; i < tmpl.bits.size(); ++i) {
            shared += (tmpl.bits[i] & rep.bits[i]);
        }
        const double ratio =
            static_cast<double>(shared) / static_cast<double>(tmpl.popcount());
        CHECK(ratio > 0.8);
        // payload features are present
        for (std::size_t i : payload) {
            CHECK(rep.bits[i] == 1);
        }
    }
}

TEST_CASE("full sharing keeps the template intact modulo payload") {
    const FeatureSchema schema = default_schema();
    auto [benign_profile, malware_profile] = default_profiles(schema);
    const auto pool = payload_pool(malware_profile, 12);
    Rng rng(19);

    FeatureVector tmpl;
    tmpl.bits.assign(schema.size(), 0);
    for (std::size_t i = 0; i < schema.size(); ++i) {
        tmpl.bits[i] = rng.bernoulli(benign_profile[i]) ? 1 : 0;
    }
    REQUIRE(tmpl.popcount() > 0);
    std::vector<std::size_t> payload(pool.begin(), pool.begin() + 1);
    const FeatureVector rep = repackage(tmpl, payload, 1.0, rng);

    // Jaccard of (repackaged minus payload) against the template is 1
    FeatureVector stripped = rep;
    for (std::size_t i : payload) {
        if (!tmpl.bits[i]) {
            stripped.bits[i] = 0;
        }
    }
    CHECK(stripped.bits == tmpl.bits);
}

TEST_CASE("default profiles are well-formed and separable") {
    const FeatureSchema schema = default_schema();
    auto [benign, malware] = default_profiles(schema);
    REQUIRE(benign.size() == schema.size());
    REQUIRE(malware.size() == schema.size());
    std::size_t far_apart = 0;
    for (std::size_t i = 0; i < benign.size(); ++i) {
        CHECK(benign[i] >= 0.0);
        CHECK(benign[i] <= 1.0);
        CHECK(malware[i] >= 0.0);
        CHECK(malware[i] <= 1.0);
        if (std::fabs(benign[i] - malware[i]) >= 0.5) {
            ++far_apart;
        }
    }
    CHECK(far_apart >= 30);
}

TEST_CASE("benign popcount concentrates near its binomial mean") {
    const FeatureSchema schema = default_schema();
    GenConfig cfg = default_gen_config(schema, 10000, 0, 0, 5);
    const Dataset ds = generate(cfg);
    double total = 0.0;
    for (const auto& s : ds.samples) {
        total += static_cast<double>(s.popcount());
    }
    const double observed = total / static_cast<double>(ds.samples.size());
    const double target = expected_popcount(cfg.benign_profile);
    CHECK(observed >= 0.9 * target);
    CHECK(observed <= 1.1 * target);
}

TEST_CASE("payload pool ranks by probability and enforces availability") {
    const std::vector<double> profile{0.0, 0.9, 0.2, 0.9, 0.0, 0.5};
    const auto pool = payload_pool(profile, 2);
    REQUIRE(pool.size() == 4);
    CHECK(pool[0] == 1);  // ties broken by ascending index
    CHECK(pool[1] == 3);
    CHECK(pool[2] == 5);
    CHECK(pool[3] == 2);

    CHECK_THROWS_WITH_AS(payload_pool(profile, 5), doctest::Contains("payload_size"), Error);
}

TEST_CASE("generator validates its configuration") {
    const FeatureSchema schema = default_schema();
    GenConfig cfg = default_gen_config(schema, 1, 1, 1, 1);
    cfg.share_fraction = 1.5;
    CHECK_THROWS_AS(generate(cfg), Error);

    cfg = default_gen_config(schema, 1, 1, 1, 1);
    cfg.benign_profile.pop_back();
    CHECK_THROWS_WITH_AS(generate(cfg), doctest::Contains("profile length"), Error);

    cfg = default_gen_config(schema, 1, 1, 1, 1);
    cfg.malware_profile[0] = 1.5;
    CHECK_THROWS_WITH_AS(generate(cfg), doctest::Contains("out of [0, 1]"), Error);
}
