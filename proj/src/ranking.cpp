#include "mdet/ranking.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "mdet/digest.hpp"

namespace mdet {

namespace {

void sort_entries(std::vector<RankEntry>& entries) {
    std::sort(entries.begin(), entries.end(), [](const RankEntry& a, const RankEntry& b) {
        if (a.count != b.count) {
            return a.count > b.count;
        }
        return a.feature < b.feature;
    });
}

}  // namespace

RankedBenignFeatures rank_benign_features(const Model& m, const Dataset& dev,
                                          const ExplainConfig& cfg, unsigned threads) {
    if (dev.samples.empty()) {
        throw Error("development set is empty");
    }
    if (!dev.schema_fingerprint.empty() && dev.schema_fingerprint != m.schema_fingerprint) {
        throw Error("development set schema fingerprint " + dev.schema_fingerprint +
                    " does not match model fingerprint " + m.schema_fingerprint);
    }
    cfg.validate();

    const std::size_t n = dev.samples.size();
    // 0 = pending, 1 = counted, 2 = skipped; worker errors are rethrown below.
    std::vector<std::vector<std::size_t>> benign_sets(n);
    std::vector<std::uint8_t> state(n, 0);

    auto run_range = [&](std::size_t begin, std::size_t end, std::exception_ptr& err) {
        try {
            for (std::size_t i = begin; i < end; ++i) {
                const auto& sample = dev.samples[i];
                if (sample.popcount() == 0) {
                    state[i] = 2;
                    continue;
                }
                Explanation e;
                try {
                    e = explain(m, sample, cfg);
                } catch (const Error& ex) {
                    throw Error("explaining sample " + std::to_string(i) + " ('" + sample.app_id +
                                "'): " + ex.what());
                }
                benign_sets[i] = benign_features_of(e);
                state[i] = 1;
            }
        } catch (...) {
            err = std::current_exception();
        }
    };

    const unsigned t = std::max(1u, threads);
    if (t == 1 || n < 2) {
        std::exception_ptr err;
        run_range(0, n, err);
        if (err) {
            std::rethrow_exception(err);
        }
    } else {
        const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(t, n));
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errs(workers);
        const std::size_t chunk = (n + workers - 1) / workers;
        for (unsigned w = 0; w < workers; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(begin + chunk, n);
            pool.emplace_back(run_range, begin, end, std::ref(errs[w]));
        }
        for (auto& th : pool) {
            th.join();
        }
        for (auto& err : errs) {
            if (err) {
                std::rethrow_exception(err);
            }
        }
    }

    std::vector<std::size_t> counts(m.input_width, 0);
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (state[i] == 2) {
            ++skipped;
            continue;
        }
        for (std::size_t f : benign_sets[i]) {
            ++counts[f];
        }
    }

    RankedBenignFeatures r;
    r.dev_set_size = n;
    r.skipped = skipped;
    r.explain_config_digest = cfg.digest();
    r.schema_fingerprint = m.schema_fingerprint;
    for (std::size_t f = 0; f < counts.size(); ++f) {
        if (counts[f] > 0) {
            r.entries.push_back({f, counts[f]});
        }
    }
    sort_entries(r.entries);
    return r;
}

std::vector<std::size_t> top_k(const RankedBenignFeatures& r, std::size_t k) {
    if (k > r.entries.size()) {
        throw Error("top_k: k=" + std::to_string(k) + " exceeds ranked entry count " +
                    std::to_string(r.entries.size()));
    }
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back(r.entries[i].feature);
    }
    return out;
}

std::string serialize_ranking(const RankedBenignFeatures& r, const FeatureSchema& schema) {
    if (schema.fingerprint() != r.schema_fingerprint) {
        throw Error("ranking fingerprint " + r.schema_fingerprint + " does not match schema " +
                    schema.fingerprint());
    }
    std::string out;
    out += "#schema=" + r.schema_fingerprint + "\n";
    out += "#dev_size=" + std::to_string(r.dev_set_size) + "\n";
    out += "#skipped=" + std::to_string(r.skipped) + "\n";
    out += "#explain_config=" + r.explain_config_digest + "\n";
    out += "rank,feature_name,count\n";
    for (std::size_t i = 0; i < r.entries.size(); ++i) {
        out += std::to_string(i + 1);
        out += ',';
        out += schema.at(r.entries[i].feature).qualified();
        out += ',';
        out += std::to_string(r.entries[i].count);
        out += '\n';
    }
    return out;
}

void save_ranking(const RankedBenignFeatures& r, const FeatureSchema& schema,
                  const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open file for writing: " + path);
    }
    const std::string text = serialize_ranking(r, schema);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw Error("write failed: " + path);
    }
}

RankedBenignFeatures load_ranking(const std::string& path, const FeatureSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open rank file: " + path);
    }
    RankedBenignFeatures r;
    std::string line;
    std::size_t line_no = 0;
    bool dev_size_seen = false;
    bool config_seen = false;
    bool columns_seen = false;
    std::size_t prev_count = 0;
    std::size_t prev_feature = 0;
    std::size_t expected_rank = 1;
    std::vector<bool> seen;
    auto fail = [&](const std::string& msg) -> void {
        throw Error(path + ":" + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                continue;
            }
            const std::string key = line.substr(1, eq - 1);
            const std::string value = line.substr(eq + 1);
            if (key == "schema") {
                r.schema_fingerprint = value;
            } else if (key == "dev_size") {
                r.dev_set_size = std::strtoull(value.c_str(), nullptr, 10);
                dev_size_seen = true;
            } else if (key == "skipped") {
                r.skipped = std::strtoull(value.c_str(), nullptr, 10);
            } else if (key == "explain_config") {
                r.explain_config_digest = value;
                config_seen = true;
            }
            continue;
        }
        if (!columns_seen) {
            if (line != "rank,feature_name,count") {
                fail("expected column line 'rank,feature_name,count'");
            }
            if (!dev_size_seen || !config_seen) {
                fail("missing '#dev_size=' or '#explain_config=' header");
            }
            columns_seen = true;
            continue;
        }
        const auto c1 = line.find(',');
        const auto c2 = line.rfind(',');
        if (c1 == std::string::npos || c2 == c1) {
            fail("expected 'rank,feature_name,count'");
        }
        const std::string rank_str = line.substr(0, c1);
        const std::string name = line.substr(c1 + 1, c2 - c1 - 1);
        const std::string count_str = line.substr(c2 + 1);
        if (std::strtoull(rank_str.c_str(), nullptr, 10) != expected_rank) {
            fail("rank column out of sequence");
        }
        auto idx = schema.index_of(name);
        if (!idx) {
            fail("feature '" + name + "' not present in schema");
        }
        const std::size_t count = std::strtoull(count_str.c_str(), nullptr, 10);
        if (count > r.dev_set_size) {
            fail("count exceeds dev_size");
        }
        if (seen.empty()) {
            seen.assign(schema.size(), false);
        }
        if (seen[*idx]) {
            fail("duplicate feature '" + name + "'");
        }
        seen[*idx] = true;
        if (expected_rank > 1) {
            const bool ordered =
                count < prev_count || (count == prev_count && *idx > prev_feature);
            if (!ordered) {
                fail("entries not sorted by count desc, feature index asc");
            }
        }
        r.entries.push_back({*idx, count});
        prev_count = count;
        prev_feature = *idx;
        ++expected_rank;
    }
    if (r.schema_fingerprint.empty()) {
        throw Error(path + ": missing '#schema=' header");
    }
    if (r.schema_fingerprint != schema.fingerprint()) {
        throw Error(path + ": schema fingerprint mismatch: file has " + r.schema_fingerprint +
                    ", schema is " + schema.fingerprint());
    }
    if (!columns_seen) {
        throw Error(path + ": missing 'rank,feature_name,count' column line");
    }
    return r;
}

std::string ranking_digest(const RankedBenignFeatures& r) {
    std::string buf = r.schema_fingerprint + "|" + r.explain_config_digest + "|" +
                      std::to_string(r.dev_set_size) + "|" + std::to_string(r.skipped);
    for (const auto& e : r.entries) {
        buf += "|" + std::to_string(e.feature) + ":" + std::to_string(e.count);
    }
    return hex16(fnv1a64(buf));
}

}  // namespace mdet
