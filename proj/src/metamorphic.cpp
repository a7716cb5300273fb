#include "mdet/metamorphic.hpp"

#include <cstdio>
#include <fstream>

namespace mdet {

namespace {

void check_compatible(const Model& m, const FeatureVector& v, const RankedBenignFeatures& r,
                      std::size_t k) {
    if (r.schema_fingerprint != m.schema_fingerprint) {
        throw Error("ranking fingerprint " + r.schema_fingerprint +
                    " does not match model fingerprint " + m.schema_fingerprint);
    }
    if (v.bits.size() != m.input_width) {
        throw Error("feature vector length " + std::to_string(v.bits.size()) +
                    " does not match model input width " + std::to_string(m.input_width));
    }
    if (k > r.entries.size()) {
        throw Error("k=" + std::to_string(k) + " exceeds ranked entry count " +
                    std::to_string(r.entries.size()));
    }
}

void format_proba(std::string& out, double p) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", p);
    out += buf;
}

}  // namespace

DetectionResult detect(const Model& m, const FeatureVector& v, const RankedBenignFeatures& r,
                       std::size_t k, DecisionThreshold t) {
    t.validate();
    check_compatible(m, v, r, k);

    DetectionResult res;
    res.app_id = v.app_id;
    res.original_proba = predict_proba(m, v);
    if (res.original_proba >= t.delta) {
        res.final_label = Label::malware;
        return res;
    }
    res.applied_features = top_k(r, k);
    const FeatureVector followup = nullify(v, res.applied_features);
    res.followup_proba = predict_proba(m, followup);
    res.delta = *res.followup_proba - res.original_proba;
    res.diverged = *res.followup_proba >= t.delta;
    res.final_label = res.diverged ? Label::malware : Label::benign;
    return res;
}

double probability_delta(const Model& m, const FeatureVector& v, const RankedBenignFeatures& r,
                         std::size_t k) {
    check_compatible(m, v, r, k);
    const double original = predict_proba(m, v);
    const FeatureVector followup = nullify(v, top_k(r, k));
    return predict_proba(m, followup) - original;
}

std::vector<DetectionResult> detect_batch(const Model& m, const Dataset& data,
                                          const RankedBenignFeatures& r, std::size_t k,
                                          DecisionThreshold t) {
    if (!data.schema_fingerprint.empty() && data.schema_fingerprint != m.schema_fingerprint) {
        throw Error("dataset schema fingerprint " + data.schema_fingerprint +
                    " does not match model fingerprint " + m.schema_fingerprint);
    }
    std::vector<DetectionResult> out;
    out.reserve(data.samples.size());
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        try {
            out.push_back(detect(m, data.samples[i], r, k, t));
        } catch (const Error& e) {
            throw Error("sample " + std::to_string(i) + " ('" + data.samples[i].app_id +
                        "'): " + e.what());
        }
    }
    return out;
}

std::string serialize_detection_report(const std::vector<DetectionResult>& results,
                                       const ReportHeader& header) {
    std::string out;
    char buf[64];
    out += "#k=" + std::to_string(header.k) + "\n";
    std::snprintf(buf, sizeof(buf), "#delta=%.9g\n", header.delta_threshold);
    out += buf;
    out += "#model=" + header.model_digest + "\n";
    out += "#rank=" + header.ranking_digest + "\n";
    out += "app_id,original_proba,followup_proba,final_label,diverged,delta\n";
    for (const auto& r : results) {
        out += r.app_id;
        out += ',';
        format_proba(out, r.original_proba);
        out += ',';
        if (r.followup_proba) {
            format_proba(out, *r.followup_proba);
        } else {
            out += "NA";
        }
        out += ',';
        out += to_string(r.final_label);
        out += ',';
        out += r.diverged ? "true" : "false";
        out += ',';
        if (r.delta) {
            format_proba(out, *r.delta);
        } else {
            out += "NA";
        }
        out += '\n';
    }
    return out;
}

void write_detection_report(const std::vector<DetectionResult>& results,
                            const ReportHeader& header, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open file for writing: " + path);
    }
    const std::string text = serialize_detection_report(results, header);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw Error("write failed: " + path);
    }
}

}  // namespace mdet
