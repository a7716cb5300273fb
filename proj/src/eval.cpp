#include "mdet/eval.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace mdet {

namespace {

void append_metric(std::string& out, const std::optional<double>& v) {
    if (v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.9g", *v);
        out += buf;
    } else {
        out += "NA";
    }
}

void write_text(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open file for writing: " + path);
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw Error("write failed: " + path);
    }
}

std::string meta_header(const ReportMeta& meta) {
    std::string out;
    out += "#model=" + meta.model_digest + "\n";
    out += "#rank=" + meta.ranking_digest + "\n";
    out += "#data=" + meta.dataset_digest + "\n";
    out += "#schema=" + meta.schema_fingerprint + "\n";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "#delta=%.9g\n", meta.delta_threshold);
    out += buf;
    return out;
}

struct GroupMean {
    double sum = 0.0;
    std::size_t n = 0;

    void add(double v) {
        sum += v;
        ++n;
    }
    std::optional<double> mean() const {
        if (n == 0) {
            return std::nullopt;
        }
        return sum / static_cast<double>(n);
    }
};

}  // namespace

bool is_repackaged_tag(std::string_view app_id) {
    return app_id.starts_with("repack");
}

ConfusionMatrix confusion(std::span<const DetectionResult> results,
                          std::span<const FeatureVector> samples) {
    if (results.size() != samples.size()) {
        throw Error("result/sample count mismatch: " + std::to_string(results.size()) + " vs " +
                    std::to_string(samples.size()));
    }
    ConfusionMatrix c;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!samples[i].label) {
            throw Error("unlabeled sample '" + samples[i].app_id + "' in metric computation");
        }
        const bool truth_malware = *samples[i].label == Label::malware;
        const bool predicted_malware = results[i].final_label == Label::malware;
        if (truth_malware) {
            predicted_malware ? ++c.tp : ++c.fn;
        } else {
            predicted_malware ? ++c.fp : ++c.tn;
        }
    }
    return c;
}

Metrics metrics_of(const ConfusionMatrix& c) {
    Metrics m;
    const std::size_t total = c.total();
    if (total > 0) {
        m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
    }
    if (c.tp + c.fp > 0) {
        m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    }
    if (c.tp + c.fn > 0) {
        m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    }
    if (m.precision && m.recall && (*m.precision + *m.recall) > 0.0) {
        m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
    }
    if (c.tn + c.fp > 0) {
        m.benign_accuracy = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    }
    m.malware_accuracy = m.recall;
    return m;
}

std::vector<SweepPoint> sweep_k(const Model& m, const Dataset& data,
                                const RankedBenignFeatures& r, std::size_t k_max,
                                DecisionThreshold t) {
    if (k_max > r.entries.size()) {
        throw Error("k_max=" + std::to_string(k_max) + " exceeds ranked entry count " +
                    std::to_string(r.entries.size()));
    }
    const std::vector<DetectionResult> vanilla_results = detect_batch(m, data, r, 0, t);
    const Metrics vanilla = metrics_of(confusion(vanilla_results, data.samples));

    std::vector<SweepPoint> sweep;
    sweep.reserve(k_max + 1);
    for (std::size_t k = 0; k <= k_max; ++k) {
        const std::vector<DetectionResult> results =
            k == 0 ? vanilla_results : detect_batch(m, data, r, k, t);
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (vanilla_results[i].final_label == Label::malware &&
                results[i].final_label != Label::malware) {
                throw Error("superset property violated at k=" + std::to_string(k) + ", sample '" +
                            results[i].app_id + "'");
            }
        }
        SweepPoint p;
        p.k = k;
        p.vanilla = vanilla;
        p.metrics = metrics_of(confusion(results, data.samples));
        GroupMean repack_correct;
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (is_repackaged_tag(data.samples[i].app_id)) {
                repack_correct.add(results[i].final_label == *data.samples[i].label ? 1.0 : 0.0);
            }
        }
        p.repackaged_accuracy = repack_correct.mean();
        sweep.push_back(std::move(p));
    }
    return sweep;
}

DeltaHistogram delta_histogram(const Model& m, const Dataset& data,
                               const RankedBenignFeatures& r, std::size_t k, std::size_t bins) {
    if (bins == 0) {
        throw Error("delta histogram needs at least one bin");
    }
    DeltaHistogram h;
    h.k = k;
    h.bins = bins;
    h.benign.assign(bins, 0);
    h.malware.assign(bins, 0);
    h.repackaged.assign(bins, 0);
    GroupMean mb, mm, mr;
    for (const auto& sample : data.samples) {
        if (!sample.label) {
            throw Error("unlabeled sample '" + sample.app_id + "' in delta histogram");
        }
        const double d = probability_delta(m, sample, r, k);
        std::size_t bin = static_cast<std::size_t>(
            std::floor((d + 1.0) / 2.0 * static_cast<double>(bins)));
        if (bin >= bins) {
            bin = bins - 1;  // d == +1 lands in the last bin
        }
        if (*sample.label == Label::benign) {
            ++h.benign[bin];
            mb.add(d);
        } else if (is_repackaged_tag(sample.app_id)) {
            ++h.repackaged[bin];
            mr.add(d);
        } else {
            ++h.malware[bin];
            mm.add(d);
        }
    }
    h.mean_benign = mb.mean();
    h.mean_malware = mm.mean();
    h.mean_repackaged = mr.mean();
    return h;
}

void emit_report(std::span<const SweepPoint> sweep, std::span<const DeltaHistogram> histograms,
                 const ReportMeta& meta, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);

    std::string out = meta_header(meta);
    out += "k,accuracy,precision,recall,f1,benign_acc,malware_acc\n";
    for (const auto& p : sweep) {
        out += std::to_string(p.k);
        out += ',';
        append_metric(out, p.metrics.accuracy);
        out += ',';
        append_metric(out, p.metrics.precision);
        out += ',';
        append_metric(out, p.metrics.recall);
        out += ',';
        append_metric(out, p.metrics.f1);
        out += ',';
        append_metric(out, p.metrics.benign_accuracy);
        out += ',';
        append_metric(out, p.metrics.malware_accuracy);
        out += '\n';
    }
    write_text(out_dir + "/sweep.csv", out);

    for (const auto& h : histograms) {
        std::string ho = meta_header(meta);
        ho += "#k=" + std::to_string(h.k) + "\n";
        ho += "bin_low,bin_high,count_benign,count_malware,count_repackaged\n";
        for (std::size_t i = 0; i < h.bins; ++i) {
            const double lo = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(h.bins);
            const double hi =
                -1.0 + 2.0 * static_cast<double>(i + 1) / static_cast<double>(h.bins);
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.9g,%.9g,", lo, hi);
            ho += buf;
            ho += std::to_string(h.benign[i]);
            ho += ',';
            ho += std::to_string(h.malware[i]);
            ho += ',';
            ho += std::to_string(h.repackaged[i]);
            ho += '\n';
        }
        write_text(out_dir + "/deltas_k" + std::to_string(h.k) + ".csv", ho);
    }
}

}  // namespace mdet
