#include "mdet/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mdet/digest.hpp"
#include "mdet/rng.hpp"

namespace mdet {

namespace {

constexpr char kMagic[8] = {'M', 'D', 'E', 'T', 'M', 'D', 'L', '\0'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kOutputWidth = 2;  // class 0 benign, class 1 malware

struct Forward {
    std::vector<double> hidden;  // post-ReLU
    double logits[2];
    double p_malware;
};

void forward_pass(const Model& m, std::span<const std::size_t> active, Forward& f) {
    f.hidden.assign(m.b1.begin(), m.b1.end());
    double* h = f.hidden.data();
    const std::size_t hw = m.hidden_width;
    for (std::size_t i : active) {
        const double* row = m.w1.data() + i * hw;
        for (std::size_t j = 0; j < hw; ++j) {
            h[j] += row[j];
        }
    }
    for (std::size_t j = 0; j < hw; ++j) {
        if (h[j] < 0.0) {
            h[j] = 0.0;
        }
    }
    for (std::size_t c = 0; c < kOutputWidth; ++c) {
        double z = m.b2[c];
        const double* row = m.w2.data() + c * hw;
        for (std::size_t j = 0; j < hw; ++j) {
            z += row[j] * h[j];
        }
        f.logits[c] = z;
    }
    const double mx = std::max(f.logits[0], f.logits[1]);
    const double e0 = std::exp(f.logits[0] - mx);
    const double e1 = std::exp(f.logits[1] - mx);
    f.p_malware = e1 / (e0 + e1);
}

std::vector<std::size_t> gather_active(const Model& m, const FeatureVector& v) {
    if (v.bits.size() != m.input_width) {
        throw Error("feature vector length " + std::to_string(v.bits.size()) +
                    " does not match model input width " + std::to_string(m.input_width));
    }
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < v.bits.size(); ++i) {
        if (v.bits[i] > 1) {
            throw Error("feature vector '" + v.app_id + "' has non-binary value at index " +
                        std::to_string(i));
        }
        if (v.bits[i]) {
            active.push_back(i);
        }
    }
    return active;
}

// Per-class loss weight: 1 everywhere, or inverse class frequency when
// class_weighted is set.
struct ClassWeights {
    double w[2] = {1.0, 1.0};
};

ClassWeights class_weights(const Dataset& data, bool class_weighted) {
    ClassWeights cw;
    if (!class_weighted) {
        return cw;
    }
    std::size_t counts[2] = {0, 0};
    for (const auto& s : data.samples) {
        if (s.label) {
            ++counts[*s.label == Label::malware ? 1 : 0];
        }
    }
    const double n = static_cast<double>(counts[0] + counts[1]);
    for (int c = 0; c < 2; ++c) {
        if (counts[c] > 0) {
            cw.w[c] = n / (2.0 * static_cast<double>(counts[c]));
        }
    }
    return cw;
}

void require_trainable(const Dataset& data) {
    if (data.samples.empty()) {
        throw Error("training dataset is empty");
    }
    std::size_t counts[2] = {0, 0};
    const std::size_t width = data.samples.front().bits.size();
    for (const auto& s : data.samples) {
        if (!s.label) {
            throw Error("training sample '" + s.app_id + "' has no label");
        }
        if (s.bits.size() != width) {
            throw Error("inconsistent vector lengths in training dataset");
        }
        ++counts[*s.label == Label::malware ? 1 : 0];
    }
    if (counts[0] == 0 || counts[1] == 0) {
        throw Error("training dataset contains a single class; need both benign and malware");
    }
}

double l2_term(const Model& m, double l2_penalty) {
    if (l2_penalty == 0.0) {
        return 0.0;
    }
    double ss = 0.0;
    for (double w : m.w1) {
        ss += w * w;
    }
    for (double w : m.w2) {
        ss += w * w;
    }
    return 0.5 * l2_penalty * ss;
}

// --- binary container helpers (explicit little-endian) ---

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_f64(std::string& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
public:
    Reader(std::string_view bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

    std::string_view take(std::size_t n) {
        if (pos_ + n > bytes_.size()) {
            throw Error(origin_ + ": corrupt model file (truncated)");
        }
        std::string_view out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::uint32_t u32() {
        auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
        }
        return v;
    }

    std::uint64_t u64() {
        auto b = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
        }
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::size_t remaining() const { return bytes_.size() - pos_; }

    bool at_end() const { return pos_ == bytes_.size(); }

private:
    std::string_view bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace

void validate_model(const Model& m) {
    if (m.input_width == 0 || m.hidden_width == 0) {
        throw Error("model has zero input or hidden width");
    }
    if (m.w1.size() != m.input_width * m.hidden_width || m.b1.size() != m.hidden_width ||
        m.w2.size() != kOutputWidth * m.hidden_width || m.b2.size() != kOutputWidth) {
        throw Error("model parameter blocks do not match declared dimensions");
    }
    auto all_finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    if (!all_finite(m.w1) || !all_finite(m.b1) || !all_finite(m.w2) || !all_finite(m.b2)) {
        throw Error("model contains non-finite parameters");
    }
}

void TrainConfig::validate() const {
    if (hidden_width == 0) {
        throw Error("hidden_width must be positive");
    }
    if (epochs == 0) {
        throw Error("epochs must be positive");
    }
    if (!(learning_rate > 0.0) || learning_rate > 100.0) {
        throw Error("learning_rate must be in (0, 100]");
    }
    if (batch_size == 0) {
        throw Error("batch_size must be positive");
    }
    if (!(l2_penalty >= 0.0)) {
        throw Error("l2_penalty must be nonnegative");
    }
}

void DecisionThreshold::validate() const {
    if (!(delta >= 0.0 && delta <= 1.0)) {
        throw Error("decision threshold must be in [0, 1]");
    }
}

double predict_proba(const Model& m, const FeatureVector& v) {
    auto active = gather_active(m, v);
    Forward f;
    forward_pass(m, active, f);
    return f.p_malware;
}

double predict_proba_on_indices(const Model& m, std::span<const std::size_t> active) {
    for (std::size_t i : active) {
        if (i >= m.input_width) {
            throw Error("active index " + std::to_string(i) + " out of range for model input width " +
                        std::to_string(m.input_width));
        }
    }
    Forward f;
    forward_pass(m, active, f);
    return f.p_malware;
}

double maliciousness(const Model& m, const FeatureVector& v) {
    return 2.0 * predict_proba(m, v) - 1.0;
}

Label classify(const Model& m, const FeatureVector& v, DecisionThreshold t) {
    t.validate();
    return predict_proba(m, v) >= t.delta ? Label::malware : Label::benign;
}

double dataset_loss(const Model& m, const Dataset& data, double l2_penalty, bool class_weighted) {
    const ClassWeights cw = class_weights(data, class_weighted);
    double sum = 0.0;
    Forward f;
    for (const auto& s : data.samples) {
        if (!s.label) {
            throw Error("loss requires labeled samples; '" + s.app_id + "' has no label");
        }
        auto active = gather_active(m, s);
        forward_pass(m, active, f);
        const int y = (*s.label == Label::malware) ? 1 : 0;
        const double p = (y == 1) ? f.p_malware : 1.0 - f.p_malware;
        sum += cw.w[y] * -std::log(p);
    }
    return sum / static_cast<double>(data.samples.size()) + l2_term(m, l2_penalty);
}

Gradients dataset_gradient(const Model& m, const Dataset& data, double l2_penalty,
                           bool class_weighted) {
    const ClassWeights cw = class_weights(data, class_weighted);
    const std::size_t hw = m.hidden_width;
    Gradients g;
    g.w1.assign(m.w1.size(), 0.0);
    g.b1.assign(m.b1.size(), 0.0);
    g.w2.assign(m.w2.size(), 0.0);
    g.b2.assign(m.b2.size(), 0.0);

    const double inv_n = 1.0 / static_cast<double>(data.samples.size());
    Forward f;
    std::vector<double> dpre(hw);
    for (const auto& s : data.samples) {
        if (!s.label) {
            throw Error("gradient requires labeled samples; '" + s.app_id + "' has no label");
        }
        auto active = gather_active(m, s);
        forward_pass(m, active, f);
        const int y = (*s.label == Label::malware) ? 1 : 0;
        const double p = (y == 1) ? f.p_malware : 1.0 - f.p_malware;
        g.loss += cw.w[y] * -std::log(p) * inv_n;

        const double scale = cw.w[y] * inv_n;
        double dlogit[2];
        dlogit[0] = ((1.0 - f.p_malware) - (y == 0 ? 1.0 : 0.0)) * scale;
        dlogit[1] = (f.p_malware - (y == 1 ? 1.0 : 0.0)) * scale;

        for (std::size_t c = 0; c < kOutputWidth; ++c) {
            g.b2[c] += dlogit[c];
            double* gw2_row = g.w2.data() + c * hw;
            const double* h = f.hidden.data();
            for (std::size_t j = 0; j < hw; ++j) {
                gw2_row[j] += dlogit[c] * h[j];
            }
        }
        for (std::size_t j = 0; j < hw; ++j) {
            // ReLU gate: post-activation is zero exactly where the unit is off
            const double dh = dlogit[0] * m.w2[j] + dlogit[1] * m.w2[hw + j];
            dpre[j] = (f.hidden[j] > 0.0) ? dh : 0.0;
            g.b1[j] += dpre[j];
        }
        for (std::size_t i : active) {
            double* gw1_row = g.w1.data() + i * hw;
            for (std::size_t j = 0; j < hw; ++j) {
                gw1_row[j] += dpre[j];
            }
        }
    }
    if (l2_penalty != 0.0) {
        for (std::size_t i = 0; i < m.w1.size(); ++i) {
            g.w1[i] += l2_penalty * m.w1[i];
        }
        for (std::size_t i = 0; i < m.w2.size(); ++i) {
            g.w2[i] += l2_penalty * m.w2[i];
        }
        g.loss += l2_term(m, l2_penalty);
    }
    return g;
}

Model train(const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    require_trainable(data);

    const std::size_t n = data.samples.size();
    const std::size_t input_width = data.samples.front().bits.size();
    const std::size_t hw = cfg.hidden_width;

    Model m;
    m.schema_fingerprint = data.schema_fingerprint;
    m.input_width = input_width;
    m.hidden_width = hw;
    m.meta = {cfg.seed, cfg.epochs, cfg.learning_rate, 0.0};

    Rng rng(derive_seed(cfg.seed, 0x7261696e));  // training stream
    const double r1 = std::sqrt(6.0 / static_cast<double>(input_width + hw));
    const double r2 = std::sqrt(6.0 / static_cast<double>(hw + kOutputWidth));
    m.w1.resize(input_width * hw);
    for (auto& w : m.w1) {
        w = (2.0 * rng.next_double() - 1.0) * r1;
    }
    m.b1.assign(hw, 0.0);
    m.w2.resize(kOutputWidth * hw);
    for (auto& w : m.w2) {
        w = (2.0 * rng.next_double() - 1.0) * r2;
    }
    m.b2.assign(kOutputWidth, 0.0);

    // Pre-gathered sparse encoding; training touches only set bits.
    std::vector<std::vector<std::size_t>> actives(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        actives[i] = gather_active(m, data.samples[i]);
        labels[i] = (*data.samples[i].label == Label::malware) ? 1 : 0;
    }
    const ClassWeights cw = class_weights(data, cfg.class_weighted);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> gw1(m.w1.size());
    std::vector<double> gb1(hw);
    std::vector<double> gw2(m.w2.size());
    std::vector<double> gb2(kOutputWidth);
    std::vector<double> dpre(hw);
    Forward f;

    double epoch_loss = 0.0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, n);
            const double inv_b = 1.0 / static_cast<double>(stop - start);
            std::fill(gw1.begin(), gw1.end(), 0.0);
            std::fill(gb1.begin(), gb1.end(), 0.0);
            std::fill(gw2.begin(), gw2.end(), 0.0);
            std::fill(gb2.begin(), gb2.end(), 0.0);

            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t idx = order[b];
                forward_pass(m, actives[idx], f);
                const int y = labels[idx];
                const double scale = cw.w[y] * inv_b;
                double dlogit[2];
                dlogit[0] = ((1.0 - f.p_malware) - (y == 0 ? 1.0 : 0.0)) * scale;
                dlogit[1] = (f.p_malware - (y == 1 ? 1.0 : 0.0)) * scale;
                for (std::size_t c = 0; c < kOutputWidth; ++c) {
                    gb2[c] += dlogit[c];
                    double* row = gw2.data() + c * hw;
                    for (std::size_t j = 0; j < hw; ++j) {
                        row[j] += dlogit[c] * f.hidden[j];
                    }
                }
                for (std::size_t j = 0; j < hw; ++j) {
                    const double dh = dlogit[0] * m.w2[j] + dlogit[1] * m.w2[hw + j];
                    dpre[j] = (f.hidden[j] > 0.0) ? dh : 0.0;
                    gb1[j] += dpre[j];
                }
                for (std::size_t i : actives[idx]) {
                    double* row = gw1.data() + i * hw;
                    for (std::size_t j = 0; j < hw; ++j) {
                        row[j] += dpre[j];
                    }
                }
            }

            const double lr = cfg.learning_rate;
            for (std::size_t i = 0; i < m.w1.size(); ++i) {
                m.w1[i] -= lr * (gw1[i] + cfg.l2_penalty * m.w1[i]);
            }
            for (std::size_t j = 0; j < hw; ++j) {
                m.b1[j] -= lr * gb1[j];
            }
            for (std::size_t i = 0; i < m.w2.size(); ++i) {
                m.w2[i] -= lr * (gw2[i] + cfg.l2_penalty * m.w2[i]);
            }
            for (std::size_t c = 0; c < kOutputWidth; ++c) {
                m.b2[c] -= lr * gb2[c];
            }
        }

        epoch_loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            forward_pass(m, actives[i], f);
            const double p = (labels[i] == 1) ? f.p_malware : 1.0 - f.p_malware;
            epoch_loss += cw.w[labels[i]] * -std::log(p);
        }
        epoch_loss = epoch_loss / static_cast<double>(n) + l2_term(m, cfg.l2_penalty);
        if (!std::isfinite(epoch_loss)) {
            throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1));
        }
    }
    m.meta.final_loss = epoch_loss;
    validate_model(m);
    return m;
}

std::string serialize_model(const Model& m) {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(m.schema_fingerprint.size()));
    out += m.schema_fingerprint;
    put_u32(out, static_cast<std::uint32_t>(m.input_width));
    put_u32(out, static_cast<std::uint32_t>(m.hidden_width));
    put_u32(out, static_cast<std::uint32_t>(kOutputWidth));
    for (double w : m.w1) {
        put_f64(out, w);
    }
    for (double w : m.b1) {
        put_f64(out, w);
    }
    for (double w : m.w2) {
        put_f64(out, w);
    }
    for (double w : m.b2) {
        put_f64(out, w);
    }
    char meta[256];
    std::snprintf(meta, sizeof(meta), "seed=%llu\nepochs=%zu\nlearning_rate=%a\nfinal_loss=%a\n",
                  static_cast<unsigned long long>(m.meta.seed), m.meta.epochs,
                  m.meta.learning_rate, m.meta.final_loss);
    const std::string meta_str(meta);
    put_u32(out, static_cast<std::uint32_t>(meta_str.size()));
    out += meta_str;
    return out;
}

Model deserialize_model(std::string_view bytes, const std::string& origin) {
    Reader r(bytes, origin);
    auto magic = r.take(sizeof(kMagic));
    if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
        throw Error(origin + ": not a model file (bad magic)");
    }
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion) {
        throw Error(origin + ": unsupported model format version " + std::to_string(version) +
                    " (this build reads version " + std::to_string(kFormatVersion) + ")");
    }
    Model m;
    const std::uint32_t fp_len = r.u32();
    m.schema_fingerprint = std::string(r.take(fp_len));
    if (m.schema_fingerprint.empty()) {
        throw Error(origin + ": model file missing schema fingerprint");
    }
    m.input_width = r.u32();
    m.hidden_width = r.u32();
    const std::uint32_t output_width = r.u32();
    if (output_width != kOutputWidth) {
        throw Error(origin + ": unsupported output width " + std::to_string(output_width));
    }
    auto read_block = [&](std::vector<double>& dst, std::size_t count) {
        // bound the allocation by what the file can actually hold
        if (count > r.remaining() / 8) {
            throw Error(origin + ": corrupt model file (truncated)");
        }
        dst.resize(count);
        for (auto& w : dst) {
            w = r.f64();
        }
    };
    read_block(m.w1, m.input_width * m.hidden_width);
    read_block(m.b1, m.hidden_width);
    read_block(m.w2, kOutputWidth * m.hidden_width);
    read_block(m.b2, kOutputWidth);

    const std::uint32_t meta_len = r.u32();
    std::string meta(r.take(meta_len));
    if (!r.at_end()) {
        throw Error(origin + ": corrupt model file (trailing bytes)");
    }
    std::istringstream ms(meta);
    std::string line;
    while (std::getline(ms, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            continue;
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "seed") {
            m.meta.seed = std::strtoull(value.c_str(), nullptr, 10);
        } else if (key == "epochs") {
            m.meta.epochs = std::strtoull(value.c_str(), nullptr, 10);
        } else if (key == "learning_rate") {
            m.meta.learning_rate = std::strtod(value.c_str(), nullptr);
        } else if (key == "final_loss") {
            m.meta.final_loss = std::strtod(value.c_str(), nullptr);
        }
    }
    validate_model(m);
    return m;
}

void save_model(const Model& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open file for writing: " + path);
    }
    const std::string bytes = serialize_model(m);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("write failed: " + path);
    }
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open model file: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_model(buf.str(), path);
}

std::string model_digest(const Model& m) {
    return hex16(fnv1a64(serialize_model(m)));
}

}  // namespace mdet
