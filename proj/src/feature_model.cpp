#include "mdet/feature_model.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mdet/digest.hpp"

namespace mdet {

namespace {

constexpr std::string_view kCategoryNames[kCategoryCount] = {
    "Permission", "Package", "Hardware", "Intent", "Class", "Leak", "Behavior",
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

[[noreturn]] void fail_at(const std::string& origin, std::size_t line, const std::string& msg) {
    throw Error(origin + ":" + std::to_string(line) + ": " + msg);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open file: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open file for writing: " + path);
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
        throw Error("write failed: " + path);
    }
}

// Walks lines of `text`, invoking fn(line_number, line) for each line with
// the trailing '\n' removed.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        if (pos == text.size()) {
            break;
        }
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        ++line_no;
        fn(line_no, text.substr(pos, end - pos));
        pos = end + 1;
    }
}

std::optional<std::size_t> parse_index(std::string_view token) {
    std::size_t value = 0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        return std::nullopt;
    }
    return value;
}

}  // namespace

std::string_view to_string(FeatureCategory c) {
    return kCategoryNames[static_cast<std::size_t>(c)];
}

std::optional<FeatureCategory> category_from(std::string_view token) {
    for (std::size_t i = 0; i < kCategoryCount; ++i) {
        if (token == kCategoryNames[i]) {
            return static_cast<FeatureCategory>(i);
        }
    }
    return std::nullopt;
}

std::string FeatureDescriptor::qualified() const {
    std::string out(to_string(category));
    out += ':';
    out += name;
    return out;
}

FeatureSchema FeatureSchema::from_descriptors(std::vector<FeatureDescriptor> features) {
    if (features.empty()) {
        throw Error("schema has no features");
    }
    FeatureSchema schema;
    schema.by_qualified_name_.reserve(features.size());
    std::uint64_t h = kFnvOffset;
    for (std::size_t i = 0; i < features.size(); ++i) {
        features[i].index = i;
        std::string key = features[i].qualified();
        auto [it, inserted] = schema.by_qualified_name_.emplace(key, i);
        (void)it;
        if (!inserted) {
            throw Error("duplicate feature name: " + key);
        }
        h = fnv1a64(key, h);
        h = fnv1a64("\n", h);
    }
    schema.features_ = std::move(features);
    schema.fingerprint_ = hex16(h);
    return schema;
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view qualified_name) const {
    auto it = by_qualified_name_.find(std::string(qualified_name));
    if (it == by_qualified_name_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::string_view to_string(Label l) {
    return l == Label::benign ? "benign" : "malware";
}

std::size_t FeatureVector::popcount() const {
    std::size_t n = 0;
    for (auto b : bits) {
        n += b;
    }
    return n;
}

std::vector<std::size_t> FeatureVector::active_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i]) {
            out.push_back(i);
        }
    }
    return out;
}

FeatureSchema default_schema() {
    struct Seed {
        FeatureCategory category;
        const char* name;
    };
    // The twenty concrete feature names, in rank order; they take indices
    // 0..19 so the default generator profiles can treat the prefix of the
    // schema as the benign-indicative core.
    static const Seed kSeedFeatures[] = {
        {FeatureCategory::Class, "java.lang.ClassLoader"},
        {FeatureCategory::Class, "android.content.ContentResolver"},
        {FeatureCategory::Class, "android.content.ContentProvider"},
        {FeatureCategory::Class, "android.net.ConnectivityManager"},
        {FeatureCategory::Class, "android.telephony.TelephonyManager"},
        {FeatureCategory::Intent, "action.BATTERY_CHANGED"},
        {FeatureCategory::Intent, "action.PACKAGE_REPLACED"},
        {FeatureCategory::Intent, "extra.CONTENT_ANNOTATIONS"},
        {FeatureCategory::Intent, "action.ACTION_SHUTDOWN"},
        {FeatureCategory::Class, "android.content.pm.PackageInstaller"},
        {FeatureCategory::Class, "android.net.http.SslCertificate"},
        {FeatureCategory::Permission, "MANAGE_OWN_CALLS"},
        {FeatureCategory::Package, "org.apache.http.params"},
        {FeatureCategory::Permission, "CAMERA"},
        {FeatureCategory::Intent, "action.SEARCH"},
        {FeatureCategory::Intent, "action.ACTION_POWER_CONNECTED"},
        {FeatureCategory::Permission, "CALL_PHONE"},
        {FeatureCategory::Intent, "action.EDIT"},
        {FeatureCategory::Intent, "category.MONKEY"},
        {FeatureCategory::Intent, "action.MANAGED_PROFILE_UNLOCKED"},
    };
    // Synthetic fill per category; totals (with the seeds and the final
    // Behavior flag) come to 694.
    struct Fill {
        FeatureCategory category;
        const char* stem;
        std::size_t count;
    };
    static const Fill kFill[] = {
        {FeatureCategory::Permission, "SYNTHETIC_PERMISSION", 117},
        {FeatureCategory::Package, "SYNTHETIC_PACKAGE", 149},
        {FeatureCategory::Hardware, "SYNTHETIC_HARDWARE", 40},
        {FeatureCategory::Intent, "SYNTHETIC_INTENT", 171},
        {FeatureCategory::Class, "SYNTHETIC_CLASS", 153},
        {FeatureCategory::Leak, "SYNTHETIC_LEAK", 43},
    };

    std::vector<FeatureDescriptor> features;
    features.reserve(kDefaultSchemaSize);
    for (const auto& seed : kSeedFeatures) {
        features.push_back({seed.name, seed.category, 0});
    }
    for (const auto& fill : kFill) {
        for (std::size_t i = 1; i <= fill.count; ++i) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%s_%04zu", fill.stem, i);
            features.push_back({buf, fill.category, 0});
        }
    }
    features.push_back({"STATIC_ANALYSIS_FLAG", FeatureCategory::Behavior, 0});
    return FeatureSchema::from_descriptors(std::move(features));
}

FeatureSchema parse_schema_text(std::string_view text, const std::string& origin) {
    std::vector<FeatureDescriptor> features;
    std::unordered_map<std::string, std::size_t> seen;  // qualified name -> first line
    for_each_line(text, [&](std::size_t line_no, std::string_view raw) {
        std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#') {
            return;
        }
        std::size_t colon = line.find(':');
        if (colon == std::string_view::npos) {
            fail_at(origin, line_no, "expected '<Category>:<Name>', got '" + std::string(line) + "'");
        }
        std::string_view cat_token = trim(line.substr(0, colon));
        std::string_view name = trim(line.substr(colon + 1));
        auto category = category_from(cat_token);
        if (!category) {
            fail_at(origin, line_no, "unknown category token '" + std::string(cat_token) + "'");
        }
        if (name.empty()) {
            fail_at(origin, line_no, "empty feature name");
        }
        FeatureDescriptor desc{std::string(name), *category, 0};
        auto [it, inserted] = seen.emplace(desc.qualified(), line_no);
        if (!inserted) {
            fail_at(origin, line_no, "duplicate feature name '" + desc.qualified() +
                                         "' (first at line " + std::to_string(it->second) + ")");
        }
        features.push_back(std::move(desc));
    });
    if (features.empty()) {
        throw Error(origin + ": schema file contains no features");
    }
    return FeatureSchema::from_descriptors(std::move(features));
}

FeatureSchema load_schema(const std::string& path) {
    return parse_schema_text(read_file(path), path);
}

std::string serialize_schema(const FeatureSchema& schema) {
    std::string out;
    for (const auto& f : schema.features()) {
        out += f.qualified();
        out += '\n';
    }
    return out;
}

void write_schema(const FeatureSchema& schema, const std::string& path) {
    write_file(path, serialize_schema(schema));
}

Dataset parse_dataset_text(std::string_view text, const FeatureSchema& schema,
                           const std::string& origin) {
    constexpr std::string_view kHeaderPrefix = "#schema=";
    Dataset ds;
    bool header_seen = false;
    for_each_line(text, [&](std::size_t line_no, std::string_view raw) {
        std::string_view line = trim(raw);
        if (!header_seen) {
            if (line.empty()) {
                return;
            }
            if (!line.starts_with(kHeaderPrefix)) {
                fail_at(origin, line_no, "missing '#schema=<fingerprint>' header");
            }
            std::string fp(trim(line.substr(kHeaderPrefix.size())));
            if (fp != schema.fingerprint()) {
                fail_at(origin, line_no,
                        "schema fingerprint mismatch: file has " + fp + ", schema is " +
                            schema.fingerprint());
            }
            ds.schema_fingerprint = fp;
            header_seen = true;
            return;
        }
        if (line.empty() || line.front() == '#') {
            return;
        }
        std::size_t c1 = line.find(',');
        if (c1 == std::string_view::npos) {
            fail_at(origin, line_no, "expected 'app_id,label,<indices>'");
        }
        std::size_t c2 = line.find(',', c1 + 1);
        if (c2 == std::string_view::npos) {
            fail_at(origin, line_no, "expected 'app_id,label,<indices>'");
        }
        FeatureVector v;
        v.app_id = std::string(trim(line.substr(0, c1)));
        if (v.app_id.empty()) {
            fail_at(origin, line_no, "empty app_id");
        }
        std::string_view label_token = trim(line.substr(c1 + 1, c2 - c1 - 1));
        if (label_token == "benign") {
            v.label = Label::benign;
        } else if (label_token == "malware") {
            v.label = Label::malware;
        } else if (label_token == "unlabeled") {
            v.label = std::nullopt;
        } else {
            fail_at(origin, line_no, "unknown label token '" + std::string(label_token) + "'");
        }
        v.bits.assign(schema.size(), 0);
        std::string_view rest = line.substr(c2 + 1);
        std::size_t pos = 0;
        while (pos < rest.size()) {
            while (pos < rest.size() && (rest[pos] == ' ' || rest[pos] == '\t')) {
                ++pos;
            }
            std::size_t end = pos;
            while (end < rest.size() && rest[end] != ' ' && rest[end] != '\t') {
                ++end;
            }
            if (end == pos) {
                break;
            }
            std::string_view token = rest.substr(pos, end - pos);
            auto idx = parse_index(token);
            if (!idx) {
                fail_at(origin, line_no,
                        "feature entry '" + std::string(token) + "' is not a nonnegative integer");
            }
            if (*idx >= schema.size()) {
                fail_at(origin, line_no,
                        "feature index " + std::to_string(*idx) + " out of range for schema of size " +
                            std::to_string(schema.size()));
            }
            if (v.bits[*idx] != 0) {
                fail_at(origin, line_no,
                        "feature index " + std::to_string(*idx) +
                            " listed twice; bit value would exceed 1");
            }
            v.bits[*idx] = 1;
            pos = end;
        }
        ds.samples.push_back(std::move(v));
    });
    if (!header_seen) {
        throw Error(origin + ": empty dataset file (missing '#schema=' header)");
    }
    return ds;
}

Dataset parse_dataset(const std::string& path, const FeatureSchema& schema) {
    return parse_dataset_text(read_file(path), schema, path);
}

std::string serialize_dataset(const Dataset& ds) {
    std::string out = "#schema=" + ds.schema_fingerprint + "\n";
    for (const auto& v : ds.samples) {
        out += v.app_id;
        out += ',';
        out += v.label ? to_string(*v.label) : std::string_view("unlabeled");
        out += ',';
        bool first = true;
        for (std::size_t i = 0; i < v.bits.size(); ++i) {
            if (!v.bits[i]) {
                continue;
            }
            if (!first) {
                out += ' ';
            }
            out += std::to_string(i);
            first = false;
        }
        out += '\n';
    }
    return out;
}

void write_dataset(const Dataset& ds, const std::string& path) {
    write_file(path, serialize_dataset(ds));
}

FeatureVector nullify(const FeatureVector& v, std::span<const std::size_t> indices) {
    for (std::size_t i : indices) {
        if (i >= v.bits.size()) {
            throw Error("nullify: feature index " + std::to_string(i) +
                        " out of range for vector of length " + std::to_string(v.bits.size()));
        }
    }
    FeatureVector out = v;
    for (std::size_t i : indices) {
        out.bits[i] = 0;
    }
    return out;
}

}  // namespace mdet
