#pragma once

// Feature coordinate system for app vectors, the dataset container, and the
// text formats they travel in.
//
// Schema file: UTF-8 text, one feature per line, "<Category>:<Name>".
// Line order defines index order. Surrounding whitespace is trimmed; blank
// lines and lines starting with '#' are skipped. A feature's identity is its
// qualified name "Category:Name", which must be unique within a schema.
//
// Dataset file: UTF-8 text. First line "#schema=<fingerprint-hex>", then one
// row per app: "app_id,label,<set feature indices separated by spaces>".
// label is one of benign, malware, unlabeled. The sparse encoding lists the
// indices of the 1-bits; real vectors are mostly zero.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mdet {

// Domain and I/O failures across the library. Messages for parse failures
// carry "path:line:".
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class FeatureCategory {
    Permission,
    Package,
    Hardware,
    Intent,
    Class,
    Leak,
    Behavior,
};

inline constexpr std::size_t kCategoryCount = 7;
inline constexpr std::size_t kDefaultSchemaSize = 694;

std::string_view to_string(FeatureCategory c);
std::optional<FeatureCategory> category_from(std::string_view token);

struct FeatureDescriptor {
    std::string name;  // unqualified, e.g. "CAMERA"
    FeatureCategory category = FeatureCategory::Permission;
    std::size_t index = 0;

    // "Permission:CAMERA" — the identity used in files and rank listings.
    std::string qualified() const;
};

// Ordered, immutable feature list. The fingerprint is a content hash of the
// ordered qualified names, so index i means the same feature wherever the
// fingerprint matches.
class FeatureSchema {
public:
    FeatureSchema() = default;

    // Validates uniqueness and assigns indices 0..n-1 in the given order.
    static FeatureSchema from_descriptors(std::vector<FeatureDescriptor> features);

    std::size_t size() const { return features_.size(); }
    const FeatureDescriptor& at(std::size_t i) const { return features_.at(i); }
    const std::vector<FeatureDescriptor>& features() const { return features_; }
    const std::string& fingerprint() const { return fingerprint_; }

    std::optional<std::size_t> index_of(std::string_view qualified_name) const;

private:
    std::vector<FeatureDescriptor> features_;
    std::string fingerprint_;
    std::unordered_map<std::string, std::size_t> by_qualified_name_;
};

enum class Label { benign, malware };

std::string_view to_string(Label l);

struct FeatureVector {
    std::string app_id;
    std::vector<std::uint8_t> bits;  // every element is exactly 0 or 1
    std::optional<Label> label;

    std::size_t popcount() const;
    std::vector<std::size_t> active_indices() const;

    bool operator==(const FeatureVector&) const = default;
};

// Samples sharing one schema fingerprint. Labels are optional at this level;
// operations that need ground truth (training, metric computation) enforce
// their presence themselves.
struct Dataset {
    std::string schema_fingerprint;
    std::vector<FeatureVector> samples;

    bool operator==(const Dataset&) const = default;
};

// The bundled 694-feature default: the twenty concrete Android feature names
// that seed the benign profile first (indices 0..19), synthetic placeholders
// filling each category after them, and the analysis-derived Behavior flag
// last. Real extractor output replaces this with its own schema file.
FeatureSchema default_schema();

FeatureSchema load_schema(const std::string& path);
FeatureSchema parse_schema_text(std::string_view text, const std::string& origin);
std::string serialize_schema(const FeatureSchema& schema);
void write_schema(const FeatureSchema& schema, const std::string& path);

Dataset parse_dataset(const std::string& path, const FeatureSchema& schema);
Dataset parse_dataset_text(std::string_view text, const FeatureSchema& schema,
                           const std::string& origin);
std::string serialize_dataset(const Dataset& ds);
void write_dataset(const Dataset& ds, const std::string& path);

// Returns a copy of v with the bits at `indices` cleared. Bits outside
// `indices` are untouched; clearing an already-absent feature is a no-op.
// app_id and label carry over. Throws on an out-of-range index.
FeatureVector nullify(const FeatureVector& v, std::span<const std::size_t> indices);

}  // namespace mdet
