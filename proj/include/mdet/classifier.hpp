#pragma once

// Single-hidden-layer feed-forward classifier over binary feature vectors:
// input -> hidden (ReLU) -> 2-way softmax. Output class 0 is benign, class 1
// is malware; predict_proba reports the malware-class probability.
//
// Training is plain mini-batch SGD on softmax cross-entropy and runs
// single-threaded so that identical (data, config) pairs produce
// bit-identical models. A trained Model is immutable data and safe to share
// across prediction threads.
//
// A bare FeatureVector carries no schema fingerprint, so single-vector entry
// points check the vector length against the model; fingerprints are
// enforced wherever a Dataset (which records one) is involved.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdet/feature_model.hpp"

namespace mdet {

struct TrainMeta {
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    double learning_rate = 0.0;
    double final_loss = 0.0;
};

struct Model {
    std::string schema_fingerprint;
    std::size_t input_width = 0;
    std::size_t hidden_width = 0;
    std::vector<double> w1;  // input_width x hidden_width, feature-major so the
                             // sparse forward pass reads contiguous rows
    std::vector<double> b1;  // hidden_width
    std::vector<double> w2;  // 2 x hidden_width, row-major
    std::vector<double> b2;  // 2
    TrainMeta meta;
};

// Dimensional consistency and finiteness of every parameter.
void validate_model(const Model& m);

struct TrainConfig {
    std::size_t hidden_width = 200;
    std::size_t epochs = 30;
    double learning_rate = 0.05;   // valid range (0, 100]
    std::size_t batch_size = 128;
    double l2_penalty = 0.0;
    bool class_weighted = false;   // weight classes by inverse frequency
    std::uint64_t seed = 0;

    void validate() const;
};

struct DecisionThreshold {
    double delta = 0.5;  // label is malware when P(malware) >= delta

    void validate() const;
};

// Mini-batch SGD for `cfg.epochs` epochs. Requires a fully labeled dataset
// with both classes present. Throws if the running loss stops being finite,
// naming the epoch.
Model train(const Dataset& data, const TrainConfig& cfg);

// Softmax malware-class probability, in [0, 1]. Pure.
double predict_proba(const Model& m, const FeatureVector& v);

// Same forward pass fed directly with the indices of the 1-bits; the sparse
// path the explainer's perturbation loop uses.
double predict_proba_on_indices(const Model& m, std::span<const std::size_t> active);

// 2 * predict_proba - 1, the [-1, 1] score used for visualization (-1 fully
// benign, +1 fully malware).
double maliciousness(const Model& m, const FeatureVector& v);

Label classify(const Model& m, const FeatureVector& v, DecisionThreshold t);

// Loss surface hooks. The training loop is built on these and the tests
// difference them numerically against the analytic gradients.
struct Gradients {
    double loss = 0.0;
    std::vector<double> w1, b1, w2, b2;  // same shapes as the model
};

double dataset_loss(const Model& m, const Dataset& data, double l2_penalty,
                    bool class_weighted = false);
Gradients dataset_gradient(const Model& m, const Dataset& data, double l2_penalty,
                           bool class_weighted = false);

// Versioned binary container: magic, format version, schema fingerprint,
// dimensions, little-endian float64 parameter blocks, then the training
// metadata as a key-value text block. save/load round-trips are byte-exact.
std::string serialize_model(const Model& m);
Model deserialize_model(std::string_view bytes, const std::string& origin);
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

// hex16 digest of the serialized form; recorded in reports and manifests.
std::string model_digest(const Model& m);

}  // namespace mdet
