#include "mdet/explainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mdet/digest.hpp"
#include "mdet/rng.hpp"

namespace mdet {

namespace {

// In-place Cholesky solve of the SPD system A x = b (A row-major n x n).
// With a positive ridge on the coefficient block and positive total weight
// the system here is always positive definite; a breakdown means the inputs
// violated that contract.
std::vector<double> solve_spd(std::vector<double> a, std::vector<double> b, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (std::size_t p = 0; p < j; ++p) {
            d -= a[j * n + p] * a[j * n + p];
        }
        if (!(d > 0.0)) {
            throw Error("surrogate regression: normal equations not positive definite");
        }
        const double ljj = std::sqrt(d);
        a[j * n + j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (std::size_t p = 0; p < j; ++p) {
                s -= a[i * n + p] * a[j * n + p];
            }
            a[i * n + j] = s / ljj;
        }
    }
    // forward then backward substitution
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t p = 0; p < i; ++p) {
            s -= a[i * n + p] * b[p];
        }
        b[i] = s / a[i * n + i];
    }
    for (std::size_t ii = n; ii > 0; --ii) {
        const std::size_t i = ii - 1;
        double s = b[i];
        for (std::size_t p = i + 1; p < n; ++p) {
            s -= a[p * n + i] * b[p];
        }
        b[i] = s / a[i * n + i];
    }
    return b;
}

}  // namespace

void ExplainConfig::validate() const {
    if (num_samples == 0) {
        throw Error("num_samples must be positive");
    }
    if (top_m == 0) {
        throw Error("top_m must be positive");
    }
    if (!(ridge_penalty >= 0.0)) {
        throw Error("ridge_penalty must be nonnegative");
    }
}

std::string ExplainConfig::digest() const {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "num_samples=%zu;kernel_width=%a;top_m=%zu;ridge=%a;seed=%llu",
                  num_samples, kernel_width, top_m, ridge_penalty,
                  static_cast<unsigned long long>(seed));
    return hex16(fnv1a64(buf));
}

Explanation explain(const Model& m, const FeatureVector& v, const ExplainConfig& cfg) {
    cfg.validate();
    if (cfg.top_m > m.input_width) {
        throw Error("top_m exceeds the schema size");
    }
    if (v.bits.size() != m.input_width) {
        throw Error("feature vector length " + std::to_string(v.bits.size()) +
                    " does not match model input width " + std::to_string(m.input_width));
    }

    const std::vector<std::size_t> active = v.active_indices();
    const std::size_t k = active.size();
    if (k == 0) {
        throw Error("cannot explain '" + v.app_id + "': no active features to perturb");
    }
    if (cfg.num_samples < k + 1) {
        throw Error("num_samples (" + std::to_string(cfg.num_samples) +
                    ") must be at least active-feature count + 1 (" + std::to_string(k + 1) + ")");
    }
    const double kernel_width =
        cfg.kernel_width > 0.0 ? cfg.kernel_width : 0.75 * std::sqrt(static_cast<double>(k));

    Rng rng(derive_seed(cfg.seed, fnv1a64(v.app_id)));

    // Perturbations in the interpretable space: which active features were
    // kept. Stored for the residual pass.
    std::vector<std::vector<std::uint32_t>> kept(cfg.num_samples);
    std::vector<double> y(cfg.num_samples);
    std::vector<double> w(cfg.num_samples);
    std::vector<std::size_t> scratch;
    scratch.reserve(k);
    for (std::size_t s = 0; s < cfg.num_samples; ++s) {
        scratch.clear();
        auto& row = kept[s];
        row.clear();
        for (std::size_t j = 0; j < k; ++j) {
            if (!rng.bernoulli(0.5)) {  // survive zeroing
                row.push_back(static_cast<std::uint32_t>(j));
                scratch.push_back(active[j]);
            }
        }
        const double d = static_cast<double>(k - row.size());
        w[s] = std::exp(-(d * d) / (kernel_width * kernel_width));
        y[s] = predict_proba_on_indices(m, scratch);
    }

    // Weighted normal equations over [intercept, indicator columns].
    const std::size_t dim = k + 1;
    std::vector<double> gram(dim * dim, 0.0);
    std::vector<double> rhs(dim, 0.0);
    for (std::size_t s = 0; s < cfg.num_samples; ++s) {
        const double ws = w[s];
        const double wy = ws * y[s];
        gram[0] += ws;
        rhs[0] += wy;
        const auto& row = kept[s];
        for (std::size_t a : row) {
            const std::size_t ia = a + 1;
            gram[ia * dim] += ws;  // column vs intercept
            rhs[ia] += wy;
            for (std::size_t b : row) {
                gram[ia * dim + b + 1] += ws;
            }
        }
    }
    // mirror the intercept column and apply the ridge (coefficients only)
    for (std::size_t i = 1; i < dim; ++i) {
        gram[i] = gram[i * dim];
        gram[i * dim + i] += cfg.ridge_penalty;
    }
    const std::vector<double> beta = solve_spd(std::move(gram), rhs, dim);

    double ss_res = 0.0;
    double ss_tot = 0.0;
    double wsum = 0.0;
    double wmean = 0.0;
    for (std::size_t s = 0; s < cfg.num_samples; ++s) {
        wsum += w[s];
        wmean += w[s] * y[s];
    }
    wmean /= wsum;
    for (std::size_t s = 0; s < cfg.num_samples; ++s) {
        double fitted = beta[0];
        for (std::size_t a : kept[s]) {
            fitted += beta[a + 1];
        }
        ss_res += w[s] * (y[s] - fitted) * (y[s] - fitted);
        ss_tot += w[s] * (y[s] - wmean) * (y[s] - wmean);
    }

    Explanation e;
    e.app_id = v.app_id;
    e.intercept = beta[0];
    // ss_tot at rounding-noise scale means the target was constant: exact fit
    const bool constant_target = ss_tot <= wsum * 1e-20;
    e.surrogate_fit_r2 =
        constant_target ? 1.0 : std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0);
    e.contributions.reserve(k);
    for (std::size_t j = 0; j < k; ++j) {
        e.contributions.push_back({active[j], beta[j + 1]});
    }
    std::sort(e.contributions.begin(), e.contributions.end(),
              [](const Contribution& a, const Contribution& b) {
                  const double ma = std::fabs(a.weight);
                  const double mb = std::fabs(b.weight);
                  if (ma != mb) {
                      return ma > mb;
                  }
                  return a.feature < b.feature;
              });
    if (e.contributions.size() > cfg.top_m) {
        e.contributions.resize(cfg.top_m);
    }
    return e;
}

std::vector<std::size_t> benign_features_of(const Explanation& e) {
    std::vector<std::size_t> out;
    for (const auto& c : e.contributions) {
        if (c.weight < 0.0) {
            out.push_back(c.feature);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string to_csv(const Explanation& e, const FeatureSchema& schema) {
    std::string out;
    for (const auto& c : e.contributions) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), ",%.9g\n", c.weight);
        out += e.app_id;
        out += ',';
        out += schema.at(c.feature).qualified();
        out += buf;
    }
    return out;
}

}  // namespace mdet
