#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "csd/classifiers/model.hpp"
#include "csd/numerics/tensor.hpp"

namespace csd::xai {

inline constexpr std::size_t kDefaultBackgroundSize = 100;

// Reference windows against which attributions are measured.
struct BackgroundSet {
    num::Tensor windows;                  // [K, T, N]
    num::Tensor mean_window;              // [T, N], masking baseline for input attributions
    std::vector<float> mean_penultimate;  // h-bar, empty if the model has no dense head

    std::size_t size() const { return windows.empty() ? 0 : windows.dim(0); }
};

// Draws min(k, B) windows without replacement from a [B, T, N] batch of benign
// windows. Throws ContractViolation on an empty pool, ConfigError on k == 0.
BackgroundSet make_background(const clf::Model& model, const num::Tensor& benign, std::size_t k = kDefaultBackgroundSize,
                              std::uint64_t seed = 0);

enum class SignatureMode {
    AllClasses,      // P x C values, class-major
    PredictedClass,  // P values for the argmax class only
};

std::string to_string(SignatureMode m);
SignatureMode parse_signature_mode(const std::string& s);  // "all-classes" | "predicted-class"

struct XaiSignature {
    std::vector<float> values;
    std::string model_fingerprint;
    std::string window_id;
    int label = 0;  // 0 benign, 1 adversarial
    std::string split;
    bool self_labeled = false;
};

// Fingerprint recorded on signatures: the model's fingerprint plus the
// signature definition, so signatures of different kinds never mix.
std::string signature_fingerprint(const clf::Model& model, SignatureMode mode);

// Exact Shapley values of the penultimate units toward each logit:
// phi[c*P + j] = W[j, c] * (h_j - hbar_j). Throws ArchitectureError when the
// model has no dense head. Label, id and split are left for the caller.
XaiSignature signature(const clf::Model& model, const num::Tensor& window, const BackgroundSet& background,
                       SignatureMode mode = SignatureMode::AllClasses);
// Batched form for a [B, T, N] tensor; row i of the result matches signature() on window i.
std::vector<XaiSignature> signatures(const clf::Model& model, const num::Tensor& batch,
                                     const BackgroundSet& background, SignatureMode mode = SignatureMode::AllClasses);

enum class ShapMode { Auto, Exact, Sampled };

inline constexpr std::size_t kExactPlayerLimit = 12;

struct AttributionVector {
    std::vector<double> values;  // one per feature column
    std::vector<double> standard_error;
    int explained_class = 0;
    std::size_t permutations = 0;  // 0 for exact enumeration
    bool exact = false;
};

// Shapley values of the feature columns for v(S) = logit[cls] of the window with
// columns outside S replaced by the background mean column. Auto enumerates all
// subsets when N <= 12 and otherwise samples n_perm permutations.
// Throws ConfigError when n_perm < 1.
AttributionVector shap_input_sampled(const clf::Model& model, const num::Tensor& window,
                                     const BackgroundSet& background, int cls, std::size_t n_perm,
                                     std::uint64_t seed, ShapMode mode = ShapMode::Auto);

struct FeatureImportance {
    std::size_t feature = 0;  // zero-based column index
    double mean_abs = 0.0;
};

// Features ranked by mean |phi|, descending, ties toward the lower index.
std::vector<FeatureImportance> global_importance(const std::vector<AttributionVector>& attributions);
std::vector<FeatureImportance> global_importance(const std::vector<std::vector<double>>& attributions);

}  // namespace csd::xai
