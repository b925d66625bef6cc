#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "csd/classifiers/arch.hpp"
#include "csd/classifiers/model.hpp"
#include "csd/data/normalize.hpp"
#include "csd/numerics/rng.hpp"

namespace csd::clf {

struct TrainingFingerprint {
    std::uint64_t seed = 0;
    std::string config_hash;
    bool operator==(const TrainingFingerprint&) const = default;
};

// One of the three severity classifiers: architecture plus parameters.
class Classifier final : public Model {
public:
    struct Param {
        std::string name;
        num::Tensor value;
    };

    Classifier() = default;
    Classifier(ArchSpec spec, std::vector<Param> params);

    const ArchSpec& spec() const noexcept { return spec_; }
    std::vector<Param>& params() noexcept { return params_; }
    const std::vector<Param>& params() const noexcept { return params_; }
    std::size_t parameter_count() const;

    std::optional<data::NormalizationStats> normalization;
    TrainingFingerprint training;

    std::size_t timestep() const override { return spec_.timestep; }
    std::size_t n_features() const override { return spec_.n_features; }
    std::size_t n_classes() const override { return spec_.n_classes; }

    num::Var logits(num::Tape& tape, const num::Var& x) const override;
    num::VarD logits(num::TapeD& tape, const num::VarD& x) const override;

    bool has_dense_head() const override { return true; }
    num::Tensor penultimate(const num::Tensor& batch) const override;
    const num::Tensor& head_weight() const override;
    const num::Tensor& head_bias() const override;

    std::string fingerprint() const override;

    // Full forward pass with caller-supplied parameter handles (leaves when
    // training, constants otherwise). `rng` enables dropout; `penult`, when
    // non-null, receives the penultimate activations.
    template <typename T>
    num::BasicVar<T> forward(num::BasicTape<T>& tape, const num::BasicVar<T>& x,
                             const std::vector<num::BasicVar<T>>& params, num::SeededRng* rng,
                             num::BasicVar<T>* penult = nullptr) const;

private:
    ArchSpec spec_;
    std::vector<Param> params_;
};

// Deterministic fan-in scaled uniform initialisation. Throws ConfigError on an invalid spec.
Classifier build(const ArchSpec& spec, std::uint64_t seed);

inline constexpr std::uint32_t kModelFormatVersion = 1;

void save(const Classifier& model, std::ostream& out);
void save(const Classifier& model, const std::filesystem::path& path);
Classifier load(std::istream& in);
Classifier load(const std::filesystem::path& path);
// Loads and checks the descriptor's family; ArchitectureError on mismatch.
Classifier load_expecting(const std::filesystem::path& path, Family expected);

}  // namespace csd::clf
