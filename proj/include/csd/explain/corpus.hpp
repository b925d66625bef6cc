#pragma once

#include <span>
#include <string>
#include <vector>

#include "csd/attacks/attack.hpp"
#include "csd/data/window.hpp"
#include "csd/explain/shap.hpp"

namespace csd::xai {

struct CorpusStats {
    std::size_t windows = 0;
    std::vector<std::size_t> attempted;  // per attack config
    std::vector<std::size_t> succeeded;
};

// Labeled signature pairs for detector training. Window i is attacked with
// attacks[i % attacks.size()], away from the model's clean prediction. Only
// successful attacks contribute, each as a (benign, adversarial) pair, so
// the corpus is balanced. Ids are the window id, with "/<kind>" appended on
// the adversarial record.
std::vector<XaiSignature> signature_corpus(const clf::Model& model, std::span<const data::TimeSeriesWindow> windows,
                                           const BackgroundSet& background,
                                           const std::vector<attack::AttackConfig>& attacks, const std::string& split,
                                           SignatureMode mode = SignatureMode::AllClasses,
                                           CorpusStats* stats = nullptr);

}  // namespace csd::xai
