#include "csd/explain/corpus.hpp"

#include <algorithm>

#include "csd/error.hpp"

namespace csd::xai {

std::vector<XaiSignature> signature_corpus(const clf::Model& model, std::span<const data::TimeSeriesWindow> windows,
                                           const BackgroundSet& background,
                                           const std::vector<attack::AttackConfig>& attacks, const std::string& split,
                                           SignatureMode mode, CorpusStats* stats)
{
    if (attacks.empty()) throw ConfigError("the signature corpus needs at least one attack");
    CorpusStats local;
    local.windows = windows.size();
    local.attempted.assign(attacks.size(), 0);
    local.succeeded.assign(attacks.size(), 0);
    std::vector<XaiSignature> out;
    if (windows.empty()) {
        if (stats) *stats = local;
        return out;
    }

    const num::Tensor clean = data::stack(windows);
    const auto predicted = clf::predict_labels(model, clean);
    const auto benign = signatures(model, clean, background, mode);

    // Adversarial partners per window, filled attack by attack.
    std::vector<std::optional<XaiSignature>> partner(windows.size());
    for (std::size_t k = 0; k < attacks.size(); ++k) {
        std::vector<std::size_t> idx;
        for (std::size_t i = k; i < windows.size(); i += attacks.size()) idx.push_back(i);
        if (idx.empty()) continue;
        local.attempted[k] = idx.size();
        std::vector<int> reference;
        for (std::size_t i : idx) reference.push_back(predicted[i]);
        const auto crafted = attack::craft(model, data::stack(windows, idx), reference, attacks[k]);

        std::vector<std::size_t> hit;
        std::vector<data::TimeSeriesWindow> adv;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            if (!crafted[j].success) continue;
            hit.push_back(idx[j]);
            adv.push_back({crafted[j].values, windows[idx[j]].label, windows[idx[j]].source, windows[idx[j]].end_frame});
        }
        local.succeeded[k] = hit.size();
        if (hit.empty()) continue;
        auto sigs = signatures(model, data::stack(adv), background, mode);
        for (std::size_t j = 0; j < hit.size(); ++j) {
            sigs[j].window_id = windows[hit[j]].id() + "/" + attack::to_string(attacks[k].kind);
            sigs[j].label = 1;
            partner[hit[j]] = std::move(sigs[j]);
        }
    }

    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (!partner[i]) continue;
        XaiSignature b = benign[i];
        b.window_id = windows[i].id();
        b.label = 0;
        b.split = split;
        partner[i]->split = split;
        out.push_back(std::move(b));
        out.push_back(std::move(*partner[i]));
    }
    if (stats) *stats = local;
    return out;
}

}  // namespace csd::xai
