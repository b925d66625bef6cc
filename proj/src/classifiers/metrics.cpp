#include "csd/classifiers/metrics.hpp"

#include "csd/error.hpp"

namespace csd::clf {

ClassificationMetrics compute_metrics(std::span<const int> labels, std::span<const int> predictions,
                                      std::size_t n_classes)
{
    if (labels.empty()) throw ContractViolation("cannot score an empty set");
    if (labels.size() != predictions.size())
        throw ContractViolation("label and prediction counts differ");
    ClassificationMetrics m;
    m.total = labels.size();
    m.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i], p = predictions[i];
        if (y < 0 || p < 0 || static_cast<std::size_t>(y) >= n_classes || static_cast<std::size_t>(p) >= n_classes)
            throw ContractViolation("class index out of range at sample " + std::to_string(i));
        ++m.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(p)];
    }
    std::size_t correct = 0;
    m.precision.assign(n_classes, 0.0);
    m.recall.assign(n_classes, 0.0);
    m.f1.assign(n_classes, 0.0);
    m.support.assign(n_classes, 0);
    for (std::size_t c = 0; c < n_classes; ++c) {
        std::size_t predicted = 0;
        for (std::size_t r = 0; r < n_classes; ++r) {
            m.support[c] += m.confusion[c][r];
            predicted += m.confusion[r][c];
        }
        const double tp = static_cast<double>(m.confusion[c][c]);
        correct += m.confusion[c][c];
        if (m.support[c] == 0) m.absent_classes.push_back(static_cast<int>(c));
        m.precision[c] = predicted ? tp / static_cast<double>(predicted) : 0.0;
        m.recall[c] = m.support[c] ? tp / static_cast<double>(m.support[c]) : 0.0;
        const double denom = m.precision[c] + m.recall[c];
        m.f1[c] = denom > 0.0 ? 2.0 * m.precision[c] * m.recall[c] / denom : 0.0;
        m.macro_precision += m.precision[c] / static_cast<double>(n_classes);
        m.macro_recall += m.recall[c] / static_cast<double>(n_classes);
        m.macro_f1 += m.f1[c] / static_cast<double>(n_classes);
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(m.total);
    return m;
}

ClassificationMetrics evaluate(const Model& model, const LabeledSet& set)
{
    if (set.size() == 0) throw ContractViolation("cannot evaluate on an empty set");
    const auto pred = predict_labels(model, set.x);
    return compute_metrics(set.y, pred, model.n_classes());
}

}  // namespace csd::clf
