#include "csd/classifiers/train.hpp"

#include <cmath>
#include <numeric>

#include "csd/error.hpp"
#include "csd/numerics/adam.hpp"
#include "csd/numerics/ops.hpp"

namespace csd::clf {

void TrainConfig::validate() const
{
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (patience == 0) throw ConfigError("patience must be positive");
    if (patience > epochs) throw ConfigError("patience must not exceed epochs");
    if (clip_norm < 0.0) throw ConfigError("clip_norm must be non-negative");
}

LabeledSet to_labeled(std::span<const data::TimeSeriesWindow> windows)
{
    if (windows.empty()) return {};
    return {data::stack(windows), data::labels_of(windows)};
}

std::pair<double, double> loss_and_accuracy(const Model& model, const LabeledSet& set)
{
    if (set.size() == 0) throw ContractViolation("empty set");
    const num::Tensor z = logits(model, set.x);
    const std::size_t c = z.dim(1);
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t r = 0; r < set.size(); ++r) {
        const auto row = z.data().subspan(r * c, c);
        const int pred = argmax(row);
        double hi = row[static_cast<std::size_t>(pred)], total = 0.0;
        for (float v : row) total += std::exp(static_cast<double>(v) - hi);
        loss += hi + std::log(total) - row[static_cast<std::size_t>(set.y[r])];
        correct += pred == set.y[r];
    }
    const double n = static_cast<double>(set.size());
    return {loss / n, static_cast<double>(correct) / n};
}

TrainHistory train(Classifier& model, const LabeledSet& train_set, const LabeledSet& val_set, const TrainConfig& cfg)
{
    cfg.validate();
    if (train_set.size() == 0 || val_set.size() == 0) throw ContractViolation("training needs nonempty train and val splits");
    model.check_batch(train_set.x);
    model.check_batch(val_set.x);

    const std::size_t n = train_set.size();
    const std::size_t per = train_set.x.dim(1) * train_set.x.dim(2);
    auto& params = model.params();

    num::AdamState adam(num::AdamConfig{cfg.learning_rate});
    num::SeededRng order_rng = num::SeededRng::derive(cfg.seed, 1);
    num::SeededRng dropout_rng = num::SeededRng::derive(cfg.seed, 2);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainHistory history;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Classifier::Param> best_params = params;
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t b = std::min(cfg.batch_size, n - start);
            num::Tensor xb(num::Shape{b, train_set.x.dim(1), train_set.x.dim(2)});
            std::vector<int> yb(b);
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t src = order[start + i];
                std::copy_n(train_set.x.vec().begin() + static_cast<long>(src * per), per,
                            xb.vec().begin() + static_cast<long>(i * per));
                yb[i] = train_set.y[src];
            }

            num::Tape tape;
            std::vector<num::Var> leaves;
            leaves.reserve(params.size());
            for (const auto& p : params) leaves.push_back(tape.leaf(p.value));
            auto z = model.forward(tape, tape.constant(std::move(xb)), leaves, &dropout_rng);
            auto loss = num::cross_entropy(z, yb);
            const double lv = loss.value().item();
            if (!std::isfinite(lv))
                throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch),
                                      static_cast<int>(epoch));
            loss_sum += lv * static_cast<double>(b);
            const std::size_t c = z.value().dim(1);
            for (std::size_t i = 0; i < b; ++i) correct += argmax(z.value().data().subspan(i * c, c)) == yb[i];

            const auto grads = tape.backward(loss);
            std::vector<num::Tensor> g;
            g.reserve(leaves.size());
            for (const auto& leaf : leaves) g.push_back(grads[leaf]);
            if (cfg.clip_norm > 0.0) {
                double sq = 0.0;
                for (const auto& t : g)
                    for (float v : t.vec()) sq += static_cast<double>(v) * v;
                const double norm = std::sqrt(sq);
                if (norm > cfg.clip_norm)
                    for (auto& t : g)
                        for (auto& v : t.vec()) v = static_cast<float>(v * (cfg.clip_norm / norm));
            }
            std::vector<num::Tensor*> ptrs;
            std::vector<const num::Tensor*> gptrs;
            for (std::size_t i = 0; i < params.size(); ++i) {
                ptrs.push_back(&params[i].value);
                gptrs.push_back(&g[i]);
            }
            num::adam_step(ptrs, gptrs, adam);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(n);
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
        std::tie(rec.val_loss, rec.val_accuracy) = loss_and_accuracy(model, val_set);
        if (!std::isfinite(rec.val_loss))
            throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch),
                                  static_cast<int>(epoch));
        history.epochs.push_back(rec);

        if (rec.val_loss < best_val) {
            best_val = rec.val_loss;
            best_params = params;
            history.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            history.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    params = std::move(best_params);
    return history;
}

}  // namespace csd::clf
