#include "cdrforge/learn.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "cdrforge/errors.hpp"

namespace cdrforge {

const TransferEntry& TransferMatrix::at(std::string_view train, std::string_view eval, Task task) const {
    for (const auto& e : entries)
        if (e.train_context == train && e.eval_context == eval && e.task == task)
            return e;
    throw std::out_of_range("no transfer entry " + std::string(train) + " -> " + std::string(eval) + " for " +
                            std::string(to_string(task)));
}

TransferMatrix transfer_evaluate(const std::map<ModelKey, TrainedModel>& models,
                                 const std::map<ModelKey, LabeledData>& datasets, std::span<const Task> tasks) {
    TransferMatrix out;
    out.tasks.assign(tasks.begin(), tasks.end());
    std::set<std::string> contexts;
    for (const auto& [key, model] : models)
        contexts.insert(key.first);
    for (const auto& [key, data] : datasets)
        contexts.insert(key.first);
    out.contexts.assign(contexts.begin(), contexts.end());

    const std::vector<std::string>* reference = nullptr;
    for (const auto& [key, model] : models) {
        if (!reference)
            reference = &model.feature_names;
        else if (model.feature_names != *reference)
            throw FeatureMismatch("model for " + key.first + " uses a different feature list");
    }
    for (const auto& [key, data] : datasets)
        if (reference && data.x.feature_names() != *reference)
            throw FeatureMismatch("dataset for " + key.first + " uses a different feature list");

    for (auto task : tasks) {
        for (const auto& train : out.contexts) {
            auto m = models.find({train, task});
            if (m == models.end())
                throw std::invalid_argument("no model for " + train + " / " + std::string(to_string(task)));
            for (const auto& eval : out.contexts) {
                auto d = datasets.find({eval, task});
                if (d == datasets.end())
                    throw std::invalid_argument("no held-out data for " + eval + " / " +
                                                std::string(to_string(task)));
                auto probs = predict_proba(m->second, d->second.x);
                out.entries.push_back(
                    {train, eval, task, accuracy(probs, d->second.y), naive_baseline(d->second.y)});
            }
        }
    }
    return out;
}

} // namespace cdrforge
