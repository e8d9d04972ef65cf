#include "pathonet/train.hpp"

#include <numeric>

#include "pathonet/rng.hpp"

namespace pathonet {

std::vector<EpochStats> train(Model<float>& model, const PatchSet& dataset,
                              const TrainingConfig& cfg) {
    if (dataset.count() == 0) throw DataError("train: empty dataset");
    if (cfg.lr < 0) throw ConfigError("train: negative learning rate");
    if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (dataset.channels != model.config.in_channels ||
        dataset.patch_size != model.config.in_height ||
        dataset.patch_size != model.config.in_width)
        throw ShapeError("train: dataset patches (" + std::to_string(dataset.channels) + "," +
                         std::to_string(dataset.patch_size) + ") do not match model input (" +
                         std::to_string(model.config.in_channels) + "," +
                         std::to_string(model.config.in_height) + ")");

    const std::vector<std::string> names = model.trainable_names();
    AdamState<float> adam;
    adam.lr = cfg.lr;

    Rng rng(cfg.seed);
    std::vector<std::int64_t> order(static_cast<std::size_t>(dataset.count()));
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochStats> log;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) rng.shuffle(order);

        double loss_sum = 0;
        std::int64_t correct = 0, seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::int64_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
            Tensor<float> batch = dataset.gather(idx);
            std::vector<int> labels(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i)
                labels[i] = dataset.labels[static_cast<std::size_t>(idx[i])];

            ForwardCache<float> cache;
            Tensor<float> probs = forward_train(model, batch, cache);
            BceResult<float> loss = bce_loss(probs, labels);
            GradientSet<float> grads = backward(model, cache, loss.grad_logits);

            std::vector<Tensor<float>*> params;
            std::vector<const Tensor<float>*> gptrs;
            params.reserve(names.size());
            gptrs.reserve(names.size());
            for (std::size_t i = 0; i < names.size(); ++i) {
                params.push_back(&model.param(names[i]));
                gptrs.push_back(&grads.grads[i].second);
            }
            adam_step(params, gptrs, adam);

            loss_sum += loss.loss * static_cast<double>(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const int pred = probs.at2(static_cast<int>(i), 1) >
                                         probs.at2(static_cast<int>(i), 0)
                                     ? 1
                                     : 0;
                correct += pred == labels[i];
            }
            seen += static_cast<std::int64_t>(idx.size());
        }
        log.push_back({epoch + 1, loss_sum / static_cast<double>(seen),
                       static_cast<double>(correct) / static_cast<double>(seen)});
    }
    model.config.trained_epochs += cfg.epochs;
    return log;
}

std::vector<float> score_patches(const Model<float>& model, const PatchSet& patches,
                                 int batch_size) {
    std::vector<float> scores;
    scores.reserve(static_cast<std::size_t>(patches.count()));
    for (std::int64_t start = 0; start < patches.count(); start += batch_size) {
        const std::int64_t end = std::min(patches.count(), start + batch_size);
        std::vector<std::int64_t> idx;
        for (std::int64_t i = start; i < end; ++i) idx.push_back(i);
        Tensor<float> probs = forward(model, patches.gather(idx));
        for (int i = 0; i < probs.extent(0); ++i) scores.push_back(probs.at2(i, 1));
    }
    return scores;
}

} // namespace pathonet
